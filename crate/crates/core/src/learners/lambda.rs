use rand::seq::SliceRandom;
use rand::Rng;

use super::LearnerConfig;
use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::metric::FeatureVec;
use crate::solver::SolverConfig;

const MAX_SPLIT_ATTEMPTS: usize = 20;

/// A learner whose L1 weight is picked by held-out log-likelihood.
pub trait LambdaFit: Sized {
    fn fit(
        features: &[FeatureVec],
        labels: &[LabeledExample],
        m: usize,
        lambda: f64,
        cfg: &SolverConfig,
    ) -> Result<Self>;

    /// `Σ_{(x,c) ∈ held} ln P(c | x, train)` for a model fitted on `train`.
    fn validation_log_lik(
        &self,
        features: &[FeatureVec],
        train: &[LabeledExample],
        held: &[LabeledExample],
    ) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct LambdaSelection<F> {
    pub lambda: f64,
    /// Refit on every labelled example with the chosen λ.
    pub model: F,
    pub candidates: Vec<LambdaCandidate>,
}

fn class_set(labels: &[LabeledExample], m: usize) -> Vec<bool> {
    let mut seen = vec![false; m];
    for l in labels {
        seen[l.class] = true;
    }
    seen
}

/// Draws a training/validation split where the training part covers every
/// class present and the validation part has at least two classes.
fn split<R: Rng + ?Sized>(
    labels: &[LabeledExample],
    m: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
    let all = class_set(labels, m);
    let n_train = (fraction * labels.len() as f64).round() as usize;
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        let mut shuffled = labels.to_vec();
        shuffled.shuffle(rng);
        let held = shuffled.split_off(n_train.min(shuffled.len()));
        let train = shuffled;
        let held_classes = class_set(&held, m).iter().filter(|s| **s).count();
        if class_set(&train, m) == all && held_classes >= 2 {
            return Ok((train, held));
        }
    }
    Err(Error::invalid(format!(
        "could not draw a training/validation split covering the classes in \
         {MAX_SPLIT_ATTEMPTS} attempts ({} labelled examples)",
        labels.len()
    )))
}

/// Fits one model per grid value on a random split, keeps the λ with the best
/// validation log-likelihood (ties go to the earlier, smaller value) and refits
/// on all of `labels`.
pub fn select_lambda<F: LambdaFit, R: Rng + ?Sized>(
    features: &[FeatureVec],
    labels: &[LabeledExample],
    m: usize,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<LambdaSelection<F>> {
    if cfg.lambda_grid.is_empty() {
        return Err(Error::invalid("empty λ grid"));
    }
    if !(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0) {
        return Err(Error::invalid("split fraction must lie in (0, 1)"));
    }
    super::check_labels(features, labels, m)?;
    let mut grid = cfg.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);

    let (train, held) = split(labels, m, cfg.split_fraction, rng)?;
    let mut candidates = Vec::with_capacity(grid.len());
    let mut best: Option<LambdaCandidate> = None;
    for &lambda in &grid {
        let model = F::fit(features, &train, m, lambda, &cfg.solver)?;
        let score = model.validation_log_lik(features, &train, &held)?;
        let cand = LambdaCandidate { lambda, score };
        if best.is_none_or(|b| score > b.score) {
            best = Some(cand);
        }
        candidates.push(cand);
    }
    let lambda = best.expect("grid is nonempty").lambda;
    let model = F::fit(features, labels, m, lambda, &cfg.solver)?;
    Ok(LambdaSelection { lambda, model, candidates })
}
