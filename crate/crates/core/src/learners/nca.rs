//! Diagonal neighbourhood component analysis with an L1 penalty.
//!
//! A point is assigned class `c` with probability proportional to the summed
//! `exp(−d_r²)` of the reference points in `c`. Fitting maximizes the sum of
//! leave-one-out log-probabilities of the true classes minus `λ‖r‖₁` over
//! `r ≥ 0`.

use serde::{Deserialize, Serialize};

use super::lambda::LambdaFit;
use super::{check_labels, dot, log_floor, PairDiffs, PROB_FLOOR};
use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::metric::{weighted_sq_dist, FeatureVec, MetricWeights};
use crate::solver::{minimize, project_nonneg, Objective, SolverConfig, SolverSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcaModel {
    pub r: MetricWeights,
    pub lambda_used: f64,
    pub solver: SolverSummary,
}

/// Log of the softmax mass on same-class references, given squared distances.
/// Returns `(log P, shift, total, same)` with unnormalized masses relative to
/// `exp(−shift)`; `None` when no references exist.
fn class_log_prob(dists: &[f64], same: &[bool]) -> Option<(f64, f64, f64, f64)> {
    let shift = dists.iter().copied().fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return None;
    }
    let (mut total, mut own) = (0.0, 0.0);
    for (d, s) in dists.iter().zip(same) {
        let e = (shift - d).exp();
        total += e;
        if *s {
            own += e;
        }
    }
    let lp = if own > 0.0 { own.ln() - total.ln() } else { f64::NEG_INFINITY };
    Some((lp, shift, total, own))
}

/// Leave-one-out probability that `labels[held_out]` is assigned its own
/// class by the remaining labelled examples, floored at `1e-12`.
pub fn nca_loo_prob(
    r: &[f64],
    features: &[FeatureVec],
    labels: &[LabeledExample],
    held_out: usize,
) -> Result<f64> {
    let target = labels
        .get(held_out)
        .ok_or_else(|| Error::invalid("held-out index out of range"))?;
    if labels.len() < 2 {
        return Err(Error::invalid("no reference points remain after holding one out"));
    }
    let mut dists = Vec::with_capacity(labels.len() - 1);
    let mut same = Vec::with_capacity(labels.len() - 1);
    for (j, l) in labels.iter().enumerate() {
        if j == held_out {
            continue;
        }
        dists.push(weighted_sq_dist(r, &features[target.object], &features[l.object])?);
        same.push(l.class == target.class);
    }
    let (lp, ..) = class_log_prob(&dists, &same).expect("references exist");
    Ok(lp.exp().max(PROB_FLOOR))
}

/// `Σ_{held} ln P(c | x, train)` with every training point as reference.
pub fn nca_validation_log_lik(
    r: &[f64],
    features: &[FeatureVec],
    train: &[LabeledExample],
    held: &[LabeledExample],
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("empty reference set"));
    }
    let mut total = 0.0;
    for h in held {
        let mut dists = Vec::with_capacity(train.len());
        let mut same = Vec::with_capacity(train.len());
        for t in train {
            dists.push(weighted_sq_dist(r, &features[h.object], &features[t.object])?);
            same.push(t.class == h.class);
        }
        let (lp, ..) = class_log_prob(&dists, &same).expect("references exist");
        total += lp.max(log_floor());
    }
    Ok(total)
}

/// `−Σ_i ln P(c_i | x_i, G ∖ i) + λ Σ_k r_k` over `r ≥ 0`.
pub struct NcaObjective {
    n: usize,
    k: usize,
    classes: Vec<usize>,
    diffs: PairDiffs,
    lambda: f64,
}

impl NcaObjective {
    pub fn new(features: &[FeatureVec], labels: &[LabeledExample], lambda: f64) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid("need at least two labelled examples"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("λ = {lambda} must be finite and ≥ 0")));
        }
        let points: Vec<&[f64]> = labels.iter().map(|l| features[l.object].as_slice()).collect();
        Ok(NcaObjective {
            n: labels.len(),
            k: points[0].len(),
            classes: labels.iter().map(|l| l.class).collect(),
            diffs: PairDiffs::new(&points),
            lambda,
        })
    }

    /// Sum of floored leave-one-out log-probabilities (no penalty).
    pub fn loo_log_lik(&self, r: &[f64]) -> f64 {
        let mut dists = vec![0.0; self.n - 1];
        let mut same = vec![false; self.n - 1];
        (0..self.n)
            .map(|i| {
                self.fill(r, i, &mut dists, &mut same);
                class_log_prob(&dists, &same).expect("n ≥ 2").0.max(log_floor())
            })
            .sum()
    }

    fn fill(&self, r: &[f64], i: usize, dists: &mut [f64], same: &mut [bool]) {
        let mut slot = 0;
        for j in 0..self.n {
            if j != i {
                dists[slot] = dot(r, self.diffs.row(i, j));
                same[slot] = self.classes[j] == self.classes[i];
                slot += 1;
            }
        }
    }
}

impl Objective for NcaObjective {
    fn value(&self, r: &[f64]) -> f64 {
        -self.loo_log_lik(r) + self.lambda * r.iter().sum::<f64>()
    }

    fn gradient(&self, r: &[f64]) -> Vec<f64> {
        let mut g = vec![self.lambda; self.k];
        let mut dists = vec![0.0; self.n - 1];
        let mut same = vec![false; self.n - 1];
        for i in 0..self.n {
            self.fill(r, i, &mut dists, &mut same);
            let (lp, shift, total, own) = class_log_prob(&dists, &same).expect("n ≥ 2");
            if !(lp > log_floor()) {
                continue;
            }
            // ∂ ln P_i / ∂r = Σ_j p_ij δ_ij − Σ_{j same} q_ij δ_ij
            let mut slot = 0;
            for j in 0..self.n {
                if j == i {
                    continue;
                }
                let e = (shift - dists[slot]).exp();
                let mut coef = e / total;
                if same[slot] {
                    coef -= e / own;
                }
                slot += 1;
                if coef != 0.0 {
                    for (gk, dk) in g.iter_mut().zip(self.diffs.row(i, j)) {
                        *gk -= coef * dk;
                    }
                }
            }
        }
        g
    }

    fn project(&self, r: &mut [f64]) {
        let n = r.len();
        project_nonneg(r, 0..n);
    }
}

/// Penalized leave-one-out fit from `r = 1`.
pub fn fit_nca(
    features: &[FeatureVec],
    labels: &[LabeledExample],
    m: usize,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<NcaModel> {
    check_labels(features, labels, m)?;
    let obj = NcaObjective::new(features, labels, lambda)?;
    let res = minimize(&obj, &vec![1.0; obj.k], cfg)?;
    Ok(NcaModel {
        r: MetricWeights::new(res.params.clone())?,
        lambda_used: lambda,
        solver: res.summary(),
    })
}

impl LambdaFit for NcaModel {
    fn fit(
        features: &[FeatureVec],
        labels: &[LabeledExample],
        m: usize,
        lambda: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        fit_nca(features, labels, m, lambda, cfg)
    }

    fn validation_log_lik(
        &self,
        features: &[FeatureVec],
        train: &[LabeledExample],
        held: &[LabeledExample],
    ) -> Result<f64> {
        nca_validation_log_lik(&self.r, features, train, held)
    }
}
