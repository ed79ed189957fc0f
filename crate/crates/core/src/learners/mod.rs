//! The four metric learners: ordinal regression, the similar/dissimilar
//! convex program, L1-regularized NCA, and the hybrid method with its
//! kernel-density soft classifier.

mod barrier;
mod hybrid;
mod kde;
mod lambda;
mod nca;
mod ordinal;
mod xing;

use serde::{Deserialize, Serialize};

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::metric::FeatureVec;
use crate::solver::SolverConfig;

pub use barrier::{BarrierObjective, BarrierProgram, BarrierSolution, DISTANCE_FLOOR};
pub use hybrid::{
    fit_hybrid, fit_hybrid_with_classifier, hybrid_pair_terms, soft_labels, HybridModel,
};
pub use kde::{fit_kde_classifier, kde_posterior, KdeClassifier, KdeLooObjective};
pub use lambda::{select_lambda, LambdaCandidate, LambdaFit, LambdaSelection};
pub use nca::{fit_nca, nca_loo_prob, nca_validation_log_lik, NcaModel, NcaObjective};
pub use ordinal::{fit_ordinal, ordinal_prob, OrdinalModel, OrdinalObjective};
pub use xing::{fit_xing, XingModel};

/// Floor applied to every probability before taking its logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

pub(crate) fn log_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Regularization grid used for NCA and the kernel-density classifier.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub solver: SolverConfig,
    pub lambda_grid: Vec<f64>,
    /// Share of labelled examples used for fitting during λ selection.
    pub split_fraction: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            solver: SolverConfig::default(),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            split_fraction: 0.7,
        }
    }
}

/// Squared coordinate differences `(x_i − x_j)²` for every ordered pair of a
/// point set, laid out `[(i · n + j) · k + feature]`.
pub(crate) struct PairDiffs {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl PairDiffs {
    pub(crate) fn new(points: &[&[f64]]) -> Self {
        let n = points.len();
        let k = points.first().map_or(0, |p| p.len());
        let mut data = vec![0.0; n * n * k];
        for i in 0..n {
            for j in 0..n {
                let row = &mut data[(i * n + j) * k..(i * n + j + 1) * k];
                for (f, slot) in row.iter_mut().enumerate() {
                    let d = points[i][f] - points[j][f];
                    *slot = d * d;
                }
            }
        }
        PairDiffs { n, k, data }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.n + j) * self.k;
        &self.data[at..at + self.k]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(x − y)²` per coordinate.
pub(crate) fn sq_diff(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).collect()
}

pub(crate) fn check_labels(
    features: &[FeatureVec],
    labels: &[LabeledExample],
    m: usize,
) -> Result<()> {
    if labels.len() < 2 {
        return Err(Error::invalid("need at least two labelled examples"));
    }
    let mut seen = vec![false; m];
    for l in labels {
        if l.object >= features.len() || l.class >= m {
            return Err(Error::invalid("labelled example out of range"));
        }
        seen[l.class] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::invalid("labelled examples cover a single class"));
    }
    Ok(())
}
