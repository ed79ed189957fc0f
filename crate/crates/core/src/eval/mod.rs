//! Retrieval scoring and the two experiment protocols.

mod loo;
mod ndcg;
mod report;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::data::Rating;
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::metric::FeatureVec;
use crate::model::{Algorithm, FittedModel, Query};

pub use loo::run_loo_experiment;
pub use ndcg::{dcg, ideal_order, ndcg_at_k, ndcg_from_gains, RankedList};
pub use report::{
    aggregate, mean_sd, CellSummary, ExperimentMode, ExperimentReport, RunOutcome, RunRecord,
};
pub use synthetic::run_synthetic_experiment;

/// Synthetic benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub k_features: usize,
    pub j_missing: usize,
    pub m_classes: usize,
    pub noise_sd: f64,
    /// Shares of the training ratings handed to the rating-based learners.
    pub fractions: Vec<f64>,
    pub replications: usize,
    /// Replication `i` uses master seed `seed + i`.
    pub seed: u64,
    pub ndcg_k: usize,
    pub algorithms: Vec<Algorithm>,
    pub learner: LearnerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_train: 100,
            n_test: 100,
            k_features: 20,
            j_missing: 20,
            m_classes: 3,
            noise_sd: crate::synth::DEFAULT_NOISE_SD,
            fractions: vec![0.05, 0.075, 0.10, 0.125, 0.15],
            replications: 10,
            seed: 0,
            ndcg_k: 10,
            algorithms: Algorithm::FITTED.to_vec(),
            learner: LearnerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn n_objects(&self) -> usize {
        self.n_train + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::invalid(format!("fractions {:?} must lie in (0, 1]", self.fractions)));
        }
        if self.n_train < 2 || self.n_test == 0 {
            return Err(Error::invalid("need at least two training and one test object"));
        }
        if self.ndcg_k == 0 || self.ndcg_k > self.n_train {
            return Err(Error::invalid(format!(
                "NDCG cutoff {} must be in 1..={}",
                self.ndcg_k, self.n_train
            )));
        }
        if self.k_features == 0 || self.j_missing == 0 || self.m_classes == 0 {
            return Err(Error::invalid("feature and class counts must be positive"));
        }
        if self.replications == 0 || self.algorithms.is_empty() {
            return Err(Error::invalid("need at least one replication and one algorithm"));
        }
        self.learner.solver.validate()
    }
}

/// Leave-one-out settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooConfig {
    pub seed: u64,
    pub ndcg_k: usize,
    pub algorithms: Vec<Algorithm>,
    pub learner: LearnerConfig,
}

impl Default for LooConfig {
    fn default() -> Self {
        LooConfig {
            seed: 0,
            ndcg_k: 10,
            algorithms: Algorithm::FITTED.to_vec(),
            learner: LearnerConfig::default(),
        }
    }
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// NDCG@k of `model`'s retrieval for object `query` against `database`,
/// with gains `gains[i]` = the query's rating of object `i`.
pub(crate) fn score_query(
    model: &FittedModel,
    features: &[FeatureVec],
    classes: &[Option<usize>],
    query: usize,
    database: &[usize],
    gains: &[Option<Rating>],
    k: usize,
) -> Result<f64> {
    let gain = |i: usize| {
        gains[i].ok_or_else(|| Error::invalid(format!("object {query} has no rating for object {i}")))
    };
    let hits = model.rank(
        features,
        classes,
        Query { x: &features[query], class: classes[query] },
        database,
        k,
    )?;
    let retrieved: Vec<Rating> = hits.iter().map(|h| gain(h.index)).collect::<Result<_>>()?;
    let mut ideal: Vec<Rating> = database.iter().map(|&i| gain(i)).collect::<Result<_>>()?;
    ideal.sort_by(|a, b| b.cmp(a));
    ndcg_from_gains(&retrieved, &ideal, k)
}

pub(crate) fn outcome(model: &FittedModel, ndcg: f64) -> RunOutcome {
    let solver = model.solver();
    let lambda = match model {
        FittedModel::Nca(m) => Some(m.lambda_used),
        FittedModel::Hybrid(m) => Some(m.classifier.lambda_used),
        _ => None,
    };
    RunOutcome::Success {
        ndcg,
        iterations: solver.map(|s| s.iterations),
        converged: solver.map(|s| s.converged),
        lambda,
    }
}
