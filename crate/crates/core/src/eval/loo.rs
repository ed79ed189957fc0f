use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use super::{aggregate, outcome, score_query, worker_pool, ExperimentMode, ExperimentReport};
use super::{LooConfig, RunOutcome, RunRecord};
use crate::data::{Dataset, LabeledExample, RatingExample};
use crate::error::{Error, Result};
use crate::model::{fit_model, Algorithm};
use crate::seed::{derive_seed, rng_for, Stream};

const LISTED_MISSING: usize = 20;

/// Holds out each object in turn, fits every algorithm on the rest (objects,
/// labels and every rating touching the held-out object removed), retrieves
/// from the remaining objects and scores against the held-out object's
/// ratings.
pub fn run_loo_experiment(dataset: &Dataset, cfg: &LooConfig, workers: usize) -> Result<ExperimentReport> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::invalid("leave-one-out needs at least three objects"));
    }
    if cfg.ndcg_k == 0 || cfg.algorithms.is_empty() {
        return Err(Error::invalid("need a positive NDCG cutoff and at least one algorithm"));
    }
    cfg.learner.solver.validate()?;
    let table = dataset.rating_matrix();
    let missing: Vec<String> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && table[a][b].is_none())
        .map(|(a, b)| format!("{}→{}", dataset.ids()[a], dataset.ids()[b]))
        .collect();
    if !missing.is_empty() {
        let shown = missing.iter().take(LISTED_MISSING).cloned().collect::<Vec<_>>().join(", ");
        return Err(Error::invalid(format!(
            "leave-one-out needs a rating for every directed pair; {} missing: {shown}{}",
            missing.len(),
            if missing.len() > LISTED_MISSING { ", …" } else { "" }
        )));
    }

    let pool = worker_pool(workers)?;
    let folds: Vec<Vec<RunRecord>> =
        pool.install(|| (0..n).into_par_iter().map(|fold| run_fold(dataset, cfg, &table, fold)).collect());
    let runs: Vec<RunRecord> = folds.into_iter().flatten().collect();
    let cells = aggregate(&runs, &cfg.algorithms, &[1.0]);
    Ok(ExperimentReport { mode: ExperimentMode::Loo, synthetic: None, loo: Some(cfg.clone()), runs, cells })
}

fn run_fold(
    dataset: &Dataset,
    cfg: &LooConfig,
    table: &[Vec<Option<crate::data::Rating>>],
    fold: usize,
) -> Vec<RunRecord> {
    let start = Instant::now();
    let n = dataset.len();
    let features = dataset.features();
    let labels: Vec<LabeledExample> =
        dataset.labels().iter().copied().filter(|l| l.object != fold).collect();
    let ratings: Vec<RatingExample> =
        dataset.ratings().iter().copied().filter(|r| r.a != fold && r.b != fold).collect();
    let mut classes = dataset.class_of();
    classes[fold] = None;
    let database: Vec<usize> = (0..n).filter(|&i| i != fold).collect();
    let k = cfg.ndcg_k.min(n - 1);
    let seed = derive_seed(cfg.seed, Stream::LambdaSplit, fold as u64);

    let runs = cfg
        .algorithms
        .iter()
        .map(|&algorithm| {
            let mut rng = match algorithm {
                Algorithm::Random => rng_for(cfg.seed, Stream::RandomBaseline, fold as u64),
                _ => rng_for(cfg.seed, Stream::LambdaSplit, fold as u64),
            };
            let result = fit_model(
                algorithm,
                features,
                &ratings,
                &labels,
                dataset.num_classes(),
                &cfg.learner,
                &mut rng,
            )
            .and_then(|model| {
                let v = score_query(&model, features, &classes, fold, &database, &table[fold], k)?;
                Ok(outcome(&model, v))
            });
            let outcome = result.unwrap_or_else(|e| {
                debug!("fold {fold}, {algorithm}: {e}");
                RunOutcome::Failed { error: e.to_string() }
            });
            RunRecord {
                algorithm,
                fraction: 1.0,
                replication: fold,
                seed,
                held_out: Some(dataset.ids()[fold].clone()),
                outcome,
            }
        })
        .collect();
    info!("fold {fold} ({}) finished in {:.2?}", dataset.ids()[fold], start.elapsed());
    runs
}
