use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use super::{aggregate, outcome, score_query, worker_pool, ExperimentConfig, ExperimentMode};
use super::{ExperimentReport, RunOutcome, RunRecord};
use crate::data::{rating_matrix, split_ratings, LabeledExample, RatingExample};
use crate::error::Result;
use crate::learners::{
    fit_hybrid_with_classifier, fit_kde_classifier, fit_ordinal, fit_xing, select_lambda,
    KdeClassifier, NcaModel,
};
use crate::metric::FeatureVec;
use crate::model::{random_weights, Algorithm, FittedModel};
use crate::seed::{derive_seed, rng_for, Stream};
use crate::synth::{generate_ratings, sample_generative_model, sample_objects};

/// Runs every replication (in parallel on `workers` threads) and aggregates.
///
/// Per replication: a fresh generative model and objects; the first
/// `n_train` objects form the labelled training set and the database, the
/// rest are queries. NCA and the hybrid's classifier depend only on labels and
/// are fitted once per replication; the rating-based fits see an independent
/// subsample of the training ratings for each fraction.
pub fn run_synthetic_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pool = worker_pool(workers)?;
    let per_rep: Vec<Result<Vec<RunRecord>>> =
        pool.install(|| (0..cfg.replications).into_par_iter().map(|rep| replication(cfg, rep)).collect());
    let mut runs = Vec::new();
    for r in per_rep {
        runs.extend(r?);
    }
    let cells = aggregate(&runs, &cfg.algorithms, &cfg.fractions);
    Ok(ExperimentReport {
        mode: ExperimentMode::Synthetic,
        synthetic: Some(cfg.clone()),
        loo: None,
        runs,
        cells,
    })
}

fn replication(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<RunRecord>> {
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(rep as u64);
    let (n_train, n) = (cfg.n_train, cfg.n_objects());
    let gen = sample_generative_model(
        &mut rng_for(seed, Stream::GenerativeModel, 0),
        cfg.k_features,
        cfg.j_missing,
        cfg.m_classes,
    )?;
    let objects = sample_objects(&gen, n, &mut rng_for(seed, Stream::Objects, 0))?;
    let (ratings, _) = generate_ratings(
        &objects,
        &gen.r_true,
        &gen.r_perp_true,
        cfg.noise_sd,
        &mut rng_for(seed, Stream::RatingNoise, 0),
    )?;
    let features: Vec<FeatureVec> = objects.iter().map(|o| o.x.clone()).collect();
    let labels: Vec<LabeledExample> =
        (0..n_train).map(|i| LabeledExample { object: i, class: objects[i].class }).collect();
    let classes: Vec<Option<usize>> =
        (0..n).map(|i| (i < n_train).then_some(objects[i].class)).collect();
    let train_ratings: Vec<RatingExample> =
        ratings.iter().copied().filter(|r| r.a < n_train && r.b < n_train).collect();
    let table = rating_matrix(n, &ratings);
    let database: Vec<usize> = (0..n_train).collect();
    let m = cfg.m_classes;
    let learner = &cfg.learner;
    let wants = |a| cfg.algorithms.contains(&a);

    // errors are kept as text: one failed fit fails every run that reuses it
    let nca = wants(Algorithm::Nca).then(|| {
        select_lambda::<NcaModel, _>(&features, &labels, m, learner, &mut rng_for(seed, Stream::LambdaSplit, 0))
            .map(|s| s.model)
            .map_err(|e| e.to_string())
    });
    let classifier = wants(Algorithm::Hyb).then(|| {
        if m == 1 {
            Ok(KdeClassifier::single_class(cfg.k_features))
        } else {
            fit_kde_classifier(&features, &labels, m, learner, &mut rng_for(seed, Stream::LambdaSplit, 1))
                .map_err(|e| e.to_string())
        }
    });

    let mut runs = Vec::new();
    for (fi, &fraction) in cfg.fractions.iter().enumerate() {
        let subset =
            split_ratings(&train_ratings, fraction, derive_seed(seed, Stream::RatingSubset, fi as u64))
                .map_err(|e| e.to_string());
        for &algorithm in &cfg.algorithms {
            let fitted: std::result::Result<FittedModel, String> = match algorithm {
                Algorithm::Or => subset.clone().and_then(|s| {
                    fit_ordinal(&features, &s, &learner.solver)
                        .map(FittedModel::Ordinal)
                        .map_err(|e| e.to_string())
                }),
                Algorithm::Co => subset.clone().and_then(|s| {
                    fit_xing(&features, &s, &learner.solver)
                        .map(FittedModel::Xing)
                        .map_err(|e| e.to_string())
                }),
                Algorithm::Nca => nca.clone().expect("fitted when requested").map(FittedModel::Nca),
                Algorithm::Hyb => subset.clone().and_then(|s| {
                    let clf = classifier.clone().expect("fitted when requested")?;
                    fit_hybrid_with_classifier(&features, &s, &labels, clf, &learner.solver, false)
                        .map(FittedModel::Hybrid)
                        .map_err(|e| e.to_string())
                }),
                Algorithm::Random => Ok(FittedModel::Random(random_weights(
                    cfg.k_features,
                    &mut rng_for(seed, Stream::RandomBaseline, fi as u64),
                ))),
            };
            let result = fitted.and_then(|model| {
                let mut total = 0.0;
                for q in n_train..n {
                    total += score_query(&model, &features, &classes, q, &database, &table[q], cfg.ndcg_k)
                        .map_err(|e| e.to_string())?;
                }
                Ok(outcome(&model, total / (n - n_train) as f64))
            });
            let outcome = result.unwrap_or_else(|error| {
                debug!("replication {rep}, {algorithm} at {fraction}: {error}");
                RunOutcome::Failed { error }
            });
            runs.push(RunRecord { algorithm, fraction, replication: rep, seed, held_out: None, outcome });
        }
    }
    info!("replication {rep} (seed {seed}) finished in {:.2?}", start.elapsed());
    Ok(runs)
}
