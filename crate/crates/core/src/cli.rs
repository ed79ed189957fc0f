//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::data::{
    load_dataset, preprocess_dataset, save_dataset, Dataset, FEATURES_FILE, LABELS_FILE,
    RATINGS_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{run_loo_experiment, run_synthetic_experiment, ExperimentConfig, ExperimentReport};
use crate::eval::LooConfig;
use crate::learners::LearnerConfig;
use crate::model::{fit_model, label_ids, Algorithm, ModelDocument, Query};
use crate::seed::{rng_for, Stream};
use crate::solver::SolverConfig;
use crate::synth::{generate_ratings, sample_generative_model, sample_objects, to_dataset};

pub const LOG_ENV: &str = "METRIQ_LOG";
pub const META_FILE: &str = "meta.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PREPROCESS_REPORT: &str = "preprocess.json";
/// Replication count of the full-scale synthetic benchmark.
pub const FULL_REPLICATIONS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "metriq", version, about = "Metric learning from similarity ratings and class labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset.
    Gen(GenArgs),
    /// Fit one algorithm and write the model document.
    Train(TrainArgs),
    /// Rank a dataset's objects by distance to one of them.
    Retrieve(RetrieveArgs),
    /// Run the synthetic benchmark or a leave-one-out evaluation.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Drop correlated features and standardize the rest.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of objects.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Observed features.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Missing features.
    #[arg(long, default_value_t = 20)]
    pub j: usize,
    /// Classes.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = crate::synth::DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Directory holding features.csv, labels.csv and ratings.csv.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
}

impl DataArgs {
    pub fn load(&self) -> Result<Dataset> {
        load_dataset(
            &self.data.join(FEATURES_FILE),
            &self.data.join(LABELS_FILE),
            &self.data.join(RATINGS_FILE),
        )
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = SolverConfig::default().grad_tol)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().initial_step)]
    pub initial_step: f64,
    #[arg(long, default_value_t = SolverConfig::default().backtrack_factor)]
    pub backtrack: f64,
    #[arg(long, default_value_t = SolverConfig::default().armijo_c)]
    pub armijo_c: f64,
    /// L1 weights tried for NCA and the hybrid classifier.
    #[arg(long, value_delimiter = ',', default_values_t = crate::learners::DEFAULT_LAMBDA_GRID)]
    pub lambda_grid: Vec<f64>,
    /// Share of labelled objects used for fitting during λ selection.
    #[arg(long, default_value_t = LearnerConfig::default().split_fraction)]
    pub split_fraction: f64,
}

impl SolverArgs {
    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            solver: SolverConfig {
                initial_step: self.initial_step,
                backtrack_factor: self.backtrack,
                armijo_c: self.armijo_c,
                grad_tol: self.grad_tol,
                max_iters: self.max_iters,
            },
            lambda_grid: self.lambda_grid.clone(),
            split_fraction: self.split_fraction,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One of or, co, nca, hyb, random.
    #[arg(long)]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Id of the query object.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = Algorithm::FITTED.to_vec())]
    pub algos: Vec<Algorithm>,
    #[arg(long, default_value_t = 10)]
    pub ndcg_k: usize,
    /// Worker threads; reports do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Exit nonzero when any run failed.
    #[arg(long)]
    pub strict: bool,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    Synthetic(SyntheticArgs),
    Loo(LooArgs),
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 10, conflicts_with = "full")]
    pub reps: usize,
    /// Run the 100-replication benchmark.
    #[arg(long)]
    pub full: bool,
    /// Rating-set sizes in percent of the training ratings.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 7.5, 10.0, 12.5, 15.0])]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub j: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = crate::synth::DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Installs the logger, reading the level from `METRIQ_LOG` (default `error`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Retrieve(a) => cmd_retrieve(&a),
        Command::Experiment(ExperimentCommand::Synthetic(a)) => cmd_synthetic(&a),
        Command::Experiment(ExperimentCommand::Loo(a)) => cmd_loo(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GenMeta<'a> {
    seed: u64,
    n: usize,
    k: usize,
    j: usize,
    m: usize,
    noise_sd: f64,
    threshold_similar: f64,
    threshold_neutral: f64,
    r_true: &'a [f64],
    r_perp_true: &'a [f64],
}

/// Uses the same seed streams as replication 0 of the synthetic benchmark.
pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let gen = sample_generative_model(&mut rng_for(a.seed, Stream::GenerativeModel, 0), a.k, a.j, a.m)?;
    let objects = sample_objects(&gen, a.n, &mut rng_for(a.seed, Stream::Objects, 0))?;
    let (ratings, rep) = generate_ratings(
        &objects,
        &gen.r_true,
        &gen.r_perp_true,
        a.noise_sd,
        &mut rng_for(a.seed, Stream::RatingNoise, 0),
    )?;
    let ds = to_dataset(&objects, ratings, a.m)?;
    save_dataset(&ds, &a.out)?;
    let meta = GenMeta {
        seed: a.seed,
        n: a.n,
        k: a.k,
        j: a.j,
        m: a.m,
        noise_sd: a.noise_sd,
        threshold_similar: rep.threshold_similar,
        threshold_neutral: rep.threshold_neutral,
        r_true: &gen.r_true,
        r_perp_true: &gen.r_perp_true,
    };
    write_json(&a.out.join(META_FILE), &meta)?;
    info!("wrote {} objects and {} ratings to {}", ds.len(), ds.ratings().len(), a.out.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let ds = a.data.load()?;
    let cfg = a.solver.learner();
    let mut rng = match a.algo {
        Algorithm::Random => rng_for(a.seed, Stream::RandomBaseline, 0),
        _ => rng_for(a.seed, Stream::LambdaSplit, 0),
    };
    let model = fit_model(
        a.algo,
        ds.features(),
        ds.ratings(),
        ds.labels(),
        ds.num_classes(),
        &cfg,
        &mut rng,
    )?;
    if let Some(s) = model.solver() {
        info!(
            "{}: {} iterations, converged {}, objective {} -> {}",
            a.algo, s.iterations, s.converged, s.initial_value, s.final_value
        );
    }
    let ids = label_ids(ds.ids(), ds.labels());
    let doc = ModelDocument::new(&model, &ids, ds.num_classes(), a.seed, &cfg)?;
    write_json(&a.out, &doc)
}

pub fn cmd_retrieve(a: &RetrieveArgs) -> Result<()> {
    let ds = a.data.load()?;
    let doc: ModelDocument = serde_json::from_reader(std::io::BufReader::new(File::open(&a.model)?))?;
    let model = doc.into_model()?;
    let q = ds
        .lookup(&a.query)
        .ok_or_else(|| Error::invalid(format!("unknown query object {}", a.query)))?;
    let classes = ds.class_of();
    let database: Vec<usize> = (0..ds.len()).collect();
    let hits = model.rank(
        ds.features(),
        &classes,
        Query { x: &ds.features()[q], class: classes[q] },
        &database,
        a.k,
    )?;
    let out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "object_id", "distance"])?;
    for (rank, h) in hits.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            ds.ids()[h.index].as_str().to_string(),
            h.distance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn finish(report: &ExperimentReport, run: &RunArgs) -> Result<()> {
    std::fs::create_dir_all(&run.out)?;
    let mut json = BufWriter::new(File::create(run.out.join(REPORT_JSON))?);
    report.write_json(&mut json)?;
    json.flush()?;
    report.write_csv(File::create(run.out.join(REPORT_CSV))?)?;
    let failed = report.failures();
    if failed > 0 {
        log::warn!("{failed} runs failed; see {}", run.out.join(REPORT_JSON).display());
        if run.strict {
            return Err(Error::invalid(format!("{failed} runs failed")));
        }
    }
    Ok(())
}

pub fn cmd_synthetic(a: &SyntheticArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        n_train: a.n_train,
        n_test: a.n_test,
        k_features: a.k,
        j_missing: a.j,
        m_classes: a.m,
        noise_sd: a.noise_sd,
        fractions: a.fractions.iter().map(|p| p / 100.0).collect(),
        replications: if a.full { FULL_REPLICATIONS } else { a.reps },
        seed: a.run.seed,
        ndcg_k: a.run.ndcg_k,
        algorithms: a.run.algos.clone(),
        learner: a.run.solver.learner(),
    };
    let report = run_synthetic_experiment(&cfg, a.run.workers)?;
    finish(&report, &a.run)
}

pub fn cmd_loo(a: &LooArgs) -> Result<()> {
    let ds = a.data.load()?;
    let cfg = LooConfig {
        seed: a.run.seed,
        ndcg_k: a.run.ndcg_k,
        algorithms: a.run.algos.clone(),
        learner: a.run.solver.learner(),
    };
    let report = run_loo_experiment(&ds, &cfg, a.run.workers)?;
    finish(&report, &a.run)
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let ds = a.data.load()?;
    let (out, report) = preprocess_dataset(&ds, a.threshold)?;
    save_dataset(&out, &a.out)?;
    write_json(&a.out.join(PREPROCESS_REPORT), &report)?;
    info!(
        "kept {} of {} features",
        report.kept_feature_indices.len(),
        ds.num_features()
    );
    Ok(())
}
