//! Python bindings: datasets, fitting, retrieval, NDCG and the two experiment
//! protocols.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use metriq::data::{self, Rating};
use metriq::eval::{self, ExperimentConfig, ExperimentReport, LooConfig};
use metriq::learners::LearnerConfig;
use metriq::metric::{self, MissingFeatureMatrix};
use metriq::model::{fit_model, label_ids, Algorithm, FittedModel, ModelDocument, Query};
use metriq::seed::{rng_for, Stream};
use metriq::synth;

fn py_err(e: metriq::Error) -> PyErr {
    match e {
        metriq::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ metriq::Error::Numerical { .. } => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for metriq::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn algorithm(tag: &str) -> PyResult<Algorithm> {
    tag.parse().map_err(|e: metriq::Error| PyValueError::new_err(e.to_string()))
}

fn algorithms(tags: Vec<String>) -> PyResult<Vec<Algorithm>> {
    tags.iter().map(|t| algorithm(t)).collect()
}

fn learner(max_iters: Option<usize>) -> LearnerConfig {
    let mut cfg = LearnerConfig::default();
    if let Some(n) = max_iters {
        cfg.solver.max_iters = n;
    }
    cfg
}

/// Objects with features, optional class labels and pairwise ratings.
#[pyclass(name = "Dataset", module = "metriq", frozen)]
pub struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Reads features.csv, labels.csv and ratings.csv from `dir`.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let inner = data::load_dataset(
            &dir.join(data::FEATURES_FILE),
            &dir.join(data::LABELS_FILE),
            &dir.join(data::RATINGS_FILE),
        )
        .py()?;
        Ok(PyDataset { inner })
    }

    /// Samples a synthetic dataset; every object is labelled.
    #[staticmethod]
    #[pyo3(signature = (seed=0, n=200, k=20, j=20, m=3, noise_sd=synth::DEFAULT_NOISE_SD))]
    fn generate(seed: u64, n: usize, k: usize, j: usize, m: usize, noise_sd: f64) -> PyResult<Self> {
        let gen = synth::sample_generative_model(&mut rng_for(seed, Stream::GenerativeModel, 0), k, j, m).py()?;
        let objects = synth::sample_objects(&gen, n, &mut rng_for(seed, Stream::Objects, 0)).py()?;
        let (ratings, _) = synth::generate_ratings(
            &objects,
            &gen.r_true,
            &gen.r_perp_true,
            noise_sd,
            &mut rng_for(seed, Stream::RatingNoise, 0),
        )
        .py()?;
        Ok(PyDataset { inner: synth::to_dataset(&objects, ratings, m).py()? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        data::save_dataset(&self.inner, &dir).py()
    }

    /// Drops correlated features and standardizes the rest; returns the new
    /// dataset and the report as JSON.
    #[pyo3(signature = (threshold=0.95))]
    fn preprocess(&self, threshold: f64) -> PyResult<(PyDataset, String)> {
        let (inner, report) = data::preprocess_dataset(&self.inner, threshold).py()?;
        let json = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((PyDataset { inner }, json))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().iter().map(|id| id.as_str().to_string()).collect()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn num_ratings(&self) -> usize {
        self.inner.ratings().len()
    }

    fn features(&self, id: &str) -> PyResult<Vec<f64>> {
        let i = self.index(id)?;
        Ok(self.inner.features()[i].as_slice().to_vec())
    }

    /// 1-based class of `id`, or None when unlabelled.
    fn class_of(&self, id: &str) -> PyResult<Option<usize>> {
        let i = self.index(id)?;
        Ok(self.inner.class_of()[i].map(|c| c + 1))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(objects={}, features={}, classes={}, labels={}, ratings={})",
            self.inner.len(),
            self.inner.num_features(),
            self.inner.num_classes(),
            self.inner.labels().len(),
            self.inner.ratings().len()
        )
    }
}

impl PyDataset {
    fn index(&self, id: &str) -> PyResult<usize> {
        self.inner.lookup(id).ok_or_else(|| PyValueError::new_err(format!("unknown object {id}")))
    }
}

/// A fitted metric.
#[pyclass(name = "Model", module = "metriq", frozen)]
pub struct PyModel {
    doc: ModelDocument,
    model: FittedModel,
}

#[pymethods]
impl PyModel {
    /// Fits `algorithm` (or, co, nca, hyb, random) on `dataset`.
    #[staticmethod]
    #[pyo3(signature = (algorithm, dataset, seed=0, max_iters=None))]
    fn fit(
        py: Python<'_>,
        algorithm: &str,
        dataset: &PyDataset,
        seed: u64,
        max_iters: Option<usize>,
    ) -> PyResult<Self> {
        let algo = self::algorithm(algorithm)?;
        let cfg = learner(max_iters);
        let ds = &dataset.inner;
        let model = py.detach(|| {
            let mut rng = match algo {
                Algorithm::Random => rng_for(seed, Stream::RandomBaseline, 0),
                _ => rng_for(seed, Stream::LambdaSplit, 0),
            };
            fit_model(algo, ds.features(), ds.ratings(), ds.labels(), ds.num_classes(), &cfg, &mut rng)
        })
        .py()?;
        let doc = ModelDocument::new(&model, &label_ids(ds.ids(), ds.labels()), ds.num_classes(), seed, &cfg).py()?;
        Ok(PyModel { doc, model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let model = doc.clone().into_model().py()?;
        Ok(PyModel { doc, model })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.doc).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.doc.algorithm.tag()
    }

    #[getter]
    fn r(&self) -> Vec<f64> {
        self.doc.r.as_slice().to_vec()
    }

    /// Full M×M missing-feature matrix of a hybrid model.
    #[getter]
    fn q(&self) -> Option<Vec<Vec<f64>>> {
        self.doc.q.as_ref().map(|q| q.to_full())
    }

    #[getter]
    fn theta(&self) -> Option<(f64, f64)> {
        self.doc.theta.map(|[a, b]| (a, b))
    }

    #[getter]
    fn lambda_(&self) -> Option<f64> {
        self.doc.lambda
    }

    /// The `k` objects of `dataset` nearest to object `query`, as
    /// `(id, squared distance)` pairs. The query itself is included.
    #[pyo3(signature = (dataset, query, k=10))]
    fn retrieve(&self, dataset: &PyDataset, query: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let ds = &dataset.inner;
        let q = dataset.index(query)?;
        let classes = ds.class_of();
        let database: Vec<usize> = (0..ds.len()).collect();
        let hits = self
            .model
            .rank(ds.features(), &classes, Query { x: &ds.features()[q], class: classes[q] }, &database, k)
            .py()?;
        Ok(hits.iter().map(|h| (ds.ids()[h.index].as_str().to_string(), h.distance)).collect())
    }

    fn __repr__(&self) -> String {
        format!("Model(algorithm={:?}, features={})", self.doc.algorithm.tag(), self.doc.num_features)
    }
}

/// Aggregated experiment results.
#[pyclass(name = "Report", module = "metriq", frozen)]
pub struct PyReport {
    inner: ExperimentReport,
}

#[pymethods]
impl PyReport {
    /// `(algorithm, fraction, mean_ndcg, sd, n_success, n_failed)` per cell.
    #[getter]
    fn cells(&self) -> Vec<(&'static str, f64, Option<f64>, Option<f64>, usize, usize)> {
        self.inner
            .cells
            .iter()
            .map(|c| (c.algorithm.tag(), c.fraction, c.mean_ndcg, c.sd, c.n_success, c.n_failed))
            .collect()
    }

    #[getter]
    fn failures(&self) -> usize {
        self.inner.failures()
    }

    fn mean_ndcg(&self, algorithm: &str, fraction: f64) -> PyResult<Option<f64>> {
        let a = self::algorithm(algorithm)?;
        Ok(self.inner.cell(a, fraction).and_then(|c| c.mean_ndcg))
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_json(&mut buf).py()?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).py()?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyfunction]
fn weighted_sq_dist(r: Vec<f64>, x: Vec<f64>, x2: Vec<f64>) -> PyResult<f64> {
    metric::weighted_sq_dist(&r, &x, &x2).py()
}

/// `d_r² + uᵀQu2` with `q` given as a full symmetric matrix.
#[pyfunction]
fn hybrid_sq_dist(
    r: Vec<f64>,
    q: Vec<Vec<f64>>,
    x: Vec<f64>,
    x2: Vec<f64>,
    u: Vec<f64>,
    u2: Vec<f64>,
) -> PyResult<f64> {
    let q = MissingFeatureMatrix::from_full(&q).py()?;
    Ok(metric::weighted_sq_dist(&r, &x, &x2).py()? + q.bilinear(&u, &u2).py()?)
}

/// NDCG@k from the ratings (1, 2, 3) of the retrieved list and of the
/// candidate pool the ideal list is drawn from.
#[pyfunction]
fn ndcg_at_k(retrieved: Vec<u8>, candidates: Vec<u8>, k: usize) -> PyResult<f64> {
    let parse = |v: Vec<u8>| -> PyResult<Vec<Rating>> {
        v.into_iter()
            .map(|s| Rating::try_from(s).map_err(|e: metriq::Error| PyValueError::new_err(e.to_string())))
            .collect()
    };
    let retrieved = parse(retrieved)?;
    let mut ideal = parse(candidates)?;
    ideal.sort_by(|a, b| b.cmp(a));
    eval::ndcg_from_gains(&retrieved, &ideal, k).py()
}

#[pyfunction]
#[pyo3(signature = (
    replications=10, fractions=vec![0.05, 0.075, 0.10, 0.125, 0.15], algorithms=None, seed=0,
    workers=1, n_train=100, n_test=100, k=20, j=20, m=3, noise_sd=synth::DEFAULT_NOISE_SD,
    ndcg_k=10, max_iters=None
))]
#[allow(clippy::too_many_arguments)]
fn run_synthetic_experiment(
    py: Python<'_>,
    replications: usize,
    fractions: Vec<f64>,
    algorithms: Option<Vec<String>>,
    seed: u64,
    workers: usize,
    n_train: usize,
    n_test: usize,
    k: usize,
    j: usize,
    m: usize,
    noise_sd: f64,
    ndcg_k: usize,
    max_iters: Option<usize>,
) -> PyResult<PyReport> {
    let cfg = ExperimentConfig {
        n_train,
        n_test,
        k_features: k,
        j_missing: j,
        m_classes: m,
        noise_sd,
        fractions,
        replications,
        seed,
        ndcg_k,
        algorithms: match algorithms {
            Some(tags) => self::algorithms(tags)?,
            None => Algorithm::FITTED.to_vec(),
        },
        learner: learner(max_iters),
    };
    let inner = py.detach(|| eval::run_synthetic_experiment(&cfg, workers)).py()?;
    Ok(PyReport { inner })
}

#[pyfunction]
#[pyo3(signature = (dataset, algorithms=None, seed=0, workers=1, ndcg_k=10, max_iters=None))]
fn run_loo_experiment(
    py: Python<'_>,
    dataset: &PyDataset,
    algorithms: Option<Vec<String>>,
    seed: u64,
    workers: usize,
    ndcg_k: usize,
    max_iters: Option<usize>,
) -> PyResult<PyReport> {
    let cfg = LooConfig {
        seed,
        ndcg_k,
        algorithms: match algorithms {
            Some(tags) => self::algorithms(tags)?,
            None => Algorithm::FITTED.to_vec(),
        },
        learner: learner(max_iters),
    };
    let ds = &dataset.inner;
    let inner = py.detach(|| eval::run_loo_experiment(ds, &cfg, workers)).py()?;
    Ok(PyReport { inner })
}

#[pymodule(name = "metriq")]
fn metriq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(weighted_sq_dist, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_sq_dist, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_loo_experiment, m)?)?;
    Ok(())
}
