use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, LooConfig};
use crate::data::ObjectRef;
use crate::error::Result;
use crate::model::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMode {
    Synthetic,
    Loo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase", deny_unknown_fields)]
pub enum RunOutcome {
    Success {
        /// Mean NDCG@k over the run's queries.
        ndcg: f64,
        iterations: Option<usize>,
        converged: Option<bool>,
        lambda: Option<f64>,
    },
    Failed {
        error: String,
    },
}

/// One fit-and-score run: an (algorithm, fraction) cell of one replication,
/// or one leave-one-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub fraction: f64,
    /// Replication number, or fold number in leave-one-out mode.
    pub replication: usize,
    pub seed: u64,
    pub held_out: Option<ObjectRef>,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn ndcg(&self) -> Option<f64> {
        match self.outcome {
            RunOutcome::Success { ndcg, .. } => Some(ndcg),
            RunOutcome::Failed { .. } => None,
        }
    }
}

/// Aggregate over the successful runs of one (algorithm, fraction) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSummary {
    pub algorithm: Algorithm,
    pub fraction: f64,
    pub mean_ndcg: Option<f64>,
    /// Sample standard deviation (`n − 1` denominator); 0 for a single run.
    pub sd: Option<f64>,
    pub n_success: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub mode: ExperimentMode,
    pub synthetic: Option<ExperimentConfig>,
    pub loo: Option<LooConfig>,
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
}

impl ExperimentReport {
    pub fn cell(&self, algorithm: Algorithm, fraction: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.algorithm == algorithm && c.fraction == fraction)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().map(|c| c.n_failed).sum()
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// One row per cell: `algorithm,fraction,mean_ndcg,sd,n_success`. Cells
    /// without a successful run leave the statistics empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "fraction", "mean_ndcg", "sd", "n_success"])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.cells {
            w.write_record([
                c.algorithm.tag().to_string(),
                c.fraction.to_string(),
                opt(c.mean_ndcg),
                opt(c.sd),
                c.n_success.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean and sample standard deviation, summing in the given order.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

/// Cells in `algorithms × fractions` order, aggregating runs in run order.
pub fn aggregate(runs: &[RunRecord], algorithms: &[Algorithm], fractions: &[f64]) -> Vec<CellSummary> {
    let mut cells = Vec::with_capacity(algorithms.len() * fractions.len());
    for &algorithm in algorithms {
        for &fraction in fractions {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.algorithm == algorithm && r.fraction == fraction)
                .collect();
            let values: Vec<f64> = cell.iter().filter_map(|r| r.ndcg()).collect();
            let stats = mean_sd(&values);
            cells.push(CellSummary {
                algorithm,
                fraction,
                mean_ndcg: stats.map(|s| s.0),
                sd: stats.map(|s| s.1),
                n_success: values.len(),
                n_failed: cell.len() - values.len(),
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(algorithm: Algorithm, fraction: f64, rep: usize, ndcg: Option<f64>) -> RunRecord {
        RunRecord {
            algorithm,
            fraction,
            replication: rep,
            seed: rep as u64,
            held_out: None,
            outcome: match ndcg {
                Some(ndcg) => RunOutcome::Success { ndcg, iterations: None, converged: None, lambda: None },
                None => RunOutcome::Failed { error: "degenerate rating set".into() },
            },
        }
    }

    #[test]
    fn failed_runs_are_excluded_and_counted() {
        let runs = vec![
            run(Algorithm::Co, 0.05, 0, Some(0.5)),
            run(Algorithm::Co, 0.05, 1, None),
            run(Algorithm::Co, 0.05, 2, Some(0.7)),
            run(Algorithm::Hyb, 0.05, 0, None),
        ];
        let cells = aggregate(&runs, &[Algorithm::Co, Algorithm::Hyb], &[0.05]);
        assert_eq!(cells[0].n_success, 2);
        assert_eq!(cells[0].n_failed, 1);
        assert!((cells[0].mean_ndcg.unwrap() - 0.6).abs() < 1e-15);
        assert!((cells[0].sd.unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(cells[1].mean_ndcg, None);
        assert_eq!(cells[1].n_failed, 1);
    }

    #[test]
    fn single_value_has_zero_sd() {
        assert_eq!(mean_sd(&[0.25]), Some((0.25, 0.0)));
        assert_eq!(mean_sd(&[]), None);
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let runs = vec![run(Algorithm::Or, 0.1, 0, Some(0.5)), run(Algorithm::Co, 0.1, 0, None)];
        let report = ExperimentReport {
            mode: ExperimentMode::Synthetic,
            synthetic: None,
            loo: None,
            cells: aggregate(&runs, &[Algorithm::Or, Algorithm::Co], &[0.1]),
            runs,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "algorithm,fraction,mean_ndcg,sd,n_success\nor,0.1,0.5,0,1\nco,0.1,,,0\n"
        );
    }
}
