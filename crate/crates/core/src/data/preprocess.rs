//! Redundant-feature removal and standardization.

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::metric::FeatureVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub feature: usize,
    /// Earlier kept feature it correlates with. Equals `feature` for a
    /// constant column.
    pub kept_partner: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub threshold: f64,
    pub kept_feature_indices: Vec<usize>,
    pub dropped_pairs: Vec<DroppedFeature>,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

/// Per-feature affine standardization fitted on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(v, (mu, sd))| (v - mu) / sd)
            .collect()
    }
}

fn column(rows: &[Vec<f64>], k: usize) -> impl Iterator<Item = f64> + Clone + '_ {
    rows.iter().map(move |r| r[k])
}

fn mean_and_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Sample Pearson correlation; `None` when either column is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Greedy scan in feature order: a feature is dropped when its absolute
/// correlation with an already kept feature exceeds `threshold`. Constant
/// features are dropped with correlation `1.0`.
///
/// The returned report has empty `means` / `std_devs`.
pub fn filter_correlated(
    rows: &[Vec<f64>],
    threshold: f64,
) -> Result<(PreprocessReport, Vec<Vec<f64>>)> {
    if rows.len() < 2 {
        return Err(Error::invalid("correlation filtering needs at least two objects"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1]")));
    }
    let k0 = rows[0].len();
    if rows.iter().any(|r| r.len() != k0) {
        return Err(Error::invalid("ragged feature matrix"));
    }
    let cols: Vec<Vec<f64>> = (0..k0).map(|k| column(rows, k).collect()).collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    'features: for k in 0..k0 {
        if pearson(&cols[k], &cols[k]).is_none() {
            dropped.push(DroppedFeature { feature: k, kept_partner: k, correlation: 1.0 });
            continue;
        }
        for &j in &kept {
            let rho = pearson(&cols[j], &cols[k]).expect("kept features have variance");
            if rho.abs() > threshold {
                dropped.push(DroppedFeature { feature: k, kept_partner: j, correlation: rho });
                continue 'features;
            }
        }
        kept.push(k);
    }
    let reduced = rows.iter().map(|r| kept.iter().map(|&k| r[k]).collect()).collect();
    let report = PreprocessReport {
        threshold,
        kept_feature_indices: kept,
        dropped_pairs: dropped,
        means: Vec::new(),
        std_devs: Vec::new(),
    };
    Ok((report, reduced))
}

/// Standardizes every column to mean 0 and sample (N − 1) deviation 1.
pub fn normalize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardizer)> {
    if rows.len() < 2 {
        return Err(Error::invalid("normalization needs at least two objects"));
    }
    let k = rows[0].len();
    let mut means = Vec::with_capacity(k);
    let mut std_devs = Vec::with_capacity(k);
    for j in 0..k {
        let (mu, sd) = mean_and_sd(column(rows, j));
        if !(sd > 0.0) {
            return Err(Error::invalid(format!(
                "feature {j} has zero variance; filter it before normalizing"
            )));
        }
        means.push(mu);
        std_devs.push(sd);
    }
    let st = Standardizer { means, std_devs };
    let out = rows.iter().map(|r| st.apply(r)).collect();
    Ok((out, st))
}

/// Correlation filtering followed by standardization of the kept features.
pub fn preprocess_dataset(ds: &Dataset, threshold: f64) -> Result<(Dataset, PreprocessReport)> {
    let rows: Vec<Vec<f64>> = ds.features().iter().map(|x| x.to_vec()).collect();
    let (mut report, reduced) = filter_correlated(&rows, threshold)?;
    let (standardized, st) = normalize(&reduced)?;
    report.means = st.means;
    report.std_devs = st.std_devs;
    let features = standardized
        .into_iter()
        .map(FeatureVec::new)
        .collect::<Result<Vec<_>>>()?;
    Ok((ds.with_features(features)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transpose(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..cols[0].len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
    }

    #[test]
    fn identical_columns_second_dropped() {
        let rows = transpose(&[vec![1.0, 2.0, 4.0, 3.0], vec![1.0, 2.0, 4.0, 3.0]]);
        let (rep, red) = filter_correlated(&rows, 0.95).unwrap();
        assert_eq!(rep.kept_feature_indices, vec![0]);
        assert_eq!(rep.dropped_pairs.len(), 1);
        assert_eq!(rep.dropped_pairs[0].kept_partner, 0);
        assert!((rep.dropped_pairs[0].correlation - 1.0).abs() < 1e-12);
        assert_eq!(red[2], vec![4.0]);
    }

    #[test]
    fn orthogonal_columns_kept() {
        let rows = transpose(&[vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]]);
        let (rep, _) = filter_correlated(&rows, 0.95).unwrap();
        assert_eq!(rep.kept_feature_indices, vec![0, 1]);
        assert!(rep.dropped_pairs.is_empty());
    }

    #[test]
    fn negative_correlation_counts() {
        let rows = transpose(&[vec![1.0, 2.0, 3.0], vec![-2.0, -4.0, -6.0]]);
        let (rep, _) = filter_correlated(&rows, 0.95).unwrap();
        assert_eq!(rep.kept_feature_indices, vec![0]);
        assert!(rep.dropped_pairs[0].correlation < -0.99);
    }

    #[test]
    fn constant_feature_dropped_with_sentinel() {
        let rows = transpose(&[vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 0.0]]);
        let (rep, _) = filter_correlated(&rows, 0.95).unwrap();
        assert_eq!(rep.kept_feature_indices, vec![1]);
        assert_eq!(
            rep.dropped_pairs,
            vec![DroppedFeature { feature: 0, kept_partner: 0, correlation: 1.0 }]
        );
    }

    #[test]
    fn random_columns_with_one_copy_against_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let mut cols: Vec<Vec<f64>> =
            (0..5).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        cols.insert(3, cols[1].clone());
        let rows = transpose(&cols);
        let (rep, _) = filter_correlated(&rows, 0.95).unwrap();
        assert_eq!(rep.kept_feature_indices, vec![0, 1, 2, 4, 5]);
        assert_eq!(rep.dropped_pairs.len(), 1);
        assert_eq!(rep.dropped_pairs[0].feature, 3);

        // full pairwise matrix: no kept pair above threshold
        for (a, &i) in rep.kept_feature_indices.iter().enumerate() {
            for &j in &rep.kept_feature_indices[a + 1..] {
                let rho = naive_corr(&cols[i], &cols[j]);
                assert!(rho.abs() <= 0.95, "kept pair ({i},{j}) has {rho}");
            }
        }
    }

    fn naive_corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
    }

    #[test]
    fn normalize_uses_sample_deviation() {
        let (out, st) = normalize(&[vec![0.0], vec![2.0]]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out[0][0] + h).abs() < 1e-12);
        assert!((out[1][0] - h).abs() < 1e-12);
        assert_eq!(st.means, vec![1.0]);
        assert!((st.std_devs[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let rows = vec![vec![1.0, 10.0], vec![2.0, -3.0], vec![4.5, 0.0], vec![-1.0, 2.0]];
        let (once, _) = normalize(&rows).unwrap();
        let (twice, st) = normalize(&once).unwrap();
        for (a, b) in once.iter().flatten().zip(twice.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(st.means.iter().all(|m| m.abs() < 1e-9));
        assert!(st.std_devs.iter().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn normalize_rejects_constant_column() {
        assert!(normalize(&[vec![1.0, 3.0], vec![2.0, 3.0]]).is_err());
    }
}
