//! Feature vectors, metric parameters, soft labels and the distance functions
//! shared by every learner and by retrieval.
//!
//! Distances are handled as squares throughout. The weighted Euclidean
//! distance is `d_r(x, x')² = Σ_k r_k (x_k − x'_k)²`; the hybrid distance adds
//! the bilinear missing-feature term `uᵀ Q u'` on top.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Tolerance on `Σ u_m = 1` for a [`SoftLabel`].
pub const SOFT_LABEL_TOL: f64 = 1e-9;

/// An observed feature vector. All components are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if let Some(i) = components.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature component {i} is not finite ({})",
                components[i]
            )));
        }
        Ok(FeatureVec(components))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FeatureVec::new(v)
    }
}

impl From<FeatureVec> for Vec<f64> {
    fn from(v: FeatureVec) -> Vec<f64> {
        v.0
    }
}

/// Nonnegative per-feature weights `r` of a weighted Euclidean metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MetricWeights(Vec<f64>);

impl MetricWeights {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some(i) = r.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "metric weight {i} must be finite and nonnegative, got {}",
                r[i]
            )));
        }
        Ok(MetricWeights(r))
    }

    pub fn ones(k: usize) -> Self {
        MetricWeights(vec![1.0; k])
    }

    pub fn scaled(&self, t: f64) -> Result<Self> {
        MetricWeights::new(self.0.iter().map(|v| v * t).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for MetricWeights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for MetricWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        MetricWeights::new(v)
    }
}

impl From<MetricWeights> for Vec<f64> {
    fn from(v: MetricWeights) -> Vec<f64> {
        v.0
    }
}

/// A probability vector over the `M` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::invalid("soft label needs at least one class"));
        }
        if u.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("soft label entries must be finite and nonnegative"));
        }
        let total: f64 = u.iter().sum();
        if (total - 1.0).abs() > SOFT_LABEL_TOL {
            return Err(Error::invalid(format!("soft label sums to {total}, not 1")));
        }
        Ok(SoftLabel(u))
    }

    /// One-hot label for 0-based class index `class`.
    pub fn one_hot(class: usize, m: usize) -> Result<Self> {
        if class >= m {
            return Err(Error::invalid(format!("class index {class} out of range for M = {m}")));
        }
        let mut u = vec![0.0; m];
        u[class] = 1.0;
        Ok(SoftLabel(u))
    }

    pub fn is_one_hot(&self) -> bool {
        self.0.iter().filter(|v| **v == 1.0).count() == 1
            && self.0.iter().filter(|v| **v == 0.0).count() == self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for SoftLabel {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SoftLabel {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SoftLabel::new(v)
    }
}

impl From<SoftLabel> for Vec<f64> {
    fn from(v: SoftLabel) -> Vec<f64> {
        v.0
    }
}

/// Number of free entries of a symmetric `m × m` matrix.
pub fn upper_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Position of entry `(i, j)`, `i ≤ j`, in row-major upper-triangle storage.
pub fn upper_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * m - i * (i + 1) / 2 + j
}

/// Symmetric, element-wise nonnegative `M × M` matrix `Q` stored as its upper
/// triangle (row-major, diagonal included). Symmetry is structural.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QRepr", into = "QRepr")]
pub struct MissingFeatureMatrix {
    m: usize,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct QRepr {
    m: usize,
    upper: Vec<f64>,
}

impl TryFrom<QRepr> for MissingFeatureMatrix {
    type Error = Error;
    fn try_from(r: QRepr) -> Result<Self> {
        MissingFeatureMatrix::from_upper(r.m, r.upper)
    }
}

impl From<MissingFeatureMatrix> for QRepr {
    fn from(q: MissingFeatureMatrix) -> QRepr {
        QRepr { m: q.m, upper: q.upper }
    }
}

impl MissingFeatureMatrix {
    pub fn zeros(m: usize) -> Self {
        MissingFeatureMatrix { m, upper: vec![0.0; upper_len(m)] }
    }

    pub fn from_upper(m: usize, upper: Vec<f64>) -> Result<Self> {
        check_dim(upper_len(m), upper.len())?;
        if upper.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("Q entries must be finite and nonnegative"));
        }
        Ok(MissingFeatureMatrix { m, upper })
    }

    /// Builds `Q` from a full matrix; the lower triangle must mirror the upper.
    pub fn from_full(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let mut upper = Vec::with_capacity(upper_len(m));
        for (i, row) in rows.iter().enumerate() {
            check_dim(m, row.len())?;
            for j in i..m {
                if row[j] != rows[j][i] {
                    return Err(Error::invalid(format!("Q is not symmetric at ({i}, {j})")));
                }
                upper.push(row[j]);
            }
        }
        MissingFeatureMatrix::from_upper(m, upper)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper_index(self.m, i, j)]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn to_full(&self) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn scaled(&self, t: f64) -> Result<Self> {
        MissingFeatureMatrix::from_upper(self.m, self.upper.iter().map(|v| v * t).collect())
    }

    /// `uᵀ Q v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.m, u.len())?;
        check_dim(self.m, v.len())?;
        let mut acc = 0.0;
        for (i, ui) in u.iter().enumerate() {
            if *ui == 0.0 {
                continue;
            }
            for (j, vj) in v.iter().enumerate() {
                acc += ui * self.get(i, j) * vj;
            }
        }
        Ok(acc)
    }
}

/// Squared weighted Euclidean distance `Σ_k r_k (x_k − x2_k)²`.
pub fn weighted_sq_dist(r: &[f64], x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dim(r.len(), x.len())?;
    check_dim(r.len(), x2.len())?;
    Ok(weighted_sq_dist_unchecked(r, x, x2))
}

#[inline]
pub(crate) fn weighted_sq_dist_unchecked(r: &[f64], x: &[f64], x2: &[f64]) -> f64 {
    r.iter()
        .zip(x.iter().zip(x2))
        .map(|(w, (a, b))| {
            let d = a - b;
            w * d * d
        })
        .sum()
}

/// Squared hybrid distance `d_r(x, x2)² + uᵀ Q u2`.
pub fn hybrid_sq_dist(
    r: &[f64],
    q: &MissingFeatureMatrix,
    x: &[f64],
    x2: &[f64],
    u: &[f64],
    u2: &[f64],
) -> Result<f64> {
    Ok(weighted_sq_dist(r, x, x2)? + q.bilinear(u, u2)?)
}

/// A database hit: position in the searched slice and its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// The `k` database entries closest to a query under `dist`, ascending.
///
/// Ties are resolved by insertion order: the sort is stable over database
/// positions.
pub fn rank_neighbors<T, F>(database: &[T], k: usize, dist: F) -> Result<Vec<Neighbor>>
where
    F: Fn(&T) -> f64,
{
    if database.is_empty() {
        return Err(Error::invalid("cannot rank an empty database"));
    }
    if k == 0 || k > database.len() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={}",
            database.len()
        )));
    }
    let mut hits: Vec<Neighbor> = database
        .iter()
        .enumerate()
        .map(|(index, item)| Neighbor { index, distance: dist(item) })
        .collect();
    hits.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    hits.truncate(k);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_difference_with_unit_weights() {
        let r = [1.0; 4];
        let x = [0.3, -1.0, 2.0, 0.0];
        let mut x2 = x;
        x2[0] += 1.0;
        assert!((weighted_sq_dist(&r, &x, &x2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(weighted_sq_dist(&r, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_weighted_distance() {
        let d = weighted_sq_dist(&[2.0, 3.0], &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(d, 14.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            weighted_sq_dist(&[1.0, 1.0], &[0.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn one_hot_labels_select_q_entry() {
        let q = MissingFeatureMatrix::from_full(&[
            vec![1.0, 5.0, 2.0],
            vec![5.0, 3.0, 7.0],
            vec![2.0, 7.0, 0.5],
        ])
        .unwrap();
        let x = [1.0, 2.0];
        let y = [0.0, 4.0];
        let r = [0.5, 0.25];
        let base = weighted_sq_dist(&r, &x, &y).unwrap();
        for c in 0..3 {
            for c2 in 0..3 {
                let u = SoftLabel::one_hot(c, 3).unwrap();
                let u2 = SoftLabel::one_hot(c2, 3).unwrap();
                let d = hybrid_sq_dist(&r, &q, &x, &y, &u, &u2).unwrap();
                assert_eq!(d, base + q.get(c, c2));
            }
        }
    }

    #[test]
    fn zero_q_reduces_to_weighted() {
        let q = MissingFeatureMatrix::zeros(2);
        let u = SoftLabel::new(vec![0.3, 0.7]).unwrap();
        let d = hybrid_sq_dist(&[2.0, 3.0], &q, &[0.0, 0.0], &[1.0, 2.0], &u, &u).unwrap();
        assert_eq!(d, 14.0);
    }

    #[test]
    fn bilinear_form_hand_evaluation() {
        let q = MissingFeatureMatrix::from_full(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let u = [0.5, 0.5];
        let d = hybrid_sq_dist(&[0.0], &q, &[3.0], &[1.0], &u, &u).unwrap();
        assert!((d - 2.25).abs() < 1e-15);
    }

    #[test]
    fn upper_triangle_layout() {
        let m = 4;
        let mut seen = vec![false; upper_len(m)];
        for i in 0..m {
            for j in i..m {
                let k = upper_index(m, i, j);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(k, upper_index(m, j, i));
            }
        }
        assert!(seen.into_iter().all(|s| s));
        assert_eq!(upper_len(3), 6);
    }

    #[test]
    fn asymmetric_or_negative_q_rejected() {
        assert!(MissingFeatureMatrix::from_full(&[vec![1.0, 2.0], vec![3.0, 4.0]]).is_err());
        assert!(MissingFeatureMatrix::from_upper(2, vec![1.0, -0.1, 1.0]).is_err());
        assert!(MissingFeatureMatrix::from_upper(2, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn invalid_domain_values_rejected() {
        assert!(FeatureVec::new(vec![1.0, f64::NAN]).is_err());
        assert!(MetricWeights::new(vec![1.0, -1e-9]).is_err());
        assert!(SoftLabel::new(vec![0.5, 0.4]).is_err());
        assert!(SoftLabel::one_hot(3, 3).is_err());
        assert!(SoftLabel::one_hot(1, 3).unwrap().is_one_hot());
    }

    #[test]
    fn rank_one_dimensional_database() {
        let db = [0.0, 5.0, 1.0];
        let hits = rank_neighbors(&db, 2, |v| weighted_sq_dist(&[1.0], &[0.0], &[*v]).unwrap())
            .unwrap();
        let idx: Vec<usize> = hits.iter().map(|h| h.index).collect();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn ties_resolved_by_insertion_index() {
        let db = vec![(); 7];
        let hits = rank_neighbors(&db, 4, |_| 3.0).unwrap();
        let idx: Vec<usize> = hits.iter().map(|h| h.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rank_rejects_oversized_k() {
        assert!(rank_neighbors(&[1.0, 2.0], 3, |v| *v).is_err());
        assert!(rank_neighbors::<f64, _>(&[], 1, |v| *v).is_err());
    }
}
