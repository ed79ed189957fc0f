//! Ratings plus class labels: the squared distance gains a term `uᵀQu'` over
//! (soft) class labels, with `Q` symmetric and element-wise nonnegative.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::barrier::BarrierProgram;
use super::kde::{fit_kde_classifier, kde_posterior, KdeClassifier};
use super::{sq_diff, LearnerConfig};
use crate::data::{LabeledExample, Rating, RatingExample};
use crate::error::{check_dim, Error, Result};
use crate::metric::{
    hybrid_sq_dist, upper_index, upper_len, FeatureVec, MetricWeights, MissingFeatureMatrix,
    SoftLabel,
};
use crate::solver::{SolverConfig, SolverSummary};

/// Starting value of every free entry of `Q`.
const Q_INIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub r: MetricWeights,
    pub q: MissingFeatureMatrix,
    pub classifier: KdeClassifier,
    pub solver: SolverSummary,
}

impl HybridModel {
    pub fn num_classes(&self) -> usize {
        self.q.dim()
    }

    /// One-hot for a known class, the classifier posterior otherwise.
    pub fn soft_label(&self, x: &[f64], class: Option<usize>) -> Result<SoftLabel> {
        match class {
            Some(c) => SoftLabel::one_hot(c, self.num_classes()),
            None => kde_posterior(&self.classifier, x),
        }
    }

    pub fn sq_dist(&self, x: &[f64], x2: &[f64], u: &[f64], u2: &[f64]) -> Result<f64> {
        hybrid_sq_dist(&self.r, &self.q, x, x2, u, u2)
    }
}

/// `φ` such that `d_r(x, x2)² + uᵀQu2 = (r, upper(Q)) · φ`.
pub fn hybrid_pair_terms(x: &[f64], x2: &[f64], u: &[f64], u2: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), x2.len())?;
    check_dim(u.len(), u2.len())?;
    let m = u.len();
    let mut phi = sq_diff(x, x2);
    phi.resize(x.len() + upper_len(m), 0.0);
    let q = &mut phi[x.len()..];
    for i in 0..m {
        for j in i..m {
            q[upper_index(m, i, j)] =
                if i == j { u[i] * u2[i] } else { u[i] * u2[j] + u[j] * u2[i] };
        }
    }
    Ok(phi)
}

/// Soft labels for every object that appears in a rating: one-hot for objects
/// in `labels`, the classifier posterior for the rest.
pub fn soft_labels(
    features: &[FeatureVec],
    ratings: &[RatingExample],
    labels: &[LabeledExample],
    clf: &KdeClassifier,
) -> Result<HashMap<usize, SoftLabel>> {
    let m = clf.num_classes();
    let known: HashMap<usize, usize> = labels.iter().map(|l| (l.object, l.class)).collect();
    let mut out = HashMap::new();
    for o in ratings.iter().flat_map(|r| [r.a, r.b]) {
        if out.contains_key(&o) {
            continue;
        }
        let x = features.get(o).ok_or_else(|| Error::invalid("rating refers to an unknown object"))?;
        let u = match known.get(&o) {
            Some(&c) => SoftLabel::one_hot(c, m)?,
            None => kde_posterior(clf, x)?,
        };
        out.insert(o, u);
    }
    Ok(out)
}

/// Fits the soft classifier on `labels`, then `(r, Q)`.
///
/// With a single class the classifier is the constant posterior `(1)`.
pub fn fit_hybrid<R: Rng + ?Sized>(
    features: &[FeatureVec],
    ratings: &[RatingExample],
    labels: &[LabeledExample],
    m: usize,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<HybridModel> {
    if labels.is_empty() {
        return Err(Error::invalid("the hybrid learner needs labelled examples"));
    }
    let clf = if m == 1 {
        KdeClassifier::single_class(features.first().map_or(0, |x| x.len()))
    } else {
        fit_kde_classifier(features, labels, m, cfg, rng)?
    };
    fit_hybrid_with_classifier(features, ratings, labels, clf, &cfg.solver, false)
}

/// Solves for `(r, Q)` given a fitted classifier, from `r = 1`, `Q = 1e-3`.
///
/// `freeze_q` pins `Q` at zero, which leaves exactly the ratings-only program.
pub fn fit_hybrid_with_classifier(
    features: &[FeatureVec],
    ratings: &[RatingExample],
    labels: &[LabeledExample],
    classifier: KdeClassifier,
    cfg: &SolverConfig,
    freeze_q: bool,
) -> Result<HybridModel> {
    let k = features.first().map_or(0, |x| x.len());
    let m = classifier.num_classes();
    let u = soft_labels(features, ratings, labels, &classifier)?;
    let dim = if freeze_q { k } else { k + upper_len(m) };
    let mut similar = Vec::new();
    let mut dissimilar = Vec::new();
    for r in ratings {
        let bucket = match r.rating {
            Rating::Similar => &mut similar,
            Rating::Dissimilar => &mut dissimilar,
            Rating::Neutral => continue,
        };
        let mut phi = hybrid_pair_terms(&features[r.a], &features[r.b], &u[&r.a], &u[&r.b])?;
        phi.truncate(dim);
        bucket.push(phi);
    }
    let program = BarrierProgram::new(dim, similar, dissimilar)?;
    let mut init = vec![1.0; k];
    init.resize(dim, Q_INIT);
    let sol = program.solve(&init, cfg)?;
    let r = MetricWeights::new(sol.params[..k].to_vec())?;
    let q = if freeze_q {
        MissingFeatureMatrix::zeros(m)
    } else {
        MissingFeatureMatrix::from_upper(m, sol.params[k..].to_vec())?
    };
    Ok(HybridModel { r, q, classifier, solver: sol.solver })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_xing;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVec {
        FeatureVec::new(v.to_vec()).unwrap()
    }

    fn rating(a: usize, b: usize, v: u8) -> RatingExample {
        RatingExample { a, b, rating: Rating::try_from(v).unwrap() }
    }

    fn labels(classes: &[usize]) -> Vec<LabeledExample> {
        classes.iter().enumerate().map(|(object, &class)| LabeledExample { object, class }).collect()
    }

    #[test]
    fn pair_terms_reproduce_hybrid_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let raw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                let s: f64 = v.iter().sum();
                v.iter().map(|a| a / s).collect()
            };
            let (u, u2) = (raw(&mut rng), raw(&mut rng));
            let r: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
            let qu: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
            let q = MissingFeatureMatrix::from_upper(3, qu.clone()).unwrap();
            let direct = hybrid_sq_dist(&r, &q, &x, &y, &u, &u2).unwrap();
            let phi = hybrid_pair_terms(&x, &y, &u, &u2).unwrap();
            let theta: Vec<f64> = r.iter().chain(&qu).copied().collect();
            let lin: f64 = theta.iter().zip(&phi).map(|(a, b)| a * b).sum();
            assert!((direct - lin).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn same_class_identical_features_gives_unit_q() {
        let f = vec![fv(&[0.0]); 3];
        let s = vec![rating(0, 1, 3), rating(0, 2, 1)];
        let g = labels(&[0, 0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = fit_hybrid(&f, &s, &g, 1, &LearnerConfig::default(), &mut rng).unwrap();
        assert!((model.q.get(0, 0) - 1.0).abs() < 1e-3, "{:?}", model.q);
    }

    #[test]
    fn three_classes_add_six_parameters() {
        let f: Vec<FeatureVec> = (0..4).map(|i| fv(&[i as f64, 0.5 * i as f64])).collect();
        let s = vec![rating(0, 1, 3), rating(0, 3, 1), rating(2, 3, 3), rating(1, 3, 1)];
        let g = labels(&[0, 1, 2, 1]);
        let clf = KdeClassifier::new(
            MetricWeights::new(vec![1.0, 1.0]).unwrap(),
            g.iter().map(|l| f[l.object].clone()).collect(),
            g.iter().map(|l| l.class).collect(),
            3,
            1.0,
        )
        .unwrap();
        let model =
            fit_hybrid_with_classifier(&f, &s, &g, clf, &SolverConfig::default(), false).unwrap();
        assert_eq!(model.r.len() + model.q.upper().len(), 2 + 6);
    }

    /// Smallest `Q00 + Q11` over a grid with `2√Q01 ≥ 1`.
    fn grid_oracle() -> f64 {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.02).collect();
        let mut best = f64::INFINITY;
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    if 2.0 * b.sqrt() >= 1.0 {
                        best = best.min(a + c);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn class_aligned_ratings_favour_off_diagonal_q() {
        let f = vec![fv(&[1.0]); 4];
        let s = vec![rating(0, 1, 3), rating(2, 3, 3), rating(0, 2, 1), rating(1, 3, 1)];
        let g = labels(&[0, 0, 1, 1]);
        let clf = KdeClassifier::new(
            MetricWeights::ones(1),
            f.clone(),
            vec![0, 0, 1, 1],
            2,
            1.0,
        )
        .unwrap();
        let model =
            fit_hybrid_with_classifier(&f, &s, &g, clf, &SolverConfig::default(), false).unwrap();
        let (q00, q01, q11) = (model.q.get(0, 0), model.q.get(0, 1), model.q.get(1, 1));
        assert!(q00 < q01 && q11 < q01, "{:?}", model.q);
        assert!((q00 + q11 - grid_oracle()).abs() < 1e-9);
        assert!((2.0 * q01.sqrt() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn frozen_q_reproduces_ratings_only_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f: Vec<FeatureVec> = (0..12)
            .map(|_| fv(&(0..3).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let mut s = Vec::new();
        for a in 0..12 {
            for b in 0..12 {
                if a != b {
                    s.push(rating(a, b, [1, 2, 3][(a * 7 + b * 3) % 3]));
                }
            }
        }
        let g = labels(&(0..12).map(|i| i % 2).collect::<Vec<_>>());
        let clf = KdeClassifier::new(
            MetricWeights::ones(3),
            g.iter().map(|l| f[l.object].clone()).collect(),
            g.iter().map(|l| l.class).collect(),
            2,
            1.0,
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let hyb = fit_hybrid_with_classifier(&f, &s, &g, clf, &cfg, true).unwrap();
        let xing = fit_xing(&f, &s, &cfg).unwrap();
        for (a, b) in hyb.r.iter().zip(xing.r.iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!(hyb.q.upper().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn soft_labels_follow_one_hot_rule() {
        let f: Vec<FeatureVec> = (0..5).map(|i| fv(&[i as f64])).collect();
        let g = vec![
            LabeledExample { object: 0, class: 0 },
            LabeledExample { object: 1, class: 1 },
            LabeledExample { object: 2, class: 2 },
        ];
        let clf = KdeClassifier::new(
            MetricWeights::new(vec![0.0]).unwrap(),
            g.iter().map(|l| f[l.object].clone()).collect(),
            g.iter().map(|l| l.class).collect(),
            3,
            1.0,
        )
        .unwrap();
        let s = vec![rating(1, 4, 3), rating(3, 0, 1)];
        let u = soft_labels(&f, &s, &g, &clf).unwrap();
        assert_eq!(u.len(), 4);
        assert_eq!(u[&1].as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(u[&4].as_slice(), clf.priors.as_slice());
        for v in u.values() {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
