//! Kernel-density soft classifier used by the hybrid learner to label objects
//! that carry no class.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lambda::{select_lambda, LambdaFit};
use super::{check_labels, dot, log_floor, LearnerConfig, PairDiffs, PROB_FLOOR};
use crate::data::LabeledExample;
use crate::error::{check_dim, Error, Result};
use crate::metric::{weighted_sq_dist_unchecked, FeatureVec, MetricWeights, SoftLabel};
use crate::solver::{minimize, project_nonneg, Objective, SolverConfig, SolverSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeClassifier {
    pub w: MetricWeights,
    pub train_x: Vec<FeatureVec>,
    pub train_class: Vec<usize>,
    pub priors: Vec<f64>,
    pub lambda_used: f64,
    pub solver: Option<SolverSummary>,
}

impl KdeClassifier {
    /// Priors are the class frequencies of the training set; every one of the
    /// `m` classes needs at least one training point.
    pub fn new(
        w: MetricWeights,
        train_x: Vec<FeatureVec>,
        train_class: Vec<usize>,
        m: usize,
        lambda_used: f64,
    ) -> Result<Self> {
        check_dim(train_x.len(), train_class.len())?;
        for x in &train_x {
            check_dim(w.len(), x.len())?;
        }
        let counts = class_counts(&train_class, m)?;
        if let Some(c) = counts.iter().position(|n| *n == 0) {
            return Err(Error::invalid(format!("class {} has no training points", c + 1)));
        }
        let n = train_class.len() as f64;
        let priors = counts.iter().map(|c| *c as f64 / n).collect();
        Ok(KdeClassifier { w, train_x, train_class, priors, lambda_used, solver: None })
    }

    pub fn num_classes(&self) -> usize {
        self.priors.len()
    }

    /// A classifier for a single class: every posterior is `(1)`.
    pub fn single_class(k: usize) -> Self {
        KdeClassifier {
            w: MetricWeights::new(vec![0.0; k]).expect("zeros are valid weights"),
            train_x: Vec::new(),
            train_class: Vec::new(),
            priors: vec![1.0],
            lambda_used: 0.0,
            solver: None,
        }
    }

    fn from_labels(
        features: &[FeatureVec],
        labels: &[LabeledExample],
        m: usize,
        w: MetricWeights,
        lambda: f64,
    ) -> Result<Self> {
        KdeClassifier::new(
            w,
            labels.iter().map(|l| features[l.object].clone()).collect(),
            labels.iter().map(|l| l.class).collect(),
            m,
            lambda,
        )
    }
}

fn class_counts(classes: &[usize], m: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; m];
    for &c in classes {
        *counts
            .get_mut(c)
            .ok_or_else(|| Error::invalid(format!("class {} out of range", c + 1)))? += 1;
    }
    Ok(counts)
}

/// `P̂(c | x) ∝ P̂(c) · mean_{x' ∈ c} exp(−Σ_k w_k (x_k − x'_k)²)`, evaluated in
/// log space. Falls back to the priors if every density vanishes.
pub fn kde_posterior(clf: &KdeClassifier, x: &[f64]) -> Result<SoftLabel> {
    let m = clf.num_classes();
    if clf.train_x.is_empty() {
        return SoftLabel::new(clf.priors.clone());
    }
    check_dim(clf.w.len(), x.len())?;
    let dists: Vec<f64> =
        clf.train_x.iter().map(|t| weighted_sq_dist_unchecked(&clf.w, x, t)).collect();
    let shift = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (d, &c) in dists.iter().zip(&clf.train_class) {
        sums[c] += (shift - d).exp();
        counts[c] += 1;
    }
    let mut post: Vec<f64> = (0..m)
        .map(|c| if counts[c] == 0 { 0.0 } else { clf.priors[c] * sums[c] / counts[c] as f64 })
        .collect();
    let z: f64 = post.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return SoftLabel::new(clf.priors.clone());
    }
    for p in &mut post {
        *p /= z;
    }
    SoftLabel::new(post)
}

/// Negative penalized leave-one-out log-likelihood of the posterior over `w ≥ 0`.
///
/// For held-out `i` the class-`c` density averages over the `n_c^{(−i)}`
/// remaining class-`c` points and the priors stay at the full-set frequencies;
/// a class with no remaining points contributes zero density.
pub struct KdeLooObjective {
    n: usize,
    k: usize,
    m: usize,
    classes: Vec<usize>,
    counts: Vec<usize>,
    priors: Vec<f64>,
    diffs: PairDiffs,
    lambda: f64,
}

impl KdeLooObjective {
    pub fn new(
        features: &[FeatureVec],
        labels: &[LabeledExample],
        m: usize,
        lambda: f64,
    ) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid("need at least two labelled examples"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("λ = {lambda} must be finite and ≥ 0")));
        }
        let classes: Vec<usize> = labels.iter().map(|l| l.class).collect();
        let counts = class_counts(&classes, m)?;
        let n = labels.len();
        let points: Vec<&[f64]> = labels.iter().map(|l| features[l.object].as_slice()).collect();
        Ok(KdeLooObjective {
            n,
            k: points[0].len(),
            m,
            priors: counts.iter().map(|c| *c as f64 / n as f64).collect(),
            classes,
            counts,
            diffs: PairDiffs::new(&points),
            lambda,
        })
    }

    /// Class weights `a_c = P̂(c) / n_c^{(−i)}` for held-out `i`.
    fn weights(&self, i: usize) -> Vec<f64> {
        (0..self.m)
            .map(|c| {
                let n = self.counts[c] - usize::from(self.classes[i] == c);
                if n == 0 { 0.0 } else { self.priors[c] / n as f64 }
            })
            .collect()
    }

    /// Leave-one-out posterior of point `i` over all classes.
    pub fn loo_posterior(&self, w: &[f64], i: usize) -> Vec<f64> {
        let e = self.kernel_row(w, i);
        let a = self.weights(i);
        let mut post = vec![0.0; self.m];
        for (j, ej) in e.iter().enumerate() {
            if j != i {
                post[self.classes[j]] += a[self.classes[j]] * ej;
            }
        }
        let z: f64 = post.iter().sum();
        if z > 0.0 {
            post.iter_mut().for_each(|p| *p /= z);
            post
        } else {
            self.priors.clone()
        }
    }

    /// Shifted kernel values `exp(min_d − d_ij)` (zero on the diagonal).
    fn kernel_row(&self, w: &[f64], i: usize) -> Vec<f64> {
        let d: Vec<f64> = (0..self.n)
            .map(|j| if j == i { f64::INFINITY } else { dot(w, self.diffs.row(i, j)) })
            .collect();
        let shift = d.iter().copied().fold(f64::INFINITY, f64::min);
        d.iter().map(|dj| (shift - dj).exp()).collect()
    }

    /// Sum over points of the floored log LOO posterior of the true class.
    pub fn loo_log_lik(&self, w: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| self.loo_posterior(w, i)[self.classes[i]].max(PROB_FLOOR).ln())
            .sum()
    }

    pub fn num_params(&self) -> usize {
        self.k
    }
}

impl Objective for KdeLooObjective {
    fn value(&self, w: &[f64]) -> f64 {
        -self.loo_log_lik(w) + self.lambda * w.iter().sum::<f64>()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![self.lambda; self.k];
        for i in 0..self.n {
            let e = self.kernel_row(w, i);
            let a = self.weights(i);
            let ci = self.classes[i];
            let mut own = 0.0;
            let mut z = 0.0;
            for (j, ej) in e.iter().enumerate() {
                if j == i {
                    continue;
                }
                let c = self.classes[j];
                z += a[c] * ej;
                if c == ci {
                    own += ej;
                }
            }
            if own == 0.0 || z == 0.0 || (a[ci] * own / z).ln() <= log_floor() {
                continue;
            }
            // ∂(−ln P_i)/∂w = Σ_{j ∈ c_i} (e_j / S) δ_ij − Σ_j (a_{c_j} e_j / Z) δ_ij
            for (j, ej) in e.iter().enumerate() {
                if j == i || *ej == 0.0 {
                    continue;
                }
                let c = self.classes[j];
                let mut coef = -a[c] * ej / z;
                if c == ci {
                    coef += ej / own;
                }
                for (gk, dk) in g.iter_mut().zip(self.diffs.row(i, j)) {
                    *gk += coef * dk;
                }
            }
        }
        g
    }

    fn project(&self, w: &mut [f64]) {
        let n = w.len();
        project_nonneg(w, 0..n);
    }
}

impl LambdaFit for KdeClassifier {
    fn fit(
        features: &[FeatureVec],
        labels: &[LabeledExample],
        m: usize,
        lambda: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        check_labels(features, labels, m)?;
        let obj = KdeLooObjective::new(features, labels, m, lambda)?;
        let res = minimize(&obj, &vec![1.0; obj.k], cfg)?;
        let mut clf = KdeClassifier::from_labels(
            features,
            labels,
            m,
            MetricWeights::new(res.params.clone())?,
            lambda,
        )?;
        clf.solver = Some(res.summary());
        Ok(clf)
    }

    fn validation_log_lik(
        &self,
        features: &[FeatureVec],
        _train: &[LabeledExample],
        held: &[LabeledExample],
    ) -> Result<f64> {
        let mut total = 0.0;
        for h in held {
            let post = kde_posterior(self, &features[h.object])?;
            total += post[h.class].max(PROB_FLOOR).ln();
        }
        Ok(total)
    }
}

/// Fits `w` by penalized leave-one-out likelihood with λ chosen on a random split.
pub fn fit_kde_classifier<R: Rng + ?Sized>(
    features: &[FeatureVec],
    labels: &[LabeledExample],
    m: usize,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<KdeClassifier> {
    Ok(select_lambda::<KdeClassifier, R>(features, labels, m, cfg, rng)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{finite_diff_gradient, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fv(v: &[f64]) -> FeatureVec {
        FeatureVec::new(v.to_vec()).unwrap()
    }

    fn labels(classes: &[usize]) -> Vec<LabeledExample> {
        classes.iter().enumerate().map(|(object, &class)| LabeledExample { object, class }).collect()
    }

    #[test]
    fn zero_weights_return_priors() {
        let clf = KdeClassifier::new(
            MetricWeights::new(vec![0.0, 0.0]).unwrap(),
            vec![fv(&[0.0, 1.0]), fv(&[5.0, 2.0]), fv(&[3.0, 3.0])],
            vec![0, 1, 1],
            2,
            1.0,
        )
        .unwrap();
        let post = kde_posterior(&clf, &[9.0, -4.0]).unwrap();
        assert_eq!(post.as_slice(), clf.priors.as_slice());
        assert!((clf.priors[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn large_weight_concentrates_on_sole_training_point() {
        let clf = KdeClassifier::new(
            MetricWeights::new(vec![100.0]).unwrap(),
            vec![fv(&[0.0]), fv(&[1.0])],
            vec![0, 1],
            2,
            1.0,
        )
        .unwrap();
        assert!(kde_posterior(&clf, &[0.0]).unwrap()[0] >= 0.99);
        assert!(kde_posterior(&clf, &[1.0]).unwrap()[1] >= 0.99);
    }

    #[test]
    fn far_queries_stay_normalized() {
        let clf = KdeClassifier::new(
            MetricWeights::new(vec![50.0]).unwrap(),
            vec![fv(&[0.0]), fv(&[1.0])],
            vec![0, 1],
            2,
            1.0,
        )
        .unwrap();
        // every raw kernel underflows; log-space evaluation still separates them
        let post = kde_posterior(&clf, &[1e3]).unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(post[1], 1.0);
    }

    #[test]
    fn empty_class_rejected() {
        let err = KdeClassifier::new(
            MetricWeights::new(vec![1.0]).unwrap(),
            vec![fv(&[0.0])],
            vec![0],
            2,
            1.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn lonely_class_has_zero_loo_mass() {
        let f = vec![fv(&[0.0]), fv(&[1.0]), fv(&[2.0])];
        let g = labels(&[0, 1, 1]);
        let obj = KdeLooObjective::new(&f, &g, 2, 1.0).unwrap();
        let post = obj.loo_posterior(&[1.0], 0);
        assert_eq!(post, vec![0.0, 1.0]);
        let ll = obj.loo_log_lik(&[1.0]);
        let expected = PROB_FLOOR.ln() + obj.loo_posterior(&[1.0], 1)[1].ln()
            + obj.loo_posterior(&[1.0], 2)[1].ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn loo_posterior_matches_direct_bayes_rule() {
        let xs = [0.0, 0.4, 1.5, 2.0, 2.2];
        let cls = [0, 0, 1, 1, 1];
        let f: Vec<FeatureVec> = xs.iter().map(|v| fv(&[*v])).collect();
        let g = labels(&cls);
        let obj = KdeLooObjective::new(&f, &g, 2, 0.0).unwrap();
        for i in 0..5 {
            let mut dens = [0.0; 2];
            let mut cnt = [0.0; 2];
            for j in 0..5 {
                if j != i {
                    dens[cls[j]] += (-0.7 * (xs[i] - xs[j]).powi(2)).exp();
                    cnt[cls[j]] += 1.0;
                }
            }
            let prior = [0.4, 0.6];
            let num: Vec<f64> = (0..2).map(|c| prior[c] * dens[c] / cnt[c]).collect();
            let z = num[0] + num[1];
            let post = obj.loo_posterior(&[0.7], i);
            for c in 0..2 {
                assert!((post[c] - num[c] / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f: Vec<FeatureVec> = (0..14)
            .map(|_| fv(&(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let g = labels(&(0..14).map(|i| i % 3).collect::<Vec<_>>());
        let obj = KdeLooObjective::new(&f, &g, 3, 2.0).unwrap();
        for _ in 0..20 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..2.0)).collect();
            let fd = finite_diff_gradient(|p| obj.value(p), &w, 1e-6).unwrap();
            let err = relative_error(&obj.gradient(&w), &fd);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn separated_classes_are_classified() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 60;
        let f: Vec<FeatureVec> = (0..n)
            .map(|i| {
                let centre = if i % 2 == 0 { 0.0 } else { 2.0 };
                let v: Vec<f64> = (0..4)
                    .map(|k| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        if k < 3 { centre + e } else { e }
                    })
                    .collect();
                fv(&v)
            })
            .collect();
        let g = labels(&(0..n).map(|i| i % 2).collect::<Vec<_>>());
        let clf = fit_kde_classifier(&f, &g, 2, &LearnerConfig::default(), &mut rng).unwrap();
        let obj = KdeLooObjective::new(&f, &g, 2, 0.0).unwrap();
        let hits = (0..n)
            .filter(|&i| {
                let p = obj.loo_posterior(&clf.w, i);
                p[g[i].class] > 0.5
            })
            .count();
        assert!(hits as f64 / n as f64 >= 0.9, "{hits}/{n}");
        assert!((clf.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
