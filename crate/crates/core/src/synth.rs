//! Synthetic benchmark data: random class-conditional Gaussian-mixture models
//! over observed features `x` and missing features `z`, objects drawn from
//! them, and three-level ratings obtained by cutting noisy true distances at
//! empirical quantiles.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledExample, ObjectRef, Rating, RatingExample};
use crate::error::{Error, Result};
use crate::metric::{weighted_sq_dist_unchecked, FeatureVec};

/// Mixture components per class for observed features.
pub const X_COMPONENTS: usize = 5;
/// Mixture components per class for missing features.
pub const Z_COMPONENTS: usize = 2;
/// Rate of the exponential prior on observed-feature weights.
pub const R_RATE: f64 = 1.0;
/// Rate of the exponential prior on missing-feature weights (mean 5).
pub const R_PERP_RATE: f64 = 0.2;
pub const DEFAULT_NOISE_SD: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `D × D` factors `F`; component covariance is `Fᵀ F`.
    pub factors: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Draws a component by weight, then `mean + Fᵀ ξ` with `ξ ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c = pick(&self.weights, rng);
        let d = self.dim();
        let xi: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let f = &self.factors[c];
        (0..d)
            .map(|i| self.means[c][i] + (0..d).map(|j| f[j * d + i] * xi[j]).sum::<f64>())
            .collect()
    }

    /// Covariance `Fᵀ F` of component `c`, row-major.
    pub fn covariance(&self, c: usize) -> Vec<f64> {
        let d = self.dim();
        let f = &self.factors[c];
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| f[k * d + i] * f[k * d + j]).sum();
            }
        }
        out
    }
}

/// Index drawn with probability proportional to `weights` (which sum to 1).
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub class_priors: Vec<f64>,
    pub x_mixtures: Vec<GaussianMixture>,
    pub z_mixtures: Vec<GaussianMixture>,
    pub r_true: Vec<f64>,
    pub r_perp_true: Vec<f64>,
}

impl GenerativeModel {
    pub fn num_classes(&self) -> usize {
        self.class_priors.len()
    }

    /// Replaces the class priors, e.g. to match known class marginals.
    pub fn with_class_priors(mut self, priors: Vec<f64>) -> Result<Self> {
        if priors.len() != self.num_classes() || priors.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::invalid("class priors must be positive, one per class"));
        }
        self.class_priors = normalized(priors);
        Ok(self)
    }
}

fn sample_factor<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let entry = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("positive deviation");
    (0..d * d).map(|_| entry.sample(rng)).collect()
}

fn sample_mixture<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    components: usize,
) -> GaussianMixture {
    let u = Uniform::new(0.5, 1.5).expect("valid range");
    let mut weights = Vec::with_capacity(components);
    let mut means = Vec::with_capacity(components);
    let mut factors = Vec::with_capacity(components);
    for _ in 0..components {
        weights.push(u.sample(rng));
        means.push((0..d).map(|_| StandardNormal.sample(rng)).collect());
        factors.push(sample_factor(rng, d));
    }
    GaussianMixture { weights: normalized(weights), means, factors }
}

/// Samples a generative model with `m` classes over `k` observed and `j`
/// missing features.
///
/// Per class: `α ~ U[0.5, 1.5]`; five observed-feature components with
/// `β ~ U[0.5, 1.5]`, `μ ~ N(0, I_k)`, factor entries iid `N(0, 1/k)`; two
/// missing-feature components with `γ ~ U[0.5, 1.5]`, `φ ~ N(0, I_j)`, factor
/// entries iid `N(0, 1/j)`. Then `r_k ~ Exp(rate 1)` and `r⊥_j ~ Exp(rate 0.2)`.
pub fn sample_generative_model<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    j: usize,
    m: usize,
) -> Result<GenerativeModel> {
    if k == 0 || j == 0 || m == 0 {
        return Err(Error::invalid(format!("dimensions must be positive (K={k}, J={j}, M={m})")));
    }
    let u = Uniform::new(0.5, 1.5).expect("valid range");
    let mut alpha = Vec::with_capacity(m);
    let mut x_mixtures = Vec::with_capacity(m);
    let mut z_mixtures = Vec::with_capacity(m);
    for _ in 0..m {
        alpha.push(u.sample(rng));
        x_mixtures.push(sample_mixture(rng, k, X_COMPONENTS));
        z_mixtures.push(sample_mixture(rng, j, Z_COMPONENTS));
    }
    let r_dist = Exp::new(R_RATE).expect("positive rate");
    let r_perp_dist = Exp::new(R_PERP_RATE).expect("positive rate");
    let r_true = (0..k).map(|_| r_dist.sample(rng)).collect();
    let r_perp_true = (0..j).map(|_| r_perp_dist.sample(rng)).collect();
    Ok(GenerativeModel {
        class_priors: normalized(alpha),
        x_mixtures,
        z_mixtures,
        r_true,
        r_perp_true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    pub id: ObjectRef,
    pub x: FeatureVec,
    pub z: FeatureVec,
    pub class: usize,
}

/// Draws `n` objects: class from the priors, then `x` and `z` independently
/// given the class. Ids are `o1 … on`.
pub fn sample_objects<R: Rng + ?Sized>(
    model: &GenerativeModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SyntheticObject>> {
    if n == 0 {
        return Err(Error::invalid("need at least one object"));
    }
    (0..n)
        .map(|i| {
            let class = pick(&model.class_priors, rng);
            let x = FeatureVec::new(model.x_mixtures[class].sample(rng))?;
            let z = FeatureVec::new(model.z_mixtures[class].sample(rng))?;
            Ok(SyntheticObject { id: ObjectRef::new(format!("o{}", i + 1))?, x, z, class })
        })
        .collect()
}

/// Quantile cut points for turning noisy distances into ratings: pairs below
/// the `similar` quantile are rated 3, pairs below the `neutral` quantile 2,
/// the rest 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingCuts {
    pub similar: f64,
    pub neutral: f64,
}

impl Default for RatingCuts {
    fn default() -> Self {
        RatingCuts { similar: 0.2, neutral: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingGenReport {
    /// Noisy distance per directed pair, in the order of the returned ratings.
    pub y_values: Vec<f64>,
    pub threshold_similar: f64,
    pub threshold_neutral: f64,
    pub cuts: RatingCuts,
    pub noise_sd: f64,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn generate_ratings<R: Rng + ?Sized>(
    objects: &[SyntheticObject],
    r_true: &[f64],
    r_perp_true: &[f64],
    noise_sd: f64,
    rng: &mut R,
) -> Result<(Vec<RatingExample>, RatingGenReport)> {
    generate_ratings_with_cuts(objects, r_true, r_perp_true, noise_sd, RatingCuts::default(), rng)
}

/// Rates every directed pair `a ≠ b` (row-major order) by
/// `y = d_r(x_a, x_b)² + d_r⊥(z_a, z_b)² + ε`, `ε ~ N(0, noise_sd²)`, cut at
/// empirical quantiles of all `y`.
pub fn generate_ratings_with_cuts<R: Rng + ?Sized>(
    objects: &[SyntheticObject],
    r_true: &[f64],
    r_perp_true: &[f64],
    noise_sd: f64,
    cuts: RatingCuts,
    rng: &mut R,
) -> Result<(Vec<RatingExample>, RatingGenReport)> {
    if objects.len() < 2 {
        return Err(Error::invalid("need at least two objects to rate pairs"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!("noise deviation {noise_sd} must be finite and ≥ 0")));
    }
    if !(0.0 < cuts.similar && cuts.similar <= cuts.neutral && cuts.neutral < 1.0) {
        return Err(Error::invalid(format!("invalid rating cuts {cuts:?}")));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let n = objects.len();
    let mut pairs = Vec::with_capacity(n * (n - 1));
    let mut y_values = Vec::with_capacity(n * (n - 1));
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (oa, ob) = (&objects[a], &objects[b]);
            let y = weighted_sq_dist_unchecked(r_true, &oa.x, &ob.x)
                + weighted_sq_dist_unchecked(r_perp_true, &oa.z, &ob.z)
                + noise.sample(rng);
            pairs.push((a, b));
            y_values.push(y);
        }
    }
    let mut sorted = y_values.clone();
    sorted.sort_by(f64::total_cmp);
    let t_sim = quantile(&sorted, cuts.similar);
    let t_neu = quantile(&sorted, cuts.neutral);
    let ratings = pairs
        .into_iter()
        .zip(&y_values)
        .map(|((a, b), &y)| {
            let rating = if y < t_sim {
                Rating::Similar
            } else if y < t_neu {
                Rating::Neutral
            } else {
                Rating::Dissimilar
            };
            RatingExample { a, b, rating }
        })
        .collect();
    let report = RatingGenReport {
        y_values,
        threshold_similar: t_sim,
        threshold_neutral: t_neu,
        cuts,
        noise_sd,
    };
    Ok((ratings, report))
}

/// Packs synthetic objects (all labelled) and ratings into a [`Dataset`].
pub fn to_dataset(
    objects: &[SyntheticObject],
    ratings: Vec<RatingExample>,
    m: usize,
) -> Result<Dataset> {
    let table = objects.iter().map(|o| (o.id.clone(), o.x.clone())).collect();
    let labels = objects
        .iter()
        .enumerate()
        .map(|(object, o)| LabeledExample { object, class: o.class })
        .collect();
    Dataset::new(table, labels, ratings, m)
}
