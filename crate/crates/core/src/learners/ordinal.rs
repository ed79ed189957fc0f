//! Cumulative-logit ordinal regression on squared weighted distances:
//! `P(σ ≤ v | x, x') = logistic(d_r(x, x')² + θ_v)` with `θ_1 ≤ θ_2`, `θ_3 = ∞`.

use serde::{Deserialize, Serialize};

use super::{log_floor, sq_diff};
use crate::data::{Rating, RatingExample};
use crate::error::{Error, Result};
use crate::metric::{weighted_sq_dist, FeatureVec, MetricWeights};
use crate::solver::{
    minimize, project_nonneg, project_ordered, Objective, SolverConfig, SolverSummary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalModel {
    pub r: MetricWeights,
    pub theta1: f64,
    pub theta2: f64,
    pub solver: SolverSummary,
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵘ)` without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `P(σ = v | x, x2)` as a difference of cumulative logits.
pub fn ordinal_prob(m: &OrdinalModel, x: &[f64], x2: &[f64], v: Rating) -> Result<f64> {
    let d2 = weighted_sq_dist(&m.r, x, x2)?;
    Ok(level_prob(d2, m.theta1, m.theta2, v))
}

fn level_prob(d2: f64, theta1: f64, theta2: f64, v: Rating) -> f64 {
    let below = |t: f64| logistic(d2 + t);
    match v {
        Rating::Dissimilar => below(theta1),
        Rating::Neutral => below(theta2) - below(theta1),
        Rating::Similar => 1.0 - below(theta2),
    }
}

/// Log-probability of level `v` and its derivatives with respect to
/// `(d², θ1, θ2)`, floored at `ln 1e-12` (zero derivatives when floored).
fn level_log_prob(d2: f64, theta1: f64, theta2: f64, v: Rating) -> (f64, f64, f64, f64) {
    let a = d2 + theta1;
    let b = d2 + theta2;
    let (ll, da, db) = match v {
        Rating::Dissimilar => (-softplus(-a), logistic(-a), 0.0),
        Rating::Similar => (-softplus(b), 0.0, -logistic(b)),
        Rating::Neutral => {
            if b <= a {
                (f64::NEG_INFINITY, 0.0, 0.0)
            } else {
                // ln(s(b) − s(a)) = ln s(b) + ln s(−a) + ln(1 − e^{a−b})
                let gap = (a - b).exp_m1();
                let ll = -softplus(-b) - softplus(a) + (-gap).ln();
                let inv = 1.0 / (b - a).exp_m1();
                (ll, -logistic(a) - inv, logistic(-b) + inv)
            }
        }
    };
    if !(ll > log_floor()) {
        return (log_floor(), 0.0, 0.0, 0.0);
    }
    (ll, da + db, da, db)
}

/// Negative log-likelihood over parameters `[r_1 … r_K, θ1, θ2]`.
pub struct OrdinalObjective {
    k: usize,
    rows: Vec<(Vec<f64>, Rating)>,
}

impl OrdinalObjective {
    pub fn new(features: &[FeatureVec], ratings: &[RatingExample]) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::invalid("ordinal regression needs at least one rating"));
        }
        let k = features.first().map_or(0, |x| x.len());
        let rows = ratings
            .iter()
            .map(|r| {
                let (Some(x), Some(y)) = (features.get(r.a), features.get(r.b)) else {
                    return Err(Error::invalid("rating refers to an unknown object"));
                };
                Ok((sq_diff(x, y), r.rating))
            })
            .collect::<Result<_>>()?;
        Ok(OrdinalObjective { k, rows })
    }

    pub fn num_params(&self) -> usize {
        self.k + 2
    }

    /// Initial point `r = 0, θ = (−1, 1)`.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.k];
        p.extend([-1.0, 1.0]);
        p
    }

    pub fn log_likelihood(&self, p: &[f64]) -> f64 {
        -self.value(p)
    }
}

impl Objective for OrdinalObjective {
    fn value(&self, p: &[f64]) -> f64 {
        let (r, t1, t2) = (&p[..self.k], p[self.k], p[self.k + 1]);
        -self
            .rows
            .iter()
            .map(|(delta, v)| level_log_prob(super::dot(r, delta), t1, t2, *v).0)
            .sum::<f64>()
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let (r, t1, t2) = (&p[..self.k], p[self.k], p[self.k + 1]);
        let mut g = vec![0.0; self.k + 2];
        for (delta, v) in &self.rows {
            let (_, dd, d1, d2) = level_log_prob(super::dot(r, delta), t1, t2, *v);
            if dd != 0.0 {
                for (gk, dk) in g[..self.k].iter_mut().zip(delta) {
                    *gk -= dd * dk;
                }
            }
            g[self.k] -= d1;
            g[self.k + 1] -= d2;
        }
        g
    }

    fn project(&self, p: &mut [f64]) {
        project_nonneg(p, 0..self.k);
        project_ordered(p, self.k, self.k + 1);
    }
}

/// Maximum-likelihood fit over `r ≥ 0`, `θ1 ≤ θ2`.
pub fn fit_ordinal(
    features: &[FeatureVec],
    ratings: &[RatingExample],
    cfg: &SolverConfig,
) -> Result<OrdinalModel> {
    let obj = OrdinalObjective::new(features, ratings)?;
    let res = minimize(&obj, &obj.initial_point(), cfg)?;
    let k = obj.k;
    Ok(OrdinalModel {
        r: MetricWeights::new(res.params[..k].to_vec())?,
        theta1: res.params[k],
        theta2: res.params[k + 1],
        solver: res.summary(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{finite_diff_gradient, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(r: Vec<f64>, t1: f64, t2: f64) -> OrdinalModel {
        OrdinalModel {
            r: MetricWeights::new(r).unwrap(),
            theta1: t1,
            theta2: t2,
            solver: SolverSummary {
                iterations: 0,
                converged: true,
                initial_value: 0.0,
                final_value: 0.0,
            },
        }
    }

    #[test]
    fn logistic_at_zero() {
        let m = model(vec![1.0], 0.0, 1.0);
        let p = ordinal_prob(&m, &[2.0], &[2.0], Rating::Dissimilar).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn coincident_thresholds_empty_middle_level() {
        let m = model(vec![1.0], 0.0, 0.0);
        assert_eq!(ordinal_prob(&m, &[0.0], &[0.0], Rating::Neutral).unwrap(), 0.0);
        assert_eq!(ordinal_prob(&m, &[0.0], &[0.0], Rating::Similar).unwrap(), 0.5);
    }

    #[test]
    fn level_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t1 = rng.random_range(-5.0..5.0);
            let t2 = t1 + rng.random_range(0.0..5.0);
            let m = model(vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)], t1, t2);
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let total: f64 = [Rating::Dissimilar, Rating::Neutral, Rating::Similar]
                .iter()
                .map(|v| ordinal_prob(&m, &x, &y, *v).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stable_log_prob_agrees_with_direct_evaluation() {
        for &(d2, t1, t2) in &[(0.3, -1.0, 1.0), (2.0, -0.5, 0.2), (0.0, 0.1, 3.0)] {
            for v in [Rating::Dissimilar, Rating::Neutral, Rating::Similar] {
                let direct = level_prob(d2, t1, t2, v).ln();
                let (stable, ..) = level_log_prob(d2, t1, t2, v);
                assert!((direct - stable).abs() < 1e-12, "{v:?}: {direct} vs {stable}");
            }
        }
    }

    fn tiny_data() -> (Vec<FeatureVec>, Vec<RatingExample>) {
        let features = [0.0, 0.0, 0.0, 1.0, 0.0, 0.5]
            .iter()
            .map(|v| FeatureVec::new(vec![*v]).unwrap())
            .collect();
        let ratings = vec![
            RatingExample { a: 0, b: 1, rating: Rating::Similar },
            RatingExample { a: 2, b: 3, rating: Rating::Dissimilar },
            RatingExample { a: 4, b: 5, rating: Rating::Neutral },
        ];
        (features, ratings)
    }

    #[test]
    fn fit_improves_on_initialization() {
        let (f, s) = tiny_data();
        let obj = OrdinalObjective::new(&f, &s).unwrap();
        let start = obj.log_likelihood(&obj.initial_point());
        let m = fit_ordinal(&f, &s, &SolverConfig::default()).unwrap();
        let mut p = m.r.to_vec();
        p.extend([m.theta1, m.theta2]);
        assert!(obj.log_likelihood(&p) >= start);
        assert!(m.theta1 <= m.theta2);
        assert!(m.r.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 4;
        let features: Vec<FeatureVec> = (0..12)
            .map(|_| FeatureVec::new((0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let ratings: Vec<RatingExample> = (0..30)
            .map(|i| RatingExample {
                a: i % 12,
                b: (i * 5 + 1) % 12,
                rating: Rating::try_from((i % 3 + 1) as u8).unwrap(),
            })
            .filter(|r| r.a != r.b)
            .collect();
        let obj = OrdinalObjective::new(&features, &ratings).unwrap();
        for _ in 0..20 {
            let mut p: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..2.0)).collect();
            let t1 = rng.random_range(-3.0..0.0);
            p.extend([t1, t1 + rng.random_range(0.2..3.0)]);
            let fd = finite_diff_gradient(|q| obj.value(q), &p, 1e-6).unwrap();
            let err = relative_error(&obj.gradient(&p), &fd);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    /// One feature, θ2 held large: brute-force grid over `(r, θ1)`.
    #[test]
    fn two_rating_instance_matches_grid_search() {
        let features: Vec<FeatureVec> =
            [0.0, 1.0, 0.0, 0.5].iter().map(|v| FeatureVec::new(vec![*v]).unwrap()).collect();
        let ratings = vec![
            RatingExample { a: 0, b: 1, rating: Rating::Dissimilar },
            RatingExample { a: 2, b: 3, rating: Rating::Similar },
        ];
        let obj = OrdinalObjective::new(&features, &ratings).unwrap();
        // with θ2 free the likelihood is unbounded; fix it and fit (r, θ1) only
        let theta2 = -3.0;
        let restricted = crate::solver::FnObjective {
            value: |q: &[f64]| obj.value(&[q[0], q[1], theta2]),
            gradient: |q: &[f64]| {
                let g = obj.gradient(&[q[0], q[1], theta2]);
                vec![g[0], g[1]]
            },
            project: |q: &mut [f64]| {
                q[0] = q[0].max(0.0);
                q[1] = q[1].min(theta2);
            },
        };
        let cfg = SolverConfig { grad_tol: 1e-9, max_iters: 100_000, ..Default::default() };
        let res = minimize(&restricted, &[0.0, -1.0], &cfg).unwrap();

        let mut best = (f64::INFINITY, 0.0, 0.0);
        let search = |best: &mut (f64, f64, f64), r0: f64, r1: f64, t0: f64, t1: f64, steps: usize| {
            for i in 0..=steps {
                for j in 0..=steps {
                    let r = r0 + (r1 - r0) * i as f64 / steps as f64;
                    let t = t0 + (t1 - t0) * j as f64 / steps as f64;
                    if r < 0.0 || t > theta2 {
                        continue;
                    }
                    let v = obj.value(&[r, t, theta2]);
                    if v < best.0 {
                        *best = (v, r, t);
                    }
                }
            }
        };
        search(&mut best, 0.0, 20.0, -10.0, theta2, 400);
        for width in [0.1, 0.01, 0.001] {
            let (_, r, t) = best;
            search(&mut best, r - width, r + width, t - width, t + width, 200);
        }
        assert!((res.params[0] - best.1).abs() < 1e-3, "{:?} vs {:?}", res.params, best);
        assert!((res.params[1] - best.2).abs() < 1e-3, "{:?} vs {:?}", res.params, best);
    }
}
