//! The similar/dissimilar program shared by the convex learner and the hybrid
//! method.
//!
//! Both fit nonnegative parameters `θ` for which the squared distance of a
//! pair is linear, `D²(pair) = θ · φ(pair)`:
//!
//! ```text
//! min_θ  Σ_{similar} θ·φ    s.t.  h(θ) = Σ_{dissimilar} √(θ·φ) ≥ 1,  θ ≥ 0.
//! ```
//!
//! The solver minimizes `g(θ) = Σ_{similar} θ·φ − ln h(θ)` over `θ ≥ 0` and
//! rescales the result by `1 / h²`. Since `h(tθ) = √t h(θ)` and the objective
//! is linear, the rescaled stationary point of `g` satisfies the KKT
//! conditions of the constrained program with the constraint tight.

use crate::error::{Error, Result};
use crate::learners::dot;
use crate::solver::{minimize, project_nonneg, Objective, SolverConfig, SolverSummary};

/// Guard on `θ·φ` inside square-root derivatives.
pub const DISTANCE_FLOOR: f64 = 1e-15;

/// Relative slack applied when rescaling so rounding never leaves `h < 1`.
const RESCALE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BarrierProgram {
    dim: usize,
    /// `Σ_{similar} φ`: the objective is `θ · sim_total`.
    sim_total: Vec<f64>,
    dissimilar: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub params: Vec<f64>,
    pub solver: SolverSummary,
}

impl BarrierProgram {
    pub fn new(dim: usize, similar: Vec<Vec<f64>>, dissimilar: Vec<Vec<f64>>) -> Result<Self> {
        if similar.is_empty() {
            return Err(Error::DegenerateRatings("no similar (rating 3) pairs".into()));
        }
        if dissimilar.is_empty() {
            return Err(Error::DegenerateRatings("no dissimilar (rating 1) pairs".into()));
        }
        if similar.iter().chain(&dissimilar).any(|row| row.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: similar[0].len() });
        }
        let mut sim_total = vec![0.0; dim];
        for row in &similar {
            for (t, v) in sim_total.iter_mut().zip(row) {
                *t += v;
            }
        }
        let program = BarrierProgram { dim, sim_total, dissimilar };
        if program.dis_total().iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateRatings(
                "every dissimilar pair has zero distance under any parameters; \
                 the constraint cannot be satisfied"
                    .into(),
            ));
        }
        Ok(program)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn dis_total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.dim];
        for row in &self.dissimilar {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        total
    }

    /// `Σ_{similar} θ·φ`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        dot(theta, &self.sim_total)
    }

    /// `h(θ) = Σ_{dissimilar} √(θ·φ)`.
    pub fn constraint(&self, theta: &[f64]) -> f64 {
        self.dissimilar.iter().map(|row| dot(theta, row).max(0.0).sqrt()).sum()
    }

    pub fn barrier(&self) -> BarrierObjective<'_> {
        BarrierObjective { program: self }
    }

    /// Solves from `init` and rescales so that `h(θ) ∈ [1, 1 + 1e-6]`.
    ///
    /// Coordinates that cost nothing on similar pairs but separate dissimilar
    /// ones make the program's optimal value zero; if any exist the solution
    /// puts unit weight on them and zero on every costly coordinate.
    pub fn solve(&self, init: &[f64], cfg: &SolverConfig) -> Result<BarrierSolution> {
        if init.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: init.len() });
        }
        let dis_total = self.dis_total();
        let free: Vec<bool> = self
            .sim_total
            .iter()
            .zip(&dis_total)
            .map(|(a, b)| *a == 0.0 && *b > 0.0)
            .collect();
        let (mut theta, mut summary) = if free.iter().any(|f| *f) {
            let theta: Vec<f64> = (0..self.dim)
                .map(|j| {
                    if free[j] {
                        1.0
                    } else if self.sim_total[j] == 0.0 {
                        init[j].max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let v = self.barrier().value(&theta);
            let summary = SolverSummary {
                iterations: 0,
                converged: true,
                initial_value: v,
                final_value: v,
            };
            (theta, summary)
        } else {
            // solve in η with θ_j = η_j / a_j so every costly coordinate enters
            // the linear term with unit weight
            let scale: Vec<f64> =
                self.sim_total.iter().map(|a| if *a > 0.0 { 1.0 / a } else { 1.0 }).collect();
            let scaled = ScaledBarrier { inner: self.barrier(), scale: &scale };
            let eta: Vec<f64> = init.iter().zip(&scale).map(|(t, s)| t / s).collect();
            let res = minimize(&scaled, &eta, cfg)?;
            let summary = res.summary();
            (res.params.iter().zip(&scale).map(|(e, s)| e * s).collect(), summary)
        };

        let h = self.constraint(&theta);
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::DegenerateRatings(format!(
                "dissimilarity constraint collapsed to {h} during fitting"
            )));
        }
        let scale = (1.0 + RESCALE_SLACK) / (h * h);
        for v in &mut theta {
            *v *= scale;
        }
        debug_assert!({
            let h = self.constraint(&theta);
            (1.0..=1.0 + 1e-6).contains(&h)
        });
        summary.final_value = self.barrier().value(&theta);
        Ok(BarrierSolution { params: theta, solver: summary })
    }
}

/// `g(θ) = Σ_{similar} θ·φ − ln Σ_{dissimilar} √(θ·φ)` with `θ ≥ 0`.
pub struct BarrierObjective<'a> {
    program: &'a BarrierProgram,
}

impl Objective for BarrierObjective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let h = self.program.constraint(theta);
        if h <= 0.0 {
            return f64::INFINITY;
        }
        self.program.objective(theta) - h.ln()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.program;
        let mut acc = vec![0.0; p.dim];
        let mut h = 0.0;
        for row in &p.dissimilar {
            let d2 = dot(theta, row);
            h += d2.max(0.0).sqrt();
            let w = 0.5 / d2.max(DISTANCE_FLOOR).sqrt();
            for (a, v) in acc.iter_mut().zip(row) {
                *a += w * v;
            }
        }
        let h = h.max(DISTANCE_FLOOR);
        p.sim_total.iter().zip(acc).map(|(s, a)| s - a / h).collect()
    }

    fn project(&self, theta: &mut [f64]) {
        let n = theta.len();
        project_nonneg(theta, 0..n);
    }
}

struct ScaledBarrier<'a> {
    inner: BarrierObjective<'a>,
    scale: &'a [f64],
}

impl ScaledBarrier<'_> {
    fn theta(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter().zip(self.scale).map(|(e, s)| e * s).collect()
    }
}

impl Objective for ScaledBarrier<'_> {
    fn value(&self, eta: &[f64]) -> f64 {
        self.inner.value(&self.theta(eta))
    }

    fn gradient(&self, eta: &[f64]) -> Vec<f64> {
        let g = self.inner.gradient(&self.theta(eta));
        g.iter().zip(self.scale).map(|(g, s)| g * s).collect()
    }

    fn project(&self, eta: &mut [f64]) {
        self.inner.project(eta);
    }
}
