//! Projected gradient descent with Armijo backtracking.
//!
//! Maximization problems are handed to [`minimize`] negated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth objective together with the Euclidean projection onto its
/// feasible set.
pub trait Objective {
    fn value(&self, p: &[f64]) -> f64;
    fn gradient(&self, p: &[f64]) -> Vec<f64>;
    /// Must be idempotent.
    fn project(&self, p: &mut [f64]);
}

/// Closure-backed [`Objective`].
pub struct FnObjective<V, G, P> {
    pub value: V,
    pub gradient: G,
    pub project: P,
}

impl<V, G, P> Objective for FnObjective<V, G, P>
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&mut [f64]),
{
    fn value(&self, p: &[f64]) -> f64 {
        (self.value)(p)
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        (self.gradient)(p)
    }
    fn project(&self, p: &mut [f64]) {
        (self.project)(p)
    }
}

/// Clamp `p[range]` at zero.
pub fn project_nonneg(p: &mut [f64], range: std::ops::Range<usize>) {
    for v in &mut p[range] {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Projection onto `{p[lo] ≤ p[hi]}`: a violating pair is replaced by its midpoint.
pub fn project_ordered(p: &mut [f64], lo: usize, hi: usize) {
    if p[lo] > p[hi] {
        let mid = 0.5 * (p[lo] + p[hi]);
        p[lo] = mid;
        p[hi] = mid;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            initial_step: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            grad_tol: 1e-6,
            max_iters: 5000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step > 0.0
            && self.initial_step.is_finite()
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.grad_tol > 0.0
            && self.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub params: Vec<f64>,
    pub final_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the initial point followed by one entry per accepted step.
    pub trace: Vec<f64>,
}

/// Compact, serializable view of a [`SolverResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_value: f64,
    pub final_value: f64,
}

impl SolverResult {
    pub fn summary(&self) -> SolverSummary {
        SolverSummary {
            iterations: self.iterations,
            converged: self.converged,
            initial_value: self.trace[0],
            final_value: self.final_value,
        }
    }
}

const MIN_STEP: f64 = 1e-30;
const MAX_STEP: f64 = 1e30;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient descent from `init` (projected first).
///
/// Each iteration tries `p ← project(p − α∇f(p))`, halving `α` by the
/// backtracking factor until the Armijo condition
/// `f(p⁺) ≤ f(p) + c·∇f(p)·(p⁺ − p)` holds. The next iteration starts from the
/// accepted step enlarged by the inverse backtracking factor. Iteration stops
/// once `‖p⁺ − p‖ / α < grad_tol`, when the projected step vanishes, or after
/// `max_iters` accepted steps. Trial points with a non-finite value are
/// treated as failed trials; a non-finite value or gradient at an accepted
/// iterate is an error.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    cfg.validate()?;
    let mut p = init.to_vec();
    obj.project(&mut p);
    let mut f = obj.value(&p);
    let mut g = obj.gradient(&p);
    check_finite(0, f, &g, &p)?;

    let mut trace = vec![f];
    let mut step = cfg.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    let mut cand = vec![0.0; p.len()];

    'outer: while iterations < cfg.max_iters {
        let mut alpha = step;
        let (fc, moved) = loop {
            for ((c, pi), gi) in cand.iter_mut().zip(&p).zip(&g) {
                *c = pi - alpha * gi;
            }
            obj.project(&mut cand);
            let d: Vec<f64> = cand.iter().zip(&p).map(|(c, pi)| c - pi).collect();
            let moved = dot(&d, &d).sqrt();
            if moved == 0.0 {
                // projected gradient vanishes: stationary point
                converged = true;
                break 'outer;
            }
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= f + cfg.armijo_c * dot(&g, &d) {
                break (fc, moved);
            }
            alpha *= cfg.backtrack_factor;
            if alpha < MIN_STEP {
                break 'outer;
            }
        };
        iterations += 1;
        std::mem::swap(&mut p, &mut cand);
        f = fc;
        g = obj.gradient(&p);
        check_finite(iterations, f, &g, &p)?;
        trace.push(f);
        if moved / alpha < cfg.grad_tol {
            converged = true;
            break;
        }
        step = (alpha / cfg.backtrack_factor).min(MAX_STEP);
    }

    Ok(SolverResult { params: p, final_value: f, iterations, converged, trace })
}

fn check_finite(iteration: usize, f: f64, g: &[f64], p: &[f64]) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::Numerical {
            iteration,
            msg: format!("objective is {f}"),
            iterate: p.to_vec(),
        });
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            iteration,
            msg: format!("gradient component {i} is {}", g[i]),
            iterate: p.to_vec(),
        });
    }
    Ok(())
}

/// Central differences `(f(p + h·e_i) − f(p − h·e_i)) / 2h`.
pub fn finite_diff_gradient<F>(value: F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut q = p.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let up = value(&q);
        q[i] = p[i] - h;
        let down = value(&q);
        q[i] = p[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numerical {
                iteration: 0,
                msg: format!("non-finite value while differencing coordinate {i}"),
                iterate: p.to_vec(),
            });
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = dot(a, a).sqrt().max(dot(b, b).sqrt());
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
