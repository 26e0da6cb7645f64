//! Projected gradient with an adaptive step for smooth convex objectives
//! over a projectable set.

use crate::error::{Error, Result};
use crate::func::SmoothFn;
use crate::linalg::{dist, norm};

#[derive(Debug, Clone)]
pub struct PgOptions {
    /// Stop when `‖z − P(z − ∇f(z)/L)‖ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial curvature estimate; grows on backtracking, shrinks slowly on
    /// success.
    pub initial_lipschitz: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            initial_lipschitz: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgResult {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Final curvature estimate, useful to warm start the next solve.
    pub lipschitz: f64,
}

/// Minimize `f` over the set described by `project`, starting at
/// `project(start)`.
pub fn minimize(
    f: &dyn SmoothFn,
    project: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    opts: &PgOptions,
) -> Result<PgResult> {
    let mut z = project(start);
    let mut grad = f.gradient(&z);
    let mut l = opts.initial_lipschitz.max(1e-12);
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (next, next_grad) = loop {
            let trial: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - gi / l).collect();
            let next = project(&trial);
            let step = dist(&next, &z);
            if step == 0.0 {
                break (next, grad.clone());
            }
            let next_grad = f.gradient(&next);
            let diff: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let local = norm(&diff) / step;
            if local <= l * (1.0 + 1e-9) {
                break (next, next_grad);
            }
            l = (2.0 * l).max(local);
        };
        residual = dist(&next, &z);
        z = next;
        grad = next_grad;
        if !residual.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::convergence("projected gradient produced a non-finite iterate", None));
        }
        if residual <= opts.tol {
            return Ok(PgResult {
                point: z,
                iterations: it + 1,
                residual,
                lipschitz: l,
            });
        }
        l *= 0.9;
    }
    Err(Error::convergence(
        format!(
            "projected gradient did not reach tolerance {:.1e} in {} iterations (residual {residual:.3e})",
            opts.tol, opts.max_iter
        ),
        Some(z),
    ))
}
