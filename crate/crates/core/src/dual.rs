//! Dual decomposition of a subproblem with shared constraints.
//!
//! The shared constraints are priced by multipliers `λ ≥ 0`. For fixed `λ`
//! the Lagrangian splits across blocks, each block is minimized
//! independently (in parallel when a thread pool is available), and `λ`
//! moves along the dual gradient `Σ_i g̃^i(x̂_i(λ))` with a projection onto
//! the nonnegative orthant.

use std::fmt;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{Oracle, SmoothFn};
use crate::inner::{RoundObserver, Subproblem};
use crate::linalg::{dist, max_abs};
use crate::pg::{self, PgOptions};
use crate::problem::LIPSCHITZ_SAFETY;
use crate::set::ConvexSet;

/// `‖λ‖∞` beyond which the subproblem is reported as suspected infeasible.
pub const LAMBDA_CEILING: f64 = 1e8;

/// One block of a decomposed subproblem: its objective component, its
/// share of every shared constraint, and its own convex set.
#[derive(Debug, Clone)]
pub struct Block {
    pub range: Range<usize>,
    pub objective: Oracle,
    pub constraints: Vec<Oracle>,
    /// Right-hand sides: block constraint `j` reads `g̃^i_j(x_i) ≤ rhs_j`
    /// (zero for dual decomposition, the slack `t_ij` for primal).
    pub rhs: Vec<f64>,
    pub set: ConvexSet,
}

impl Block {
    fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .zip(&self.rhs)
            .map(|(g, r)| g.value(z) - r)
            .collect()
    }
}

/// `Ũ_i + Σ_j λ_j (g̃^i_j − rhs_j)` as a function of the block variable.
struct BlockLagrangian<'a> {
    block: &'a Block,
    lambda: &'a [f64],
}

impl fmt::Debug for BlockLagrangian<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockLagrangian")
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl SmoothFn for BlockLagrangian<'_> {
    fn dim(&self) -> usize {
        self.block.range.len()
    }
    fn value(&self, z: &[f64]) -> f64 {
        let mut v = self.block.objective.value(z);
        for ((g, r), l) in self.block.constraints.iter().zip(&self.block.rhs).zip(self.lambda) {
            if *l != 0.0 {
                v += l * (g.value(z) - r);
            }
        }
        v
    }
    fn add_gradient(&self, z: &[f64], weight: f64, out: &mut [f64]) {
        self.block.objective.add_gradient(z, weight, out);
        for (g, l) in self.block.constraints.iter().zip(self.lambda) {
            if *l != 0.0 {
                g.add_gradient(z, weight * l, out);
            }
        }
    }
}

/// A subproblem arranged as blocks sharing `m` constraints.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub blocks: Vec<Block>,
    pub dim: usize,
    pub num_constraints: usize,
    /// Strong-convexity modulus of the objective (all blocks).
    pub strong_convexity: f64,
    pub anchor: Vec<f64>,
}

impl BlockSystem {
    /// Arrange `sub` for dual decomposition. With `decompose`, the block
    /// partition and per-block components are used; this fails with a
    /// configuration error if any model is not separable. Without it, the
    /// whole subproblem is a single block.
    pub fn from_subproblem(sub: &Subproblem, decompose: bool) -> Result<Self> {
        let m = sub.constraints.len();
        let blocks = if decompose {
            let partition = sub.blocks.as_ref().ok_or_else(|| {
                Error::Config("decomposition requested but the problem has no blocks".into())
            })?;
            let obj_parts = sub.objective.components.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "objective model '{}' is not separable across blocks",
                    sub.objective.label
                ))
            })?;
            let mut con_parts = Vec::with_capacity(m);
            for c in &sub.constraints {
                con_parts.push(c.components.as_ref().ok_or_else(|| {
                    Error::Config(format!("'{}' is not separable across blocks", c.label))
                })?);
            }
            partition
                .ranges()
                .into_iter()
                .zip(partition.sets())
                .enumerate()
                .map(|(i, (range, set))| Block {
                    range,
                    objective: obj_parts[i].clone(),
                    constraints: con_parts.iter().map(|p| p[i].clone()).collect(),
                    rhs: vec![0.0; m],
                    set: set.clone(),
                })
                .collect()
        } else {
            vec![Block {
                range: 0..sub.anchor.len(),
                objective: sub.objective.func.clone(),
                constraints: sub.constraints.iter().map(|c| c.func.clone()).collect(),
                rhs: vec![0.0; m],
                set: sub.set.clone(),
            }]
        };
        Ok(Self {
            blocks,
            dim: sub.anchor.len(),
            num_constraints: m,
            strong_convexity: sub.objective.strong_convexity,
            anchor: sub.anchor.clone(),
        })
    }

    pub fn is_decomposed(&self) -> bool {
        self.blocks.len() > 1
    }

    fn anchor_block(&self, i: usize) -> Vec<f64> {
        self.anchor[self.blocks[i].range.clone()].to_vec()
    }

    /// Concatenate block points into a full point.
    pub fn assemble(&self, parts: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (b, p) in self.blocks.iter().zip(parts) {
            x[b.range.clone()].copy_from_slice(p);
        }
        x
    }

    /// Sampled bound on the Lipschitz constant of the constraint map
    /// `x ↦ (g̃_j(x))_j` over the set: the largest Frobenius norm of the
    /// Jacobian seen at random points and box corners of every block,
    /// times the safety factor.
    pub fn estimate_constraint_lipschitz(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for (i, b) in self.blocks.iter().enumerate() {
            let mut probes = b.set.corners();
            probes.push(self.anchor_block(i));
            probes.extend((0..samples).map(|_| b.set.sample(&mut rng)));
            let worst = probes
                .iter()
                .map(|z| {
                    b.constraints
                        .iter()
                        .map(|g| crate::linalg::norm_sq(&g.gradient(z)))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            total += worst;
        }
        LIPSCHITZ_SAFETY * total.sqrt()
    }
}

/// Minimize the block Lagrangian over the block set, starting from
/// `start`.
pub fn block_lagrangian_min(
    block: &Block,
    lambda: &[f64],
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<pg::PgResult> {
    let lag = BlockLagrangian { block, lambda };
    let set = &block.set;
    pg::minimize(
        &lag,
        &|u| set.project(u),
        start,
        &PgOptions {
            tol,
            max_iter,
            initial_lipschitz: 1.0,
        },
    )
}

/// Block minimizers, dual value and dual gradient at one `λ`.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub lambda: Vec<f64>,
    pub block_points: Vec<Vec<f64>>,
    /// `d(λ) = Σ_i Ũ_i(x̂_i) + λᵀ(g̃^i(x̂_i) − rhs_i)`.
    pub value: f64,
    /// `∇d(λ) = Σ_i g̃^i(x̂_i) − rhs_i`.
    pub gradient: Vec<f64>,
    pub block_iterations: Vec<usize>,
}

/// Solve every block at `λ`. Blocks run in parallel when the current
/// thread pool has more than one worker; results are combined in block
/// order, so the output does not depend on scheduling.
pub fn evaluate_dual(
    system: &BlockSystem,
    lambda: &[f64],
    starts: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<DualEval> {
    let solve = |(b, s): (&Block, &Vec<f64>)| block_lagrangian_min(b, lambda, s, tol, max_iter);
    let results: Vec<Result<pg::PgResult>> =
        if system.blocks.len() > 1 && rayon::current_num_threads() > 1 {
            system.blocks.par_iter().zip(starts.par_iter()).map(solve).collect()
        } else {
            system.blocks.iter().zip(starts.iter()).map(solve).collect()
        };
    let mut block_points = Vec::with_capacity(results.len());
    let mut block_iterations = Vec::with_capacity(results.len());
    let mut value = 0.0;
    let mut gradient = vec![0.0; system.num_constraints];
    for (b, r) in system.blocks.iter().zip(results) {
        let r = r?;
        let gv = b.constraint_values(&r.point);
        value += b.objective.value(&r.point);
        for ((acc, g), l) in gradient.iter_mut().zip(&gv).zip(lambda) {
            *acc += g;
            value += l * g;
        }
        block_points.push(r.point);
        block_iterations.push(r.iterations);
    }
    Ok(DualEval {
        lambda: lambda.to_vec(),
        block_points,
        value,
        gradient,
        block_iterations,
    })
}

/// Sum of per-block constraint values.
pub fn dual_gradient(block_values: &[Vec<f64>]) -> Vec<f64> {
    let m = block_values.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; m];
    for v in block_values {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out
}

/// `L_g̃² √m / c`: Lipschitz constant of the dual gradient.
pub fn dual_lipschitz_constant(l_gtilde: f64, m: usize, c_tilde: f64) -> Result<f64> {
    if !(l_gtilde > 0.0) || m == 0 || !(c_tilde > 0.0) {
        return Err(Error::Parameter(format!(
            "dual Lipschitz constant needs positive inputs (L = {l_gtilde}, m = {m}, c = {c_tilde})"
        )));
    }
    Ok(l_gtilde * l_gtilde * (m as f64).sqrt() / c_tilde)
}

/// `[λ + α ∇d]₊`
pub fn multiplier_update(lambda: &[f64], alpha: f64, grad: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .zip(grad)
        .map(|(l, g)| (l + alpha * g).max(0.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualRuleKind {
    #[default]
    ConstantRange,
    SummableDiminishing,
    /// Nested bracketing search, one multiplier at a time. Robust to an
    /// ill-conditioned dual, but its cost grows geometrically with `m`.
    Bisection,
}

/// A validated multiplier step rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualStepRule {
    /// `α^n = alpha` with `0 < alpha < 2 / L_dual`.
    ConstantRange { alpha: f64, l_dual: f64 },
    /// `α^n = alpha0 / (n + 1)`.
    SummableDiminishing { alpha0: f64 },
    Bisection,
}

impl DualStepRule {
    /// Validate a rule for a system with `m` constraints. `alpha0`
    /// defaults to `1 / L_dual` for the step-based rules.
    pub fn new(kind: DualRuleKind, alpha0: Option<f64>, m: usize, l_dual: f64) -> Result<Self> {
        match kind {
            DualRuleKind::Bisection if m == 0 => Err(Error::Config(
                "bisection needs at least one shared constraint".into(),
            )),
            DualRuleKind::Bisection => Ok(DualStepRule::Bisection),
            DualRuleKind::ConstantRange => {
                let alpha = alpha0.unwrap_or(1.0 / l_dual);
                if !(alpha > 0.0 && alpha < 2.0 / l_dual) {
                    return Err(Error::Parameter(format!(
                        "constant dual step {alpha} must lie in (0, 2/L) = (0, {})",
                        2.0 / l_dual
                    )));
                }
                Ok(DualStepRule::ConstantRange { alpha, l_dual })
            }
            DualRuleKind::SummableDiminishing => {
                let alpha0 = alpha0.unwrap_or(1.0 / l_dual);
                if !(alpha0 > 0.0) {
                    return Err(Error::Parameter("alpha0 must be positive".into()));
                }
                Ok(DualStepRule::SummableDiminishing { alpha0 })
            }
        }
    }

    pub fn alpha(&self, n: usize) -> f64 {
        match self {
            DualStepRule::ConstantRange { alpha, .. } => *alpha,
            DualStepRule::SummableDiminishing { alpha0 } => alpha0 / (n as f64 + 1.0),
            DualStepRule::Bisection => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualOptions {
    pub rule: DualRuleKind,
    /// Step size (constant rule) or initial step (diminishing rule).
    pub alpha0: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Start each solve from the previous solve's multipliers.
    pub warm_start: bool,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            rule: DualRuleKind::ConstantRange,
            alpha0: None,
            tol: 1e-10,
            max_iter: 200_000,
            warm_start: true,
        }
    }
}

/// Tolerance for the per-block minimizations inside a dual round.
/// Internal single-block duals with at most this many multipliers are
/// solved by nested bisection, which tolerates nearly parallel constraint
/// gradients.
pub(crate) const NESTED_BISECTION_MAX: usize = 2;
pub(crate) const BLOCK_TOL: f64 = 1e-12;
pub(crate) const BLOCK_MAX_ITER: usize = 200_000;
const LIPSCHITZ_SAMPLES: usize = 64;

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub point: Vec<f64>,
    pub block_points: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// Multiplier rounds performed.
    pub rounds: usize,
    /// Dual values at each evaluated multiplier, in order.
    pub dual_values: Vec<f64>,
    pub final_eval: DualEval,
}

/// Resolve the configured rule for `system`, estimating `L_g̃` by
/// sampling when a step-based rule needs it.
pub fn resolve_rule(system: &BlockSystem, opts: &DualOptions) -> Result<DualStepRule> {
    let m = system.num_constraints;
    if m == 0 || opts.rule == DualRuleKind::Bisection {
        return DualStepRule::new(opts.rule, opts.alpha0, m.max(1), 1.0)
            .or_else(|e| if m == 0 { Ok(DualStepRule::Bisection) } else { Err(e) });
    }
    let l_g = system.estimate_constraint_lipschitz(LIPSCHITZ_SAMPLES, 0).max(1e-12);
    let l_dual = dual_lipschitz_constant(l_g, m, system.strong_convexity)?;
    DualStepRule::new(opts.rule, opts.alpha0, m, l_dual)
}

/// Run dual ascent (or bisection) on `system` until the projected dual
/// gradient and the primal violation are both below `opts.tol`.
pub fn dual_solve(
    system: &BlockSystem,
    rule: &DualStepRule,
    opts: &DualOptions,
    lambda0: Option<&[f64]>,
    observer: &mut dyn RoundObserver,
) -> Result<DualOutcome> {
    let m = system.num_constraints;
    let mut starts: Vec<Vec<f64>> = (0..system.blocks.len())
        .map(|i| system.anchor_block(i))
        .collect();
    let mut lambda = match lambda0 {
        Some(l) if l.len() == m => l.iter().map(|v| v.max(0.0)).collect(),
        _ => vec![0.0; m],
    };
    let mut values = Vec::new();
    let mut eval = evaluate_dual(system, &lambda, &starts, BLOCK_TOL, BLOCK_MAX_ITER)?;
    values.push(eval.value);
    observer.dual_round(0, &lambda, &eval.block_iterations);
    if m == 0 {
        return Ok(finish(system, eval, 1, values));
    }
    if let DualStepRule::Bisection = rule {
        return bisection(system, opts, eval, values, observer);
    }
    for n in 0..opts.max_iter {
        let alpha = rule.alpha(n);
        let next = multiplier_update(&lambda, alpha, &eval.gradient);
        let step = dist(&next, &lambda) / alpha;
        let violation = eval.gradient.iter().fold(0.0f64, |a, g| a.max(*g));
        if step <= opts.tol && violation <= opts.tol {
            return Ok(finish(system, eval, n + 1, values));
        }
        if max_abs(&next) > LAMBDA_CEILING {
            return Err(Error::Infeasible(format!(
                "multipliers exceeded {LAMBDA_CEILING:e} after {} rounds; the subproblem is suspected infeasible",
                n + 1
            )));
        }
        lambda = next;
        starts.clone_from(&eval.block_points);
        eval = evaluate_dual(system, &lambda, &starts, BLOCK_TOL, BLOCK_MAX_ITER)?;
        values.push(eval.value);
        observer.dual_round(n + 1, &lambda, &eval.block_iterations);
    }
    Err(Error::convergence(
        format!(
            "dual ascent did not converge in {} rounds (tol {:.1e})",
            opts.max_iter, opts.tol
        ),
        Some(system.assemble(&eval.block_points)),
    ))
}

fn finish(system: &BlockSystem, eval: DualEval, rounds: usize, dual_values: Vec<f64>) -> DualOutcome {
    DualOutcome {
        point: system.assemble(&eval.block_points),
        block_points: eval.block_points.clone(),
        lambda: eval.lambda.clone(),
        rounds,
        dual_values,
        final_eval: eval,
    }
}

/// Exact dual maximization by nested bracketing, innermost on the last
/// multiplier. With the leading multipliers fixed, the maximum over the
/// trailing ones is concave in the next coordinate and its derivative is
/// that coordinate of the dual gradient, so each coordinate can be found by
/// bisection. The work grows geometrically with `m`. Every returned point is
/// the block solution at the feasible end of its bracket.
fn bisection(
    system: &BlockSystem,
    opts: &DualOptions,
    first: DualEval,
    values: Vec<f64>,
    observer: &mut dyn RoundObserver,
) -> Result<DualOutcome> {
    let mut search = NestedSearch {
        system,
        opts,
        values,
        observer,
        rounds: 1,
    };
    let eval = search.maximize(0, first)?;
    let rounds = search.rounds;
    Ok(finish(system, eval, rounds, search.values))
}

struct NestedSearch<'a> {
    system: &'a BlockSystem,
    opts: &'a DualOptions,
    values: Vec<f64>,
    observer: &'a mut dyn RoundObserver,
    rounds: usize,
}

impl NestedSearch<'_> {
    fn probe(&mut self, lambda: &[f64], starts: &[Vec<f64>]) -> Result<DualEval> {
        let e = evaluate_dual(self.system, lambda, starts, BLOCK_TOL, BLOCK_MAX_ITER)?;
        self.values.push(e.value);
        self.observer.dual_round(self.rounds, lambda, &e.block_iterations);
        self.rounds += 1;
        Ok(e)
    }

    /// Maximize over coordinates `k..` with `k` and later starting from
    /// `guess.lambda`; `guess` must be evaluated at its multipliers.
    fn maximize(&mut self, k: usize, guess: DualEval) -> Result<DualEval> {
        if k == self.system.num_constraints {
            return Ok(guess);
        }
        let inner = self.maximize(k + 1, guess)?;
        let tol = self.opts.tol;
        let settled = |e: &DualEval| e.gradient[k] <= 0.0 && e.gradient[k] >= -tol;
        if inner.gradient[k] <= 0.0 && (inner.lambda[k] == 0.0 || settled(&inner)) {
            return Ok(inner);
        }
        // Bracket [lo, hi] with a positive derivative at lo and a
        // nonpositive one at hi.
        let (mut lo, mut f_lo, mut hi, mut hi_eval);
        if inner.gradient[k] <= 0.0 {
            let zero = self.at(k, 0.0, &inner)?;
            if zero.gradient[k] <= 0.0 {
                return Ok(zero);
            }
            (lo, f_lo) = (0.0, zero.gradient[k]);
            hi = inner.lambda[k];
            hi_eval = inner;
        } else {
            (lo, f_lo) = (inner.lambda[k], inner.gradient[k]);
            hi = (2.0 * lo).max(1.0);
            let mut e = self.at(k, hi, &inner)?;
            while e.gradient[k] > 0.0 {
                if hi > LAMBDA_CEILING {
                    return Err(Error::Infeasible(format!(
                        "no multiplier below {LAMBDA_CEILING:e} makes shared constraint {k} satisfied; \
                         the subproblem is suspected infeasible"
                    )));
                }
                (lo, f_lo) = (hi, e.gradient[k]);
                hi *= 2.0;
                e = self.at(k, hi, &e)?;
            }
            hi_eval = e;
        }
        // Illinois variant of regula falsi: the retained endpoint's value is
        // halved when the same side moves twice, with a bisection fallback.
        let mut f_hi = hi_eval.gradient[k];
        let mut last_side = 0i8;
        let mut steps = 0;
        while !settled(&hi_eval) && hi - lo > 1e-15 * hi.max(1.0) {
            if steps >= self.opts.max_iter {
                return Err(Error::convergence(
                    format!("bisection did not settle in {} steps", self.opts.max_iter),
                    Some(self.system.assemble(&hi_eval.block_points)),
                ));
            }
            steps += 1;
            let secant = hi - f_hi * (hi - lo) / (f_hi - f_lo);
            let next = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
            let e = self.at(k, next, &hi_eval)?;
            if e.gradient[k] > 0.0 {
                (lo, f_lo) = (next, e.gradient[k]);
                if last_side == 1 {
                    f_hi *= 0.5;
                }
                last_side = 1;
            } else {
                hi = next;
                f_hi = e.gradient[k];
                hi_eval = e;
                if last_side == -1 {
                    f_lo *= 0.5;
                }
                last_side = -1;
            }
        }
        Ok(hi_eval)
    }

    /// Set coordinate `k` to `value` and re-maximize the later ones, warm
    /// started from `near`.
    fn at(&mut self, k: usize, value: f64, near: &DualEval) -> Result<DualEval> {
        let mut lambda = near.lambda.clone();
        lambda[k] = value;
        let e = self.probe(&lambda, &near.block_points)?;
        self.maximize(k + 1, e)
    }
}
