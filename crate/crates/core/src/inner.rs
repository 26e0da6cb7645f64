//! Strongly convex subproblems anchored at the current iterate and the
//! solvers that return their unique minimizer with multipliers.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::{self, BlockSystem, DualOptions, DualRuleKind, DualStepRule};
use crate::error::{Error, Result};
use crate::func::{BlockQuadratic, Oracle, SmoothFn};
use crate::linalg::{dist, lerp, norm, sub};
use crate::pg::{self, PgOptions};
use crate::primal::{self, PrimalOptions};
use crate::problem::{find_strictly_feasible, ProblemSpec};
use crate::set::{BlockPartition, ConvexSet};
use crate::surrogate::{SurrogateConstraint, SurrogateObjective, SurrogatePlan};
use crate::FEASIBILITY_TOL;

/// Hooks called once per communication round of a distributed inner
/// solve. Used for accounting only.
pub trait RoundObserver {
    /// Called with the iterate `x^ν` before its subproblem is solved.
    fn outer_iteration(&mut self, _nu: usize, _x: &[f64]) {}
    /// A multiplier broadcast followed by one block solve per agent.
    fn dual_round(&mut self, _round: usize, _lambda: &[f64], _block_work: &[usize]) {}
    /// A slack assignment followed by one constrained block solve per agent.
    /// `shared` holds the shared model values at the assembled point.
    fn master_round(
        &mut self,
        _round: usize,
        _slacks: &[Vec<f64>],
        _block_work: &[usize],
        _shared: &[f64],
    ) {
    }
}

/// Observer that ignores every round.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl RoundObserver for NoObserver {}

/// `min Ũ(x; y)` subject to `g̃_j(x; y) ≤ 0` and `x ∈ K`.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub objective: SurrogateObjective,
    pub constraints: Vec<SurrogateConstraint>,
    pub set: ConvexSet,
    pub anchor: Vec<f64>,
    pub blocks: Option<BlockPartition>,
}

impl Subproblem {
    /// Assemble a subproblem, checking that the anchor is feasible for its
    /// own models.
    pub fn new(
        objective: SurrogateObjective,
        constraints: Vec<SurrogateConstraint>,
        set: ConvexSet,
        blocks: Option<BlockPartition>,
    ) -> Result<Self> {
        let anchor = objective.anchor.clone();
        if set.dim() != anchor.len() {
            return Err(Error::dimension("subproblem set", anchor.len(), set.dim()));
        }
        if !(objective.strong_convexity > 0.0) {
            return Err(Error::Parameter(format!(
                "objective model must be strongly convex (modulus {})",
                objective.strong_convexity
            )));
        }
        let s = Self {
            objective,
            constraints,
            set,
            anchor,
            blocks,
        };
        let worst = s.max_model_value(&s.anchor);
        if worst > FEASIBILITY_TOL {
            return Err(Error::Input(format!(
                "anchor violates its own constraint models by {worst:.3e}"
            )));
        }
        Ok(s)
    }

    /// Build the models of `plan` at `y`.
    pub fn from_plan(plan: &SurrogatePlan, y: &[f64]) -> Result<Self> {
        let (obj, cons) = plan.build(y)?;
        let p = plan.problem();
        Self::new(obj, cons, p.set.clone(), p.blocks.clone())
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn strong_convexity(&self) -> f64 {
        self.objective.strong_convexity
    }

    pub fn model_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.func.value(x)).collect()
    }

    fn max_model_value(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.func.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Constraint violation plus distance to `K`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.max_model_value(x).max(0.0) + self.set.distance(x)
    }

    /// Whether the objective and every constraint model split across the
    /// block partition.
    pub fn is_separable(&self) -> bool {
        self.blocks.as_ref().is_some_and(|b| b.len() > 1)
            && self.objective.separable()
            && self.constraints.iter().all(|c| c.separable())
    }

    /// Labels of the models that do not split across blocks.
    pub fn non_separable_labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.blocks.is_none() {
            out.push("problem has no block partition".to_string());
        }
        if !self.objective.separable() {
            out.push(format!("objective: {}", self.objective.label));
        }
        out.extend(
            self.constraints
                .iter()
                .filter(|c| !c.separable())
                .map(|c| c.label.clone()),
        );
        out
    }

    fn model_oracles(&self) -> Vec<Oracle> {
        self.constraints.iter().map(|c| c.func.clone()).collect()
    }

    /// A strictly feasible point of the models, searched among the anchor
    /// and `trials` samples of `K`.
    pub fn strictly_feasible_point(&self, trials: usize, seed: u64) -> Option<Vec<f64>> {
        find_strictly_feasible(
            &self.model_oracles(),
            &self.set,
            std::slice::from_ref(&self.anchor),
            trials,
            seed,
        )
    }

    /// Sampled Slater test. `false` means "not verified".
    pub fn slater_check(&self, trials: usize) -> bool {
        self.constraints.is_empty() || self.strictly_feasible_point(trials, 0).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub point: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Dual or master rounds for the distributed methods, projected
    /// gradient steps otherwise.
    pub inner_iterations: usize,
    /// Model violation plus distance to `K` at `point`.
    pub primal_residual: f64,
    /// KKT residual of the subproblem at `(point, multipliers)`.
    pub stationarity_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    /// Dual ascent when there are constraints (decomposed when every model
    /// splits across blocks), projected gradient otherwise.
    #[default]
    Auto,
    ProjectedGradient,
    DualAscent,
    PrimalDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerOptions {
    pub method: InnerMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            method: InnerMethod::Auto,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// Everything an inner solve may need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOptions {
    pub inner: InnerOptions,
    pub dual: DualOptions,
    pub primal: PrimalOptions,
}

/// State carried from one subproblem to the next.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub lambda: Option<Vec<f64>>,
}

/// The concrete method `solve_subproblem` will use for `sub`.
pub fn resolve_method(method: InnerMethod, sub: &Subproblem) -> InnerMethod {
    match method {
        InnerMethod::Auto if sub.num_constraints() == 0 => InnerMethod::ProjectedGradient,
        InnerMethod::Auto => InnerMethod::DualAscent,
        other => other,
    }
}

fn pg_tol(tol: f64) -> f64 {
    (tol * 1e-3).max(1e-14)
}

/// Solve `sub` with the configured method.
pub fn solve_subproblem(
    sub: &Subproblem,
    opts: &SolveOptions,
    warm: &mut WarmStart,
    observer: &mut dyn RoundObserver,
) -> Result<InnerSolution> {
    let m = sub.num_constraints();
    let (point, multipliers, iterations) = match resolve_method(opts.inner.method, sub) {
        InnerMethod::ProjectedGradient if m == 0 => {
            let set = &sub.set;
            let r = pg::minimize(
                sub.objective.func.as_ref(),
                &|u| set.project(u),
                &sub.anchor,
                &PgOptions {
                    tol: pg_tol(opts.inner.tol),
                    max_iter: opts.inner.max_iter,
                    initial_lipschitz: 1.0,
                },
            )?;
            (r.point, Vec::new(), r.iterations)
        }
        InnerMethod::ProjectedGradient => {
            let (x, it) = projected_gradient_constrained(sub, opts)?;
            let mu = least_squares_multipliers(sub, &x);
            (x, mu, it)
        }
        InnerMethod::DualAscent | InnerMethod::Auto => {
            let system = BlockSystem::from_subproblem(sub, sub.is_separable())?;
            let rule = dual::resolve_rule(&system, &opts.dual)?;
            let lambda0 = if opts.dual.warm_start {
                warm.lambda.clone()
            } else {
                None
            };
            let out = dual::dual_solve(&system, &rule, &opts.dual, lambda0.as_deref(), observer)?;
            warm.lambda = Some(out.lambda.clone());
            let x = restore_feasibility(sub, &out.point);
            (x, out.lambda, out.rounds)
        }
        InnerMethod::PrimalDecomposition => {
            let out = primal::primal_solve(sub, &opts.primal, &opts.dual, observer)?;
            (out.point, out.multipliers, out.rounds)
        }
    };
    let stationarity = kkt_residual(
        sub.objective.func.as_ref(),
        &sub.model_oracles(),
        &sub.set,
        &point,
        &multipliers,
    )?;
    Ok(InnerSolution {
        primal_residual: sub.violation(&point),
        stationarity_residual: stationarity,
        point,
        multipliers,
        inner_iterations: iterations,
    })
}

/// Restore exact model feasibility of a nearly feasible `x` by moving it
/// toward a strictly feasible point (the anchor when none is found).
pub fn restore_feasibility(sub: &Subproblem, x: &[f64]) -> Vec<f64> {
    if sub.max_model_value(x) <= 0.0 {
        return x.to_vec();
    }
    let target = sub
        .strictly_feasible_point(WITNESS_TRIALS, 0)
        .unwrap_or_else(|| sub.anchor.clone());
    polish(sub, x, &target)
}

const WITNESS_TRIALS: usize = 256;

/// Move `x` toward the feasible point `from` just far enough that every
/// constraint model is satisfied. Points already feasible are returned
/// unchanged.
pub fn polish(sub: &Subproblem, x: &[f64], from: &[f64]) -> Vec<f64> {
    let limit = sub.max_model_value(from).max(0.0);
    if sub.max_model_value(x) <= limit {
        return x.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sub.max_model_value(&lerp(from, x, mid)) <= limit {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    lerp(from, x, lo)
}

/// Euclidean projection of `u` onto the model feasible set
/// `{x ∈ K : g̃(x; y) ≤ 0}`, computed by dual ascent on `½‖x − u‖²`.
pub fn projection_onto_sublevel(sub: &Subproblem, u: &[f64], dual_opts: &DualOptions) -> Result<Vec<f64>> {
    if sub.violation(u) == 0.0 {
        return Ok(u.to_vec());
    }
    let base = sub.set.project(u);
    if sub.num_constraints() == 0 {
        return Ok(base);
    }
    let objective: Oracle = Arc::new(BlockQuadratic::isotropic(u.to_vec(), 1.0));
    let system = BlockSystem {
        blocks: vec![dual::Block {
            range: 0..u.len(),
            objective,
            constraints: sub.model_oracles(),
            rhs: vec![0.0; sub.num_constraints()],
            set: sub.set.clone(),
        }],
        dim: u.len(),
        num_constraints: sub.num_constraints(),
        strong_convexity: 1.0,
        anchor: sub.anchor.clone(),
    };
    let mut opts = dual_opts.clone();
    opts.rule = if system.num_constraints <= dual::NESTED_BISECTION_MAX {
        DualRuleKind::Bisection
    } else {
        DualRuleKind::ConstantRange
    };
    opts.alpha0 = None;
    let rule: DualStepRule = dual::resolve_rule(&system, &opts)?;
    let out = dual::dual_solve(&system, &rule, &opts, None, &mut NoObserver)?;
    Ok(restore_feasibility(sub, &out.point))
}

/// `‖x − P_X(x − ρ∇Ũ(x))‖` where `X` is the model feasible set.
pub fn fixed_point_residual(sub: &Subproblem, x: &[f64], rho: f64, dual_opts: &DualOptions) -> Result<f64> {
    let g = sub.objective.func.gradient(x);
    let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - rho * b).collect();
    let p = projection_onto_sublevel(sub, &trial, dual_opts)?;
    Ok(dist(x, &p))
}

/// Projected gradient over the model feasible set; each projection is a
/// small dual solve.
fn projected_gradient_constrained(sub: &Subproblem, opts: &SolveOptions) -> Result<(Vec<f64>, usize)> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let project = |u: &[f64]| match projection_onto_sublevel(sub, u, &opts.dual) {
        Ok(p) => p,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            u.to_vec()
        }
    };
    let r = pg::minimize(
        sub.objective.func.as_ref(),
        &project,
        &sub.anchor,
        &PgOptions {
            tol: pg_tol(opts.inner.tol),
            max_iter: opts.inner.max_iter,
            initial_lipschitz: 1.0,
        },
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let r = r?;
    Ok((restore_feasibility(sub, &r.point), r.iterations))
}

const ACTIVE_TOL: f64 = 1e-6;

/// Multipliers fitted by least squares on the stationarity condition,
/// using the active models and the coordinates where `K` is locally
/// unconstrained. Negative fits are clipped to zero.
pub fn least_squares_multipliers(sub: &Subproblem, x: &[f64]) -> Vec<f64> {
    let m = sub.num_constraints();
    let active: Vec<usize> = (0..m)
        .filter(|&j| sub.constraints[j].func.value(x) >= -ACTIVE_TOL)
        .collect();
    let mut mu = vec![0.0; m];
    if active.is_empty() {
        return mu;
    }
    let free: Vec<usize> = (0..x.len())
        .filter(|&k| {
            let probe = 1e-7 * (1.0 + x[k].abs());
            [-probe, probe].iter().all(|d| {
                let mut v = x.to_vec();
                v[k] += d;
                (sub.set.project(&v)[k] - x[k] - d).abs() <= 1e-3 * probe
            })
        })
        .collect();
    if free.is_empty() {
        return mu;
    }
    let grad_u = sub.objective.func.gradient(x);
    let grads: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| sub.constraints[j].func.gradient(x))
        .collect();
    let a = DMatrix::from_fn(free.len(), active.len(), |r, c| grads[c][free[r]]);
    let b = DVector::from_iterator(free.len(), free.iter().map(|&k| -grad_u[k]));
    if let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) {
        for (&j, v) in active.iter().zip(sol.iter()) {
            mu[j] = v.max(0.0);
        }
    }
    mu
}

/// `‖x − P_K(x − ∇f − Σ μ_j ∇g_j)‖ + Σ max(0, −μ_j) + Σ |μ_j g_j(x)|`.
pub fn kkt_residual(
    objective: &dyn SmoothFn,
    constraints: &[Oracle],
    set: &ConvexSet,
    x: &[f64],
    mu: &[f64],
) -> Result<f64> {
    if objective.dim() != x.len() {
        return Err(Error::dimension("point", objective.dim(), x.len()));
    }
    if mu.len() != constraints.len() {
        return Err(Error::dimension("multipliers", constraints.len(), mu.len()));
    }
    let mut grad = objective.gradient(x);
    let mut slack = 0.0;
    for (g, &m) in constraints.iter().zip(mu) {
        g.add_gradient(x, m, &mut grad);
        slack += (-m).max(0.0) + (m * g.value(x)).abs();
    }
    let step = set.project(&sub(x, &grad));
    Ok(norm(&sub(x, &step)) + slack)
}

/// KKT residual of the original problem at `x` with multipliers `mu`.
pub fn kkt_residual_original(p: &ProblemSpec, x: &[f64], mu: &[f64]) -> Result<f64> {
    if x.len() != p.dim {
        return Err(Error::dimension("point", p.dim, x.len()));
    }
    kkt_residual(p.objective.as_ref(), &p.constraints, &p.set, x, mu)
}
