//! The outer loop: solve the convex model anchored at `x^ν`, then move a
//! fraction `γ^ν` of the way toward its solution.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{self, kkt_residual_original, RoundObserver, SolveOptions, Subproblem, WarmStart};
use crate::linalg::{dist, dot, lerp, norm_sq, sub};
use crate::problem::ProblemSpec;
use crate::surrogate::SurrogatePlan;
use crate::FEASIBILITY_TOL;

/// Step-size rule as written in a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepConfig {
    /// `γ^ν = gamma` (defaults to `gamma_max`).
    Constant {
        #[serde(default = "one")]
        gamma_max: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    /// `γ^ν = γ^{ν−1}(1 − eps·γ^{ν−1})`.
    DiminishingRecursive { gamma0: f64, eps: f64 },
    /// `γ^ν = gamma0 / (ν + 1)^power` with `power ∈ (0, 1]`.
    DiminishingCustom { gamma0: f64, power: f64 },
}

fn one() -> f64 {
    1.0
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig::DiminishingRecursive {
            gamma0: 1.0,
            eps: 1e-2,
        }
    }
}

/// A validated step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub config: StepConfig,
    /// Lipschitz constant of `∇U`; only needed by the constant rule.
    pub l_grad_u: Option<f64>,
    pub c_tilde: f64,
}

impl StepSchedule {
    pub fn new(config: StepConfig, l_grad_u: Option<f64>, c_tilde: f64) -> Result<Self> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        match config {
            StepConfig::Constant { gamma_max, gamma } => {
                let g = gamma.unwrap_or(gamma_max);
                if !in_unit(gamma_max) || !(g > 0.0 && g <= gamma_max) {
                    return Err(Error::Parameter(format!(
                        "constant step needs 0 < gamma ≤ gamma_max ≤ 1 (gamma = {g}, gamma_max = {gamma_max})"
                    )));
                }
                let l = l_grad_u.ok_or_else(|| {
                    Error::Parameter("constant step needs the Lipschitz constant of the objective gradient".into())
                })?;
                if !(2.0 * c_tilde > gamma_max * l) {
                    return Err(Error::Parameter(format!(
                        "constant step violates 2·c > gamma_max·L: 2·{c_tilde} = {} is not greater than {gamma_max}·{l} = {}",
                        2.0 * c_tilde,
                        gamma_max * l
                    )));
                }
            }
            StepConfig::DiminishingRecursive { gamma0, eps } => {
                if !in_unit(gamma0) || !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::Parameter(format!(
                        "recursive diminishing step needs gamma0 in (0, 1] and eps in (0, 1) (got {gamma0}, {eps})"
                    )));
                }
            }
            StepConfig::DiminishingCustom { gamma0, power } => {
                if !in_unit(gamma0) || !(power > 0.0 && power <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "custom diminishing step needs gamma0 in (0, 1] and power in (0, 1] (got {gamma0}, {power})"
                    )));
                }
            }
        }
        if !(c_tilde > 0.0) {
            return Err(Error::Parameter(format!("model modulus must be positive, got {c_tilde}")));
        }
        Ok(Self {
            config,
            l_grad_u,
            c_tilde,
        })
    }

    pub fn initial(&self) -> f64 {
        match self.config {
            StepConfig::Constant { gamma_max, gamma } => gamma.unwrap_or(gamma_max),
            StepConfig::DiminishingRecursive { gamma0, .. } => gamma0,
            StepConfig::DiminishingCustom { gamma0, .. } => gamma0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.config, StepConfig::Constant { .. })
    }
}

/// Step for iteration `nu ≥ 1` given the previous one.
pub fn step_next(s: &StepSchedule, nu: usize, prev_gamma: f64) -> f64 {
    match s.config {
        StepConfig::Constant { .. } => prev_gamma,
        StepConfig::DiminishingRecursive { eps, .. } => prev_gamma * (1.0 - eps * prev_gamma),
        StepConfig::DiminishingCustom { gamma0, power } => gamma0 / (nu as f64 + 1.0).powf(power),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Diagnostics {
    pub descent_check: bool,
    pub feasibility_check: bool,
    pub monotonicity_check: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            descent_check: true,
            feasibility_check: true,
            monotonicity_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NovaConfig {
    pub step: StepConfig,
    /// Stop when `‖x̂(x^ν) − x^ν‖ ≤ stop_tol`.
    pub stop_tol: f64,
    pub max_outer: usize,
    pub diagnostics: Diagnostics,
    /// Fill the `wall_ms` trace column (makes traces run-dependent).
    #[serde(skip)]
    pub wall_clock: bool,
}

impl Default for NovaConfig {
    fn default() -> Self {
        Self {
            step: StepConfig::default(),
            stop_tol: 1e-6,
            max_outer: 1000,
            diagnostics: Diagnostics::default(),
            wall_clock: false,
        }
    }
}

impl NovaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_tol > 0.0) {
            return Err(Error::Config(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// One outer iteration, recorded before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub nu: usize,
    #[serde(rename = "U")]
    pub u: f64,
    pub gamma: f64,
    pub bestresp_dist: f64,
    pub max_g: f64,
    pub descent_lhs: f64,
    pub descent_rhs: f64,
    pub kkt: f64,
    pub inner_iters: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NovaStatus {
    Stationary,
    MaxIter,
    InnerFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `∇U(x)ᵀ(x̂ − x) ≤ −c‖x̂ − x‖²` with slack `1e-8·(1 + |rhs|)`.
pub fn descent_check(grad_u: &[f64], xhat: &[f64], x: &[f64], c_tilde: f64) -> DescentCheck {
    let d = sub(xhat, x);
    let lhs = dot(grad_u, &d);
    let rhs = -c_tilde * norm_sq(&d);
    DescentCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-8 * (1.0 + rhs.abs()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Monotonicity {
    Passed,
    Violated { nu: usize, excess: f64 },
    /// The rule only applies to a constant step.
    Skipped,
}

impl Monotonicity {
    pub fn passed(&self) -> bool {
        !matches!(self, Monotonicity::Violated { .. })
    }
}

/// `U(x^{ν+1}) ≤ U(x^ν) − γ(c − γL/2)‖x̂ − x^ν‖² + 1e-7` on consecutive
/// rows of a constant-step trace.
pub fn monotonicity_check(trace: &[TraceRow], schedule: &StepSchedule) -> Monotonicity {
    let (true, Some(l)) = (schedule.is_constant(), schedule.l_grad_u) else {
        return Monotonicity::Skipped;
    };
    let c = schedule.c_tilde;
    let mut worst: Option<(usize, f64)> = None;
    for w in trace.windows(2) {
        let g = w[0].gamma;
        let bound = w[0].u - g * (c - g * l / 2.0) * w[0].bestresp_dist.powi(2) + 1e-7;
        let excess = w[1].u - bound;
        if excess > 0.0 && worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((w[0].nu, excess));
        }
    }
    match worst {
        Some((nu, excess)) => Monotonicity::Violated { nu, excess },
        None => Monotonicity::Passed,
    }
}

/// Counts of rows that broke an enabled diagnostic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticReport {
    pub descent_failures: Vec<usize>,
    pub feasibility_failures: Vec<usize>,
    pub monotonicity: Option<Monotonicity>,
}

impl DiagnosticReport {
    pub fn passed(&self) -> bool {
        self.descent_failures.is_empty()
            && self.feasibility_failures.is_empty()
            && self.monotonicity.is_none_or(|m| m.passed())
    }
}

#[derive(Debug, Clone)]
pub struct NovaOutcome {
    pub point: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub status: NovaStatus,
    /// KKT residual of the original problem at the returned point.
    pub final_kkt: f64,
    pub schedule: StepSchedule,
    pub diagnostics: DiagnosticReport,
    /// Message of the inner error that stopped the run, if any.
    pub failure: Option<String>,
    /// The error that stopped the run, kept for exit-code mapping.
    pub failure_error: Option<std::sync::Arc<Error>>,
}

const LIPSCHITZ_SAMPLES: usize = 256;

/// Lipschitz constant of `∇U`: the declared one, else a sampled estimate.
pub fn objective_lipschitz(p: &ProblemSpec, seed: u64) -> Result<f64> {
    match p.lipschitz_grad_u {
        Some(l) => Ok(l),
        None => p.estimate_lipschitz_grad(LIPSCHITZ_SAMPLES, seed),
    }
}

/// Run the outer loop from the feasible point `x0`.
pub fn nova_run(
    plan: &SurrogatePlan,
    cfg: &NovaConfig,
    solve: &SolveOptions,
    x0: &[f64],
    observer: &mut dyn RoundObserver,
) -> Result<NovaOutcome> {
    cfg.validate()?;
    let p = plan.problem();
    if x0.len() != p.dim {
        return Err(Error::dimension("starting point", p.dim, x0.len()));
    }
    let residual = p.feasibility_residual(x0)?;
    if residual > FEASIBILITY_TOL {
        return Err(Error::Input(format!(
            "starting point is infeasible (residual {residual:.3e})"
        )));
    }
    let l = match cfg.step {
        StepConfig::Constant { .. } => Some(objective_lipschitz(p, 0)?),
        _ => p.lipschitz_grad_u,
    };
    let schedule = StepSchedule::new(cfg.step, l, plan.strong_convexity())?;
    let c = schedule.c_tilde;

    let mut x = x0.to_vec();
    let mut gamma = schedule.initial();
    let mut warm = WarmStart::default();
    let mut trace = Vec::new();
    let mut report = DiagnosticReport::default();
    let mut multipliers = vec![0.0; p.num_constraints()];
    let mut status = NovaStatus::MaxIter;
    let mut failure = None;
    for nu in 0..cfg.max_outer {
        let started = cfg.wall_clock.then(Instant::now);
        observer.outer_iteration(nu, &x);
        let solved = Subproblem::from_plan(plan, &x)
            .and_then(|s| inner::solve_subproblem(&s, solve, &mut warm, observer));
        let sol = match solved {
            Ok(s) => s,
            Err(e) => {
                status = NovaStatus::InnerFailure;
                failure = Some(e);
                break;
            }
        };
        let grad = p.objective.gradient(&x);
        let check = descent_check(&grad, &sol.point, &x, c);
        let max_g = p.max_constraint(&x).unwrap_or(0.0);
        let step = dist(&sol.point, &x);
        let row = TraceRow {
            nu,
            u: p.objective.value(&x),
            gamma,
            bestresp_dist: step,
            max_g,
            descent_lhs: check.lhs,
            descent_rhs: check.rhs,
            kkt: kkt_residual_original(p, &x, &sol.multipliers)?,
            inner_iters: sol.inner_iterations,
            wall_ms: started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3),
        };
        if cfg.diagnostics.descent_check && !check.pass {
            report.descent_failures.push(nu);
        }
        if cfg.diagnostics.feasibility_check
            && (max_g > FEASIBILITY_TOL || p.set.distance(&x) > FEASIBILITY_TOL)
        {
            report.feasibility_failures.push(nu);
        }
        trace.push(row);
        multipliers = sol.multipliers;
        if step <= cfg.stop_tol {
            status = NovaStatus::Stationary;
            break;
        }
        x = lerp(&x, &sol.point, gamma);
        gamma = step_next(&schedule, nu + 1, gamma);
    }
    if cfg.diagnostics.monotonicity_check {
        report.monotonicity = Some(monotonicity_check(&trace, &schedule));
    }
    let final_kkt = kkt_residual_original(p, &x, &multipliers)?;
    Ok(NovaOutcome {
        point: x,
        multipliers,
        trace,
        status,
        final_kkt,
        schedule,
        diagnostics: report,
        failure: failure.as_ref().map(|e| e.to_string()),
        failure_error: failure.map(std::sync::Arc::new),
    })
}
