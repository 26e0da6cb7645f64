//! The JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::registry::{build_benchmark, Reference};
use super::trace_io::TraceFormat;
use crate::dual::DualOptions;
use crate::error::{Error, Result};
use crate::inner::{InnerOptions, RoundObserver, SolveOptions};
use crate::nova::{nova_run, objective_lipschitz, NovaConfig, NovaOutcome, StepConfig, StepSchedule};
use crate::primal::PrimalOptions;
use crate::problem::{ProblemDoc, ProblemSpec};
use crate::surrogate::{SurrogateConfig, SurrogatePlan};
use crate::FEASIBILITY_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomRef {
    pub custom: ProblemDoc,
}

/// A registered benchmark with parameters, or a problem written out in
/// full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Registry(RegistryRef),
    Custom(CustomRef),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceOptions {
    /// Record elapsed milliseconds per iteration (traces then differ
    /// between runs).
    pub wall_clock: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: TraceFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemRef,
    /// Defaults to the benchmark's recipe; required for custom problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateConfig>,
    #[serde(default)]
    pub nova: NovaConfig,
    #[serde(default)]
    pub inner: InnerOptions,
    #[serde(default)]
    pub dual: DualOptions,
    #[serde(default)]
    pub primal: PrimalOptions,
    /// Seeds the choice of starting point when `x0` is absent.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub trace: TraceOptions,
}

impl RunConfig {
    /// Defaults for the registered problem `id`.
    pub fn for_benchmark(id: &str) -> Self {
        Self {
            problem: ProblemRef::Registry(RegistryRef {
                id: id.to_string(),
                params: Value::Null,
            }),
            surrogate: None,
            nova: NovaConfig::default(),
            inner: InnerOptions::default(),
            dual: DualOptions::default(),
            primal: PrimalOptions::default(),
            seed: 0,
            x0: None,
            trace: TraceOptions::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            inner: self.inner.clone(),
            dual: self.dual.clone(),
            primal: self.primal.clone(),
        }
    }

    /// Build the problem and models, validate the step schedule and pick
    /// the starting point.
    pub fn prepare(&self) -> Result<PreparedRun> {
        let (id, problem, default_surrogate, reference) = match &self.problem {
            ProblemRef::Registry(r) => {
                let b = build_benchmark(&r.id, &r.params)?;
                (Some(r.id.clone()), b.problem, Some(b.surrogate), b.reference)
            }
            ProblemRef::Custom(c) => (None, c.custom.build()?, None, None),
        };
        let surrogate = self
            .surrogate
            .clone()
            .or(default_surrogate)
            .ok_or_else(|| Error::Config("custom problems need a 'surrogate' section".into()))?;
        let plan = SurrogatePlan::new(&problem, &surrogate)?;
        let mut nova = self.nova.clone();
        nova.validate()?;
        nova.wall_clock = self.trace.wall_clock;
        let l = match nova.step {
            StepConfig::Constant { .. } => Some(objective_lipschitz(&problem, 0)?),
            _ => problem.lipschitz_grad_u,
        };
        let schedule = StepSchedule::new(nova.step, l, plan.strong_convexity())?;
        let x0 = match &self.x0 {
            Some(x) => {
                let r = problem.feasibility_residual(x)?;
                if r > FEASIBILITY_TOL {
                    return Err(Error::Input(format!("x0 is infeasible (residual {r:.3e})")));
                }
                x.clone()
            }
            None => problem.sample_feasible_point(self.seed, 100_000)?,
        };
        Ok(PreparedRun {
            id,
            problem,
            surrogate,
            plan,
            nova,
            solve: self.solve_options(),
            schedule,
            x0,
            reference,
        })
    }
}

/// A validated run, ready to execute.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub id: Option<String>,
    pub problem: ProblemSpec,
    pub surrogate: SurrogateConfig,
    pub plan: SurrogatePlan,
    pub nova: NovaConfig,
    pub solve: SolveOptions,
    pub schedule: StepSchedule,
    pub x0: Vec<f64>,
    pub reference: Option<Reference>,
}

impl PreparedRun {
    pub fn run(&self, observer: &mut dyn RoundObserver) -> Result<NovaOutcome> {
        nova_run(&self.plan, &self.nova, &self.solve, &self.x0, observer)
    }

    /// The same run from another starting point.
    pub fn with_start(&self, x0: Vec<f64>) -> Self {
        Self { x0, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::NoObserver;

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "problem": {"id": "shared-budget", "params": {"blocks": 2, "constraints": 1}},
            "nova": {"step": {"kind": "constant", "gamma_max": 1.0}, "stop_tol": 1e-7},
            "dual": {"rule": "bisection"},
            "seed": 3,
            "trace": {"format": "json"}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let again = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.trace.format, TraceFormat::Json);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"problem": {"id": "bilinear-floor"}, "nova": {"stop": 1}}"#;
        assert!(matches!(RunConfig::from_json(text), Err(Error::Json(_))));
    }

    #[test]
    fn bad_constant_step_fails_at_prepare() {
        let mut cfg = RunConfig::for_benchmark("bilinear-floor");
        cfg.surrogate = Some(SurrogateConfig {
            objective: crate::surrogate::ObjectiveRecipe::Proximal {
                tau: crate::surrogate::Tau::Uniform(0.5),
            },
            constraints: vec![crate::surrogate::ConstraintRecipe::Bilinear {
                i: 0,
                j: 1,
                coef: -1.0,
                remainder: Some(crate::expr::Expr::constant(1.0)),
            }],
        });
        cfg.nova.step = StepConfig::Constant {
            gamma_max: 1.0,
            gamma: None,
        };
        let err = cfg.prepare().unwrap_err();
        assert!(matches!(err, Error::Parameter(_)), "{err}");
    }

    #[test]
    fn floor_from_default_config() {
        let mut cfg = RunConfig::for_benchmark("bilinear-floor");
        cfg.x0 = Some(vec![2.0, 2.0]);
        cfg.nova.step = StepConfig::Constant {
            gamma_max: 0.5,
            gamma: None,
        };
        cfg.nova.max_outer = 1;
        let run = cfg.prepare().unwrap();
        let out = run.run(&mut NoObserver).unwrap();
        let t = 4.0 - 7f64.sqrt();
        assert!((out.trace[0].bestresp_dist - (2.0f64).sqrt() * (2.0 - t)).abs() < 1e-7);
        let next = 2.0 + 0.5 * (t - 2.0);
        assert!((out.point[0] - next).abs() < 1e-7);
        assert!((out.point[0] - 1.67712).abs() < 1e-5);
    }
}
