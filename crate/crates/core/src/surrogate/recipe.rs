//! JSON surrogate configuration and its compiled, anchor-independent plan.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::objective::modulus_of;
use super::*;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::func::Oracle;
use crate::linalg::dist;
use crate::problem::ProblemSpec;
use crate::FEASIBILITY_TOL;

/// Tangency tolerance enforced on objective models at build time.
const BUILD_TOL_OBJECTIVE: f64 = 1e-8;
const BUILD_TOL_VALUE: f64 = 1e-9;
const BUILD_TOL_GRADIENT: f64 = 1e-7;

/// Proximal weight: one for all blocks or one per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tau {
    Uniform(f64),
    PerBlock(Vec<f64>),
}

impl Default for Tau {
    fn default() -> Self {
        Tau::Uniform(1.0)
    }
}

impl Tau {
    fn resolve(&self, blocks: usize) -> Result<Vec<f64>> {
        match self {
            Tau::Uniform(t) => Ok(vec![*t; blocks]),
            Tau::PerBlock(v) if v.len() == blocks => Ok(v.clone()),
            Tau::PerBlock(v) => Err(Error::Config(format!(
                "{} tau values given for {blocks} blocks",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Identity,
    Fixed {
        matrices: Vec<Vec<Vec<f64>>>,
        floor: f64,
    },
}

impl MetricSpec {
    fn compile(&self) -> Metric {
        match self {
            MetricSpec::Identity => Metric::Identity,
            MetricSpec::Fixed { matrices, floor } => Metric::Fixed {
                matrices: matrices.clone(),
                floor: *floor,
            },
        }
    }
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn is_false(v: &bool) -> bool {
    !*v
}

fn is_identity(m: &MetricSpec) -> bool {
    *m == MetricSpec::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveRecipe {
    /// Linearize `U` and add `(τ_i/2)‖x_i − y_i‖²`.
    Proximal {
        #[serde(default)]
        tau: Tau,
    },
    /// `U` convex in each block (or jointly, with `joint`).
    BlockConvex {
        #[serde(default)]
        tau: Tau,
        #[serde(default, skip_serializing_if = "is_identity")]
        metric: MetricSpec,
        /// Declared strong-convexity modulus of `U` in each block.
        #[serde(default, skip_serializing_if = "is_zero")]
        modulus: f64,
        #[serde(default, skip_serializing_if = "is_false")]
        joint: bool,
    },
    /// `U = Σ_j f_j`; block `i` keeps the terms listed in `convex_terms[i]`.
    SumUtility {
        terms: Vec<Expr>,
        convex_terms: Vec<Vec<usize>>,
        #[serde(default)]
        tau: Tau,
        #[serde(default, skip_serializing_if = "is_identity")]
        metric: MetricSpec,
        #[serde(default, skip_serializing_if = "is_zero")]
        modulus: f64,
    },
    /// `U = left · right`.
    Product {
        left: Expr,
        right: Expr,
        mode: ProductMode,
        #[serde(default)]
        tau: Tau,
        #[serde(default, skip_serializing_if = "is_identity")]
        metric: MetricSpec,
        #[serde(default, skip_serializing_if = "is_zero")]
        modulus: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintRecipe {
    /// `g = plus − minus` with both convex.
    Dc { plus: Expr, minus: Expr },
    /// Shift by `(bound/2)‖x‖²` and linearize the shift.
    HessianShift { bound: f64 },
    /// Quadratic upper bound with gradient Lipschitz constant `lipschitz`.
    Lipschitz { lipschitz: f64 },
    /// `g = remainder + coef · x_i · x_j` with convex `remainder`.
    Bilinear {
        i: usize,
        j: usize,
        coef: f64,
        #[serde(default)]
        remainder: Option<Expr>,
    },
    /// `g` is convex already.
    IdentityConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub objective: ObjectiveRecipe,
    #[serde(default)]
    pub constraints: Vec<ConstraintRecipe>,
}

#[derive(Debug, Clone)]
enum CompiledObjective {
    Proximal {
        tau: Vec<f64>,
    },
    BlockConvex {
        tau: Vec<f64>,
        metric: Metric,
        modulus: f64,
        joint: bool,
    },
    SumUtility {
        terms: Vec<Oracle>,
        convex_terms: Vec<Vec<usize>>,
        tau: Vec<f64>,
        metric: Metric,
        modulus: f64,
    },
    Product {
        left: Oracle,
        right: Oracle,
        mode: ProductMode,
        tau: Vec<f64>,
        metric: Metric,
        modulus: f64,
    },
}

#[derive(Debug, Clone)]
enum CompiledConstraint {
    Dc { plus: Oracle, minus: Oracle },
    Lipschitz(f64),
    Bilinear {
        i: usize,
        j: usize,
        coef: f64,
        remainder: Option<Oracle>,
    },
    Identity,
}

/// A surrogate configuration bound to a problem. Building at an anchor
/// produces the objective and constraint models of the subproblem.
#[derive(Debug, Clone)]
pub struct SurrogatePlan {
    problem: ProblemSpec,
    objective: CompiledObjective,
    constraints: Vec<CompiledConstraint>,
    ranges: Vec<Range<usize>>,
    strong_convexity: f64,
}

impl SurrogatePlan {
    pub fn new(problem: &ProblemSpec, cfg: &SurrogateConfig) -> Result<Self> {
        let n = problem.dim;
        let ranges = problem
            .blocks
            .as_ref()
            .map(|b| b.ranges())
            .unwrap_or_else(|| std::iter::once(0..n).collect());
        let sizes: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        let nb = ranges.len();

        let (objective, c) = match &cfg.objective {
            ObjectiveRecipe::Proximal { tau } => {
                let tau = tau.resolve(nb)?;
                if let Some(t) = tau.iter().find(|t| !(**t > 0.0)) {
                    return Err(Error::Parameter(format!("proximal tau must be positive, got {t}")));
                }
                let c = modulus_of(&tau, &Metric::Identity, 0.0);
                (CompiledObjective::Proximal { tau }, c)
            }
            ObjectiveRecipe::BlockConvex {
                tau,
                metric,
                modulus,
                joint,
            } => {
                let tau = tau.resolve(nb)?;
                let metric = metric.compile();
                metric.validate(&sizes)?;
                let c = modulus_of(&tau, &metric, *modulus);
                (
                    CompiledObjective::BlockConvex {
                        tau,
                        metric,
                        modulus: *modulus,
                        joint: *joint,
                    },
                    c,
                )
            }
            ObjectiveRecipe::SumUtility {
                terms,
                convex_terms,
                tau,
                metric,
                modulus,
            } => {
                let tau = tau.resolve(nb)?;
                let metric = metric.compile();
                metric.validate(&sizes)?;
                let terms = terms
                    .iter()
                    .map(|t| t.compile(n))
                    .collect::<Result<Vec<_>>>()?;
                let c = modulus_of(&tau, &metric, *modulus);
                (
                    CompiledObjective::SumUtility {
                        terms,
                        convex_terms: convex_terms.clone(),
                        tau,
                        metric,
                        modulus: *modulus,
                    },
                    c,
                )
            }
            ObjectiveRecipe::Product {
                left,
                right,
                mode,
                tau,
                metric,
                modulus,
            } => {
                let tau = tau.resolve(nb)?;
                let metric = metric.compile();
                metric.validate(&sizes)?;
                let c = match mode {
                    ProductMode::ConvexPositive => modulus_of(&tau, &metric, *modulus),
                    ProductMode::Positive {
                        left,
                        right,
                        lower_bound,
                    } => lower_bound * (left.tau + right.tau) + modulus,
                    ProductMode::General { left, right } => left.tau + right.tau + modulus,
                };
                (
                    CompiledObjective::Product {
                        left: left.compile(n)?,
                        right: right.compile(n)?,
                        mode: mode.clone(),
                        tau,
                        metric,
                        modulus: *modulus,
                    },
                    c,
                )
            }
        };
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Parameter(format!(
                "objective model must be strongly convex; declared modulus is {c}"
            )));
        }

        if cfg.constraints.len() != problem.num_constraints() {
            return Err(Error::Config(format!(
                "{} constraint recipes for {} constraints",
                cfg.constraints.len(),
                problem.num_constraints()
            )));
        }
        let constraints = cfg
            .constraints
            .iter()
            .enumerate()
            .map(|(j, r)| -> Result<CompiledConstraint> {
                Ok(match r {
                    ConstraintRecipe::Dc { plus, minus } => CompiledConstraint::Dc {
                        plus: plus.compile(n)?,
                        minus: minus.compile(n)?,
                    },
                    ConstraintRecipe::HessianShift { bound } => {
                        let (plus, minus) = hessian_shift_dc_split(&problem.constraints[j], *bound)?;
                        CompiledConstraint::Dc { plus, minus }
                    }
                    ConstraintRecipe::Lipschitz { lipschitz } => {
                        if !(*lipschitz > 0.0) {
                            return Err(Error::Parameter(format!(
                                "constraint {j}: Lipschitz constant must be positive"
                            )));
                        }
                        CompiledConstraint::Lipschitz(*lipschitz)
                    }
                    ConstraintRecipe::Bilinear {
                        i,
                        j: k,
                        coef,
                        remainder,
                    } => CompiledConstraint::Bilinear {
                        i: *i,
                        j: *k,
                        coef: *coef,
                        remainder: remainder.as_ref().map(|r| r.compile(n)).transpose()?,
                    },
                    ConstraintRecipe::IdentityConvex => CompiledConstraint::Identity,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            problem: problem.clone(),
            objective,
            constraints,
            ranges,
            strong_convexity: c,
        })
    }

    /// Declared strong-convexity modulus of every objective model this
    /// plan builds.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    /// Build the models anchored at `y`, checking that `y` is feasible and
    /// that every model is tangent to its original at `y`.
    pub fn build(&self, y: &[f64]) -> Result<(SurrogateObjective, Vec<SurrogateConstraint>)> {
        let p = &self.problem;
        let residual = p.feasibility_residual(y)?;
        if residual > FEASIBILITY_TOL {
            return Err(Error::Input(format!(
                "anchor is infeasible (residual {residual:.3e})"
            )));
        }
        let mut obj = self.build_objective(y)?;
        let gap = dist(&obj.func.gradient(y), &p.objective.gradient(y));
        if !(gap <= BUILD_TOL_OBJECTIVE) {
            return Err(Error::Config(format!(
                "{} model is not tangent to the objective at the anchor (gradient gap {gap:.3e})",
                obj.label
            )));
        }
        let mut cons = Vec::with_capacity(self.constraints.len());
        for (j, c) in self.constraints.iter().enumerate() {
            let g = &p.constraints[j];
            let mut sc = match c {
                CompiledConstraint::Dc { plus, minus } => dc_linearize(plus, minus, y),
                CompiledConstraint::Lipschitz(l) => lipschitz_quadratic_surrogate(g, *l, y)?,
                CompiledConstraint::Bilinear {
                    i,
                    j: k,
                    coef,
                    remainder,
                } => bilinear_surrogate(*i, *k, *coef, remainder.clone(), y)?,
                CompiledConstraint::Identity => identity_convex(g, y),
            };
            let value_gap = (sc.func.value(y) - g.value(y)).abs();
            let grad_gap = dist(&sc.func.gradient(y), &g.gradient(y));
            if !(value_gap <= BUILD_TOL_VALUE && grad_gap <= BUILD_TOL_GRADIENT) {
                return Err(Error::Config(format!(
                    "constraint {j}: {} model does not match the constraint at the anchor \
                     (value gap {value_gap:.3e}, gradient gap {grad_gap:.3e}); check the declared split",
                    sc.label
                )));
            }
            sc.label = format!("constraint {j}: {}", sc.label);
            cons.push(sc);
        }
        if p.blocks.is_some() {
            obj.attach_components(&self.ranges);
            for sc in &mut cons {
                sc.attach_components(&self.ranges);
            }
        }
        Ok((obj, cons))
    }

    fn build_objective(&self, y: &[f64]) -> Result<SurrogateObjective> {
        let u = &self.problem.objective;
        let r = &self.ranges;
        match &self.objective {
            CompiledObjective::Proximal { tau } => proximal_linear_objective(u, tau, r, y),
            CompiledObjective::BlockConvex {
                tau,
                metric,
                modulus,
                joint,
            } => block_convex_objective(u, r, tau, metric, *modulus, *joint, y),
            CompiledObjective::SumUtility {
                terms,
                convex_terms,
                tau,
                metric,
                modulus,
            } => sum_utility_objective(terms, convex_terms, r, tau, metric, *modulus, y),
            CompiledObjective::Product {
                left,
                right,
                mode,
                tau,
                metric,
                modulus,
            } => product_objective(left, right, mode, r, tau, metric, *modulus, y),
        }
    }

    /// Labels of the models that do not split across the problem's blocks
    /// (empty when everything is separable).
    pub fn non_separable(&self, y: &[f64]) -> Result<Vec<String>> {
        if self.problem.blocks.is_none() {
            return Ok(vec!["problem has no block partition".into()]);
        }
        let (obj, cons) = self.build(y)?;
        let mut out = Vec::new();
        if !obj.separable() {
            out.push(format!("objective: {}", obj.label));
        }
        out.extend(cons.iter().filter(|c| !c.separable()).map(|c| c.label.clone()));
        Ok(out)
    }
}
