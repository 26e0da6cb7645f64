//! Convex models of the objective and constraints anchored at a point.
//!
//! Objective models are strongly convex and tangent to `U` at the anchor.
//! Constraint models are convex, tangent to `g_j` at the anchor and upper
//! bound `g_j` everywhere on the set, so their sublevel sets sit inside the
//! original feasible region.

mod constraint;
mod objective;
mod recipe;
mod verify;

pub use constraint::{
    bilinear_surrogate, dc_linearize, hessian_shift_dc_split, identity_convex,
    lipschitz_quadratic_surrogate,
};
pub use objective::{
    block_convex_objective, product_objective, proximal_linear_objective, sum_utility_objective,
    FactorModel, Metric, MetricOracle, ProductMode,
};
pub use recipe::{
    ConstraintRecipe, MetricSpec, ObjectiveRecipe, SurrogateConfig, SurrogatePlan, Tau,
};
pub use verify::{verify_surrogate, Check, Property, Target, VerificationReport};

use std::ops::Range;

use crate::func::{block_components, is_separable, Oracle};

/// Strongly convex model `Ũ(·; y)` of the objective.
#[derive(Debug, Clone)]
pub struct SurrogateObjective {
    pub anchor: Vec<f64>,
    pub func: Oracle,
    /// Declared modulus of strong convexity.
    pub strong_convexity: f64,
    /// Per-block functions of the block variables, summing to `func`.
    pub components: Option<Vec<Oracle>>,
    pub label: String,
}

impl SurrogateObjective {
    pub fn separable(&self) -> bool {
        self.components.is_some()
    }

    /// Attach block components when `func` splits along `blocks`.
    pub fn attach_components(&mut self, blocks: &[Range<usize>]) {
        self.components = split(&self.func, &self.anchor, blocks);
    }
}

/// Convex upper model `g̃_j(·; y)` of a constraint.
#[derive(Debug, Clone)]
pub struct SurrogateConstraint {
    pub anchor: Vec<f64>,
    pub func: Oracle,
    pub components: Option<Vec<Oracle>>,
    /// Known Lipschitz constant of the model over the set.
    pub lipschitz: Option<f64>,
    pub label: String,
}

impl SurrogateConstraint {
    pub fn separable(&self) -> bool {
        self.components.is_some()
    }

    pub fn attach_components(&mut self, blocks: &[Range<usize>]) {
        self.components = split(&self.func, &self.anchor, blocks);
    }
}

fn split(f: &Oracle, anchor: &[f64], blocks: &[Range<usize>]) -> Option<Vec<Oracle>> {
    is_separable(f.as_ref(), blocks).then(|| block_components(f, anchor, blocks))
}
