//! Empirical checks of the surrogate contracts on sampled points.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{SurrogateConstraint, SurrogateObjective};
use crate::func::Oracle;
use crate::linalg::{dist, dot, lerp, norm_sq, sub};
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Property {
    /// Objective model gradient monotone with the declared modulus.
    StrongConvexity,
    /// Objective model gradient equals `∇U` at the anchor.
    ObjectiveTangency,
    /// Constraint model convex along sampled segments.
    Convexity,
    /// Constraint model value equals `g_j` at the anchor.
    ValueTangency,
    /// Constraint model upper bounds `g_j` on the set.
    UpperBound,
    /// Constraint model gradient equals `∇g_j` at the anchor.
    GradientTangency,
    /// Block components sum to the full model.
    Separability,
}

impl Property {
    pub fn code(self) -> &'static str {
        match self {
            Property::StrongConvexity => "B1",
            Property::ObjectiveTangency => "B2",
            Property::Convexity => "C1",
            Property::ValueTangency => "C2",
            Property::UpperBound => "C3",
            Property::GradientTangency => "C5",
            Property::Separability => "separability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    Objective,
    Constraint(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub property: Property,
    pub target: Target,
    /// Largest amount by which the property was violated (0 when it held
    /// everywhere).
    pub worst_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Where the worst violation occurred.
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub samples: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find(&self, property: Property, target: Target) -> Option<&Check> {
        self.checks
            .iter()
            .find(|c| c.property == property && c.target == target)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let target = match c.target {
                Target::Objective => "objective".to_string(),
                Target::Constraint(j) => format!("constraint {j}"),
            };
            writeln!(
                f,
                "{:<5} {:<13} {:<14} worst {:.3e} (tol {:.1e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.property.code(),
                target,
                c.worst_violation,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

struct Tracker {
    property: Property,
    target: Target,
    tolerance: f64,
    worst: f64,
    witness: Option<Vec<f64>>,
    failed: bool,
}

impl Tracker {
    fn new(property: Property, target: Target, tolerance: f64) -> Self {
        Self {
            property,
            target,
            tolerance,
            worst: 0.0,
            witness: None,
            failed: false,
        }
    }

    /// Record a violation amount, judged against `allowed` (which may be
    /// larger than the nominal tolerance for magnitude-scaled checks).
    fn record(&mut self, violation: f64, allowed: f64, at: &[f64]) {
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        if violation > allowed {
            self.failed = true;
        }
        if violation > self.worst {
            self.worst = violation;
            self.witness = Some(at.to_vec());
        }
    }

    fn finish(self) -> Check {
        Check {
            property: self.property,
            target: self.target,
            worst_violation: self.worst,
            tolerance: self.tolerance,
            passed: !self.failed,
            witness: self.witness,
        }
    }
}

const TOL_B1: f64 = 1e-10;
const TOL_B2: f64 = 1e-7;
const TOL_C1: f64 = 1e-10;
const TOL_C2: f64 = 1e-9;
const TOL_C3: f64 = 1e-10;
const TOL_C5: f64 = 1e-7;
const TOL_SEP: f64 = 1e-12;

/// Check the surrogate contracts against the original oracles of `p` at
/// `samples` random points of the set (and as many random pairs).
///
/// The objective model is not required to upper bound `U`, so no such
/// check is made.
pub fn verify_surrogate(
    p: &ProblemSpec,
    objective: Option<&SurrogateObjective>,
    constraints: &[SurrogateConstraint],
    samples: usize,
    seed: u64,
) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| p.set.sample(&mut rng)).collect();
    let partners: Vec<Vec<f64>> = (0..samples).map(|_| p.set.sample(&mut rng)).collect();
    let ranges = p.blocks.as_ref().map(|b| b.ranges());
    let mut checks = Vec::new();

    if let Some(obj) = objective {
        let y = &obj.anchor;
        let mut b2 = Tracker::new(Property::ObjectiveTangency, Target::Objective, TOL_B2);
        let gap = dist(&obj.func.gradient(y), &p.objective.gradient(y));
        b2.record(gap, TOL_B2, y);
        checks.push(b2.finish());

        let mut b1 = Tracker::new(Property::StrongConvexity, Target::Objective, TOL_B1);
        for (u, v) in points.iter().zip(&partners) {
            let d = sub(u, v);
            let lhs = dot(&d, &sub(&obj.func.gradient(u), &obj.func.gradient(v)));
            let rhs = obj.strong_convexity * norm_sq(&d);
            // absolute tolerance plus rounding proportional to the terms
            b1.record(rhs - lhs, TOL_B1 + 1e-13 * lhs.abs().max(rhs), u);
        }
        checks.push(b1.finish());

        if let (Some(comps), Some(ranges)) = (&obj.components, &ranges) {
            checks.push(separability(&obj.func, comps, ranges, &points, Target::Objective));
        }
    }

    for (j, sc) in constraints.iter().enumerate() {
        let target = Target::Constraint(j);
        let g = &p.constraints[j];
        let y = &sc.anchor;

        let mut c2 = Tracker::new(Property::ValueTangency, target, TOL_C2);
        c2.record((sc.func.value(y) - g.value(y)).abs(), TOL_C2, y);
        checks.push(c2.finish());

        let mut c5 = Tracker::new(Property::GradientTangency, target, TOL_C5);
        c5.record(dist(&sc.func.gradient(y), &g.gradient(y)), TOL_C5, y);
        checks.push(c5.finish());

        let mut c1 = Tracker::new(Property::Convexity, target, TOL_C1);
        for (u, v) in points.iter().zip(&partners) {
            let mid = lerp(u, v, 0.5);
            let fu = sc.func.value(u);
            let fv = sc.func.value(v);
            let excess = sc.func.value(&mid) - 0.5 * (fu + fv);
            c1.record(excess, TOL_C1 + 1e-14 * (fu.abs() + fv.abs()), &mid);
        }
        checks.push(c1.finish());

        let mut c3 = Tracker::new(Property::UpperBound, target, TOL_C3);
        for x in &points {
            let model = sc.func.value(x);
            let orig = g.value(x);
            c3.record(orig - model, TOL_C3 + 1e-14 * (model.abs() + orig.abs()), x);
        }
        checks.push(c3.finish());

        if let (Some(comps), Some(ranges)) = (&sc.components, &ranges) {
            checks.push(separability(&sc.func, comps, ranges, &points, target));
        }
    }

    VerificationReport { checks, samples }
}

fn separability(
    full: &Oracle,
    comps: &[Oracle],
    ranges: &[std::ops::Range<usize>],
    points: &[Vec<f64>],
    target: Target,
) -> Check {
    let mut t = Tracker::new(Property::Separability, target, TOL_SEP);
    for x in points {
        let f = full.value(x);
        let parts: Vec<f64> = comps
            .iter()
            .zip(ranges)
            .map(|(c, r)| c.value(&x[r.clone()]))
            .collect();
        let total: f64 = parts.iter().sum();
        let scale = 1.0 + f.abs() + parts.iter().map(|v| v.abs()).sum::<f64>();
        t.record((total - f).abs(), TOL_SEP * scale, x);
    }
    t.finish()
}
