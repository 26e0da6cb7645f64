//! Problem definition: objective and constraint oracles over a convex set.
//!
//! The objective is assumed coercive on the set (or the set compact); that
//! contract is documented rather than checked, since no finite sample can
//! confirm it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::func::{fd_gradient, Oracle};
use crate::linalg::{dist, norm, sub};
use crate::set::{BlockPartition, ConvexSet};
use crate::FEASIBILITY_TOL;

/// Multiplier applied to sampled difference quotients.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;

/// Margin a point must clear to count as strictly feasible.
pub const SLATER_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub objective: Oracle,
    pub constraints: Vec<Oracle>,
    pub set: ConvexSet,
    pub blocks: Option<BlockPartition>,
    /// Known upper bound on the Lipschitz constant of the objective
    /// gradient over the set.
    pub lipschitz_grad_u: Option<f64>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        objective: Oracle,
        constraints: Vec<Oracle>,
        set: ConvexSet,
    ) -> Result<Self> {
        let dim = set.dim();
        set.validate()?;
        if objective.dim() != dim {
            return Err(Error::dimension("objective", dim, objective.dim()));
        }
        for (j, g) in constraints.iter().enumerate() {
            if g.dim() != dim {
                return Err(Error::dimension(&format!("constraint {j}"), dim, g.dim()));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            objective,
            constraints,
            set,
            blocks: None,
            lipschitz_grad_u: None,
        })
    }

    pub fn with_blocks(mut self, sizes: Vec<usize>) -> Result<Self> {
        self.blocks = Some(BlockPartition::new(sizes, &self.set)?);
        Ok(self)
    }

    pub fn with_lipschitz(mut self, l: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::Parameter(format!(
                "Lipschitz constant must be positive and finite, got {l}"
            )));
        }
        self.lipschitz_grad_u = Some(l);
        Ok(self)
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::dimension("point", self.dim, x.len()))
        }
    }

    /// Constraint values `g_j(x)`.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|g| g.value(x)).collect()
    }

    /// `max_j g_j(x)`, or `None` without constraints.
    pub fn max_constraint(&self, x: &[f64]) -> Option<f64> {
        self.constraints.iter().map(|g| g.value(x)).reduce(f64::max)
    }

    /// `max(0, max_j g_j(x)) + ‖x − P_K(x)‖`; zero exactly on the feasible
    /// set.
    pub fn feasibility_residual(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let violation = self.max_constraint(x).unwrap_or(0.0).max(0.0);
        Ok(violation + self.set.distance(x))
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && self.max_constraint(x).unwrap_or(0.0) <= FEASIBILITY_TOL
            && self.set.distance(x) <= FEASIBILITY_TOL
    }

    /// Sampled upper estimate of the Lipschitz constant of `∇U` on the
    /// set: the largest difference quotient over random and nearby pairs,
    /// times [`LIPSCHITZ_SAFETY`]. Deterministic for a fixed seed.
    pub fn estimate_lipschitz_grad(&self, samples: usize, seed: u64) -> Result<f64> {
        if samples == 0 {
            return Err(Error::Parameter("need at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = self.set.corners();
        for _ in 0..samples {
            let p = self.set.sample(&mut rng);
            if p.len() != self.dim || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("set sampler returned an invalid point".into()));
            }
            points.push(p);
        }
        let grads: Vec<Vec<f64>> = points.iter().map(|p| self.objective.gradient(p)).collect();
        let mut best = 0.0f64;
        let mut ratio = |u: &[f64], gu: &[f64], v: &[f64], gv: &[f64]| {
            let d = dist(u, v);
            if d > 1e-9 {
                best = best.max(dist(gu, gv) / d);
            }
        };
        for k in 1..points.len() {
            ratio(&points[k - 1], &grads[k - 1], &points[k], &grads[k]);
        }
        // Nearby pairs pick up local curvature that distant pairs average out.
        for (p, gp) in points.iter().zip(&grads) {
            for step in [1e-2, 1e-3] {
                let shifted: Vec<f64> = p
                    .iter()
                    .map(|v| v + step * rand::Rng::random_range(&mut rng, -1.0..1.0))
                    .collect();
                let q = self.set.project(&shifted);
                let gq = self.objective.gradient(&q);
                ratio(p, gp, &q, &gq);
            }
        }
        Ok(LIPSCHITZ_SAFETY * best)
    }

    /// Compare analytic gradients with central differences (step `1e-6`) at
    /// `points` random points of the set.
    pub fn check_oracles(&self, points: usize, seed: u64) -> OracleCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = vec![0.0f64; 1 + self.constraints.len()];
        for _ in 0..points {
            let x = self.set.sample(&mut rng);
            let funcs = std::iter::once(&self.objective).chain(&self.constraints);
            for (w, f) in worst.iter_mut().zip(funcs) {
                let g = f.gradient(&x);
                let fd = fd_gradient(f.as_ref(), &x, 1e-6);
                let rel = norm(&sub(&g, &fd)) / norm(&g).max(1.0);
                if rel.is_nan() {
                    *w = f64::INFINITY;
                } else {
                    *w = w.max(rel);
                }
            }
        }
        OracleCheck {
            objective_error: worst[0],
            constraint_errors: worst[1..].to_vec(),
            tolerance: 1e-5,
        }
    }

    /// Rejection-sample a feasible point.
    pub fn sample_feasible_point(&self, seed: u64, tries: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..tries {
            let x = self.set.sample(&mut rng);
            if self.is_feasible(&x) {
                return Ok(x);
            }
        }
        Err(Error::Infeasible(format!(
            "no feasible point among {tries} samples of the set"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub objective_error: f64,
    pub constraint_errors: Vec<f64>,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        std::iter::once(&self.objective_error)
            .chain(&self.constraint_errors)
            .all(|e| *e <= self.tolerance)
    }
}

/// Look for a point of `set` where every constraint is below
/// `-SLATER_MARGIN`: the candidates first, then `trials` random samples.
pub fn find_strictly_feasible(
    constraints: &[Oracle],
    set: &ConvexSet,
    candidates: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Option<Vec<f64>> {
    let strict = |x: &[f64]| constraints.iter().all(|g| g.value(x) < -SLATER_MARGIN);
    if let Some(c) = candidates.iter().find(|c| set.contains(c, 0.0) && strict(c)) {
        return Some(c.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| set.sample(&mut rng))
        .find(|x| strict(x))
}

/// `true` when a strictly feasible point was found. `false` means "not
/// verified", never "disproved".
pub fn slater_check(
    constraints: &[Oracle],
    set: &ConvexSet,
    candidates: &[Vec<f64>],
    trials: usize,
) -> bool {
    find_strictly_feasible(constraints, set, candidates, trials, 0).is_some()
}

/// JSON description of a problem built from builtin primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    pub set: ConvexSet,
    pub objective: Expr,
    #[serde(default)]
    pub constraints: Vec<Expr>,
    /// Block sizes; the set must split accordingly.
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    #[serde(default)]
    pub lipschitz_grad_u: Option<f64>,
}

fn default_name() -> String {
    "custom".into()
}

impl ProblemDoc {
    pub fn build(&self) -> Result<ProblemSpec> {
        if self.set.dim() != self.dim {
            return Err(Error::dimension("set", self.dim, self.set.dim()));
        }
        let objective = self.objective.compile(self.dim)?;
        let constraints = self
            .constraints
            .iter()
            .map(|c| c.compile(self.dim))
            .collect::<Result<Vec<_>>>()?;
        let mut spec = ProblemSpec::new(self.name.clone(), objective, constraints, self.set.clone())?;
        if let Some(sizes) = &self.blocks {
            spec = spec.with_blocks(sizes.clone())?;
        }
        if let Some(l) = self.lipschitz_grad_u {
            spec = spec.with_lipschitz(l)?;
        }
        Ok(spec)
    }
}
