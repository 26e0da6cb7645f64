//! Registered benchmark problems with their default surrogate recipes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::problem::ProblemSpec;
use crate::set::ConvexSet;
use crate::surrogate::{ConstraintRecipe, ObjectiveRecipe, ProductMode, SurrogateConfig, Tau};

/// A known solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub point: Vec<f64>,
    pub value: f64,
}

/// A benchmark instance: the problem, its default surrogate recipe and
/// the other recipes that are valid for it.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub id: &'static str,
    pub problem: ProblemSpec,
    pub surrogate: SurrogateConfig,
    /// Named alternatives, each satisfying the model contracts.
    pub variants: Vec<(String, SurrogateConfig)>,
    pub reference: Option<Reference>,
}

pub struct Entry {
    pub id: &'static str,
    pub summary: &'static str,
    build: fn(&Value) -> Result<Benchmark>,
}

impl Entry {
    pub fn build(&self, params: &Value) -> Result<Benchmark> {
        (self.build)(params)
    }
}

static REGISTRY: [Entry; 4] = [
    Entry {
        id: "reverse-ball",
        summary: "indefinite quadratic outside the unit disc, box [-h, h]^2 (2 blocks, 1 constraint)",
        build: reverse_ball,
    },
    Entry {
        id: "bilinear-floor",
        summary: "min x1^2 + x2^2 s.t. x1*x2 >= 1 on [0.1, 10]^2 (2 blocks, optimum (1, 1))",
        build: bilinear_floor,
    },
    Entry {
        id: "shared-budget",
        summary: "separable quadratics with shared nonconvex distance budgets (I blocks of dim 2, m in {1, 2})",
        build: shared_budget,
    },
    Entry {
        id: "product-floor",
        summary: "min (1 + x1^2)(1 + x2^2) s.t. x1 + x2 >= 1 on [0, 2]^2 (2 blocks, optimum (0.5, 0.5))",
        build: product_floor,
    },
];

pub fn registry() -> &'static [Entry] {
    &REGISTRY
}

/// Build the benchmark `id` with the given parameters (`null` or `{}` for
/// defaults).
pub fn build_benchmark(id: &str, params: &Value) -> Result<Benchmark> {
    let entry = REGISTRY.iter().find(|e| e.id == id).ok_or_else(|| {
        let ids: Vec<&str> = REGISTRY.iter().map(|e| e.id).collect();
        Error::Config(format!("unknown problem '{id}'; known: {}", ids.join(", ")))
    })?;
    entry.build(params)
}

fn parse_params<T: DeserializeOwned + Default>(id: &str, params: &Value) -> Result<T> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone())
        .map_err(|e| Error::Config(format!("invalid parameters for '{id}': {e}")))
}

fn square(x: usize) -> Expr {
    Expr::Power {
        index: x,
        exponent: 2.0,
        coef: 1.0,
    }
}

fn boxed(dim: usize, lo: f64, hi: f64) -> ConvexSet {
    ConvexSet::Box {
        lower: vec![lo; dim],
        upper: vec![hi; dim],
    }
}

fn recipe(objective: ObjectiveRecipe, constraints: Vec<ConstraintRecipe>) -> SurrogateConfig {
    SurrogateConfig {
        objective,
        constraints,
    }
}

fn proximal(tau: f64) -> ObjectiveRecipe {
    ObjectiveRecipe::Proximal {
        tau: Tau::Uniform(tau),
    }
}

fn block_convex(tau: f64, modulus: f64) -> ObjectiveRecipe {
    ObjectiveRecipe::BlockConvex {
        tau: Tau::Uniform(tau),
        metric: Default::default(),
        modulus,
        joint: false,
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ReverseBallParams {
    center: [f64; 2],
    half_width: f64,
}

impl Default for ReverseBallParams {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            half_width: 1.5,
        }
    }
}

const RB_MATRIX: [[f64; 2]; 2] = [[2.0, 0.5], [0.5, -0.5]];
const RB_LINEAR: [f64; 2] = [0.3, -0.2];

/// `½xᵀAx + bᵀx` with `A` indefinite, subject to `1 − ‖x − d‖² ≤ 0`.
fn reverse_ball(params: &Value) -> Result<Benchmark> {
    let p: ReverseBallParams = parse_params("reverse-ball", params)?;
    let h = p.half_width;
    let d = p.center.to_vec();
    if !(h > 0.0) || d.iter().any(|c| c.abs() + 1.0 >= h) {
        return Err(Error::Config(
            "reverse-ball needs half_width > |center_k| + 1 so the disc lies inside the box".into(),
        ));
    }
    let objective = Expr::Quadratic {
        matrix: RB_MATRIX.iter().map(|r| r.to_vec()).collect(),
        linear: Some(RB_LINEAR.to_vec()),
        constant: 0.0,
    };
    let ball = Expr::squared_distance(d.clone());
    let g = Expr::sum(vec![Expr::constant(1.0), Expr::scaled(-1.0, ball.clone())]);
    let (a, b, c) = (RB_MATRIX[0][0], RB_MATRIX[0][1], RB_MATRIX[1][1]);
    let spread = ((a - c) * (a - c) / 4.0 + b * b).sqrt();
    let l = (a + c).abs() / 2.0 + spread;
    let problem = ProblemSpec::new("reverse-ball", objective.compile(2)?, vec![g.compile(2)?], boxed(2, -h, h))?
        .with_blocks(vec![1, 1])?
        .with_lipschitz(l)?;
    let dc = ConstraintRecipe::Dc {
        plus: Expr::constant(1.0),
        minus: ball,
    };
    let shift = ConstraintRecipe::HessianShift { bound: 2.0 };
    let lip = ConstraintRecipe::Lipschitz { lipschitz: 2.0 };
    let sum_utility = ObjectiveRecipe::SumUtility {
        terms: vec![
            Expr::Quadratic {
                matrix: vec![vec![a, 0.0], vec![0.0, 0.0]],
                linear: Some(vec![RB_LINEAR[0], 0.0]),
                constant: 0.0,
            },
            Expr::Bilinear { i: 0, j: 1, coef: b },
            Expr::Quadratic {
                matrix: vec![vec![0.0, 0.0], vec![0.0, c]],
                linear: Some(vec![0.0, RB_LINEAR[1]]),
                constant: 0.0,
            },
        ],
        convex_terms: vec![vec![0], vec![]],
        tau: Tau::Uniform(2.0),
        metric: Default::default(),
        modulus: 0.0,
    };
    Ok(Benchmark {
        id: "reverse-ball",
        surrogate: recipe(proximal(2.0), vec![dc.clone()]),
        variants: vec![
            ("proximal+hessian-shift".into(), recipe(proximal(2.0), vec![shift])),
            ("proximal+lipschitz".into(), recipe(proximal(2.0), vec![lip])),
            ("sum-utility+dc".into(), recipe(sum_utility, vec![dc])),
        ],
        reference: reverse_ball_reference(&d, h),
        problem,
    })
}

/// `U` is concave in `x₂` and convex in `x₁`, so over the box the minimum
/// has `x₂ = ±h` and `x₁` at the clamped stationary point. When that point
/// lies outside the disc it solves the constrained problem too.
fn reverse_ball_reference(d: &[f64], h: f64) -> Option<Reference> {
    let u = |x: [f64; 2]| {
        0.5 * (RB_MATRIX[0][0] * x[0] * x[0] + 2.0 * RB_MATRIX[0][1] * x[0] * x[1] + RB_MATRIX[1][1] * x[1] * x[1])
            + RB_LINEAR[0] * x[0]
            + RB_LINEAR[1] * x[1]
    };
    let best = [-h, h]
        .into_iter()
        .map(|x2| {
            let x1 = (-(RB_MATRIX[0][1] * x2 + RB_LINEAR[0]) / RB_MATRIX[0][0]).clamp(-h, h);
            [x1, x2]
        })
        .min_by(|a, b| u(*a).total_cmp(&u(*b)))?;
    let outside = (best[0] - d[0]).powi(2) + (best[1] - d[1]).powi(2) >= 1.0;
    outside.then(|| Reference {
        point: best.to_vec(),
        value: u(best),
    })
}

/// `min x₁² + x₂²` subject to `1 − x₁x₂ ≤ 0` on `[0.1, 10]²`.
fn bilinear_floor(params: &Value) -> Result<Benchmark> {
    let _: Empty = parse_params("bilinear-floor", params)?;
    let objective = Expr::sum(vec![square(0), square(1)]);
    let g = Expr::sum(vec![Expr::constant(1.0), Expr::Bilinear { i: 0, j: 1, coef: -1.0 }]);
    let problem = ProblemSpec::new("bilinear-floor", objective.compile(2)?, vec![g.compile(2)?], boxed(2, 0.1, 10.0))?
        .with_blocks(vec![1, 1])?
        .with_lipschitz(2.0)?;
    let bilinear = ConstraintRecipe::Bilinear {
        i: 0,
        j: 1,
        coef: -1.0,
        remainder: Some(Expr::constant(1.0)),
    };
    let sum_utility = ObjectiveRecipe::SumUtility {
        terms: vec![square(0), square(1)],
        convex_terms: vec![vec![0], vec![1]],
        tau: Tau::Uniform(0.0),
        metric: Default::default(),
        modulus: 2.0,
    };
    Ok(Benchmark {
        id: "bilinear-floor",
        surrogate: recipe(block_convex(0.0, 2.0), vec![bilinear.clone()]),
        variants: vec![
            ("proximal+bilinear".into(), recipe(proximal(2.0), vec![bilinear.clone()])),
            ("sum-utility+bilinear".into(), recipe(sum_utility, vec![bilinear])),
            (
                "block-convex+lipschitz".into(),
                recipe(block_convex(0.0, 2.0), vec![ConstraintRecipe::Lipschitz { lipschitz: 1.0 }]),
            ),
            (
                "block-convex+hessian-shift".into(),
                recipe(block_convex(0.0, 2.0), vec![ConstraintRecipe::HessianShift { bound: 1.0 }]),
            ),
        ],
        reference: Some(Reference {
            point: vec![1.0, 1.0],
            value: 2.0,
        }),
        problem,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SharedBudgetParams {
    blocks: usize,
    constraints: usize,
    seed: u64,
}

impl Default for SharedBudgetParams {
    fn default() -> Self {
        Self {
            blocks: 4,
            constraints: 2,
            seed: 7,
        }
    }
}

const BUDGET_LEVELS: [f64; 2] = [0.25, 0.2];

/// `Σ_i x_iᵀQ_i x_i + b_iᵀx_i` subject to `Σ_i (c_j − ‖x_i − d_ij‖²) ≤ 0`
/// with per-block boxes `[−1, 1]²`. `b_i = −2Q_i a_i` pulls block `i` toward
/// a target `a_i` near the first exclusion centre, so the first budget
/// binds.
fn shared_budget(params: &Value) -> Result<Benchmark> {
    let p: SharedBudgetParams = parse_params("shared-budget", params)?;
    if p.blocks == 0 || !(1..=2).contains(&p.constraints) {
        return Err(Error::Config("shared-budget needs blocks ≥ 1 and constraints in {1, 2}".into()));
    }
    let n = 2 * p.blocks;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..1.9)).collect();
    let centers: Vec<Vec<f64>> = (0..p.constraints)
        .map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let matrix: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| if r == c { 2.0 * q[r] } else { 0.0 }).collect())
        .collect();
    let targets: Vec<f64> = centers[0].iter().map(|c| c + rng.random_range(-0.25..0.25)).collect();
    let linear: Vec<f64> = (0..n).map(|k| -2.0 * q[k] * targets[k]).collect();
    let objective = Expr::Quadratic {
        matrix,
        linear: Some(linear),
        constant: 0.0,
    };
    let blocks_f = p.blocks as f64;
    let mut constraints = Vec::new();
    let mut dc = Vec::new();
    for (j, center) in centers.iter().enumerate() {
        let level = Expr::constant(blocks_f * BUDGET_LEVELS[j]);
        let spread = Expr::squared_distance(center.clone());
        constraints.push(Expr::sum(vec![level.clone(), Expr::scaled(-1.0, spread.clone())]).compile(n)?);
        dc.push(ConstraintRecipe::Dc {
            plus: level,
            minus: spread,
        });
    }
    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let q_max = q.iter().copied().fold(0.0, f64::max);
    let problem = ProblemSpec::new("shared-budget", objective.compile(n)?, constraints, boxed(n, -1.0, 1.0))?
        .with_blocks(vec![2; p.blocks])?
        .with_lipschitz(2.0 * q_max)?;
    let m = p.constraints;
    Ok(Benchmark {
        id: "shared-budget",
        surrogate: recipe(block_convex(0.0, 2.0 * q_min), dc.clone()),
        variants: vec![
            ("proximal+dc".into(), recipe(proximal(2.0 * q_max), dc)),
            (
                "block-convex+lipschitz".into(),
                recipe(
                    block_convex(0.0, 2.0 * q_min),
                    vec![ConstraintRecipe::Lipschitz { lipschitz: 2.0 }; m],
                ),
            ),
            (
                "block-convex+hessian-shift".into(),
                recipe(
                    block_convex(0.0, 2.0 * q_min),
                    vec![ConstraintRecipe::HessianShift { bound: 2.0 }; m],
                ),
            ),
        ],
        reference: None,
        problem,
    })
}

/// `min (1 + x₁²)(1 + x₂²)` subject to `1 − x₁ − x₂ ≤ 0` on `[0, 2]²`.
fn product_floor(params: &Value) -> Result<Benchmark> {
    let _: Empty = parse_params("product-floor", params)?;
    let left = Expr::sum(vec![Expr::constant(1.0), square(0)]);
    let right = Expr::sum(vec![Expr::constant(1.0), square(1)]);
    let objective = Expr::product(left.clone(), right.clone());
    let g = Expr::Linear {
        coef: vec![-1.0, -1.0],
        constant: 1.0,
    };
    // Hessian entries are bounded by 2(1 + 4) on the diagonal and 4·2·2
    // off it; the spectral norm is at most their sum.
    let problem = ProblemSpec::new("product-floor", objective.compile(2)?, vec![g.compile(2)?], boxed(2, 0.0, 2.0))?
        .with_blocks(vec![1, 1])?
        .with_lipschitz(26.0)?;
    let product = ObjectiveRecipe::Product {
        left,
        right,
        mode: ProductMode::ConvexPositive,
        tau: Tau::Uniform(1.0),
        metric: Default::default(),
        modulus: 0.0,
    };
    Ok(Benchmark {
        id: "product-floor",
        surrogate: recipe(product, vec![ConstraintRecipe::IdentityConvex]),
        variants: vec![("proximal+identity-convex".into(), recipe(proximal(2.0), vec![ConstraintRecipe::IdentityConvex]))],
        reference: Some(Reference {
            point: vec![0.5, 0.5],
            value: 1.5625,
        }),
        problem,
    })
}
