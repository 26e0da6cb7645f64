use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SurrogateObjective;
use crate::error::{Error, Result};
use crate::func::{Affine, BlockEmbedded, BlockQuadratic, Oracle, Restricted, SumFn};

/// Anchor-dependent proximal metric `H_i(y)` supplied by the caller.
pub trait MetricOracle: Send + Sync + fmt::Debug {
    fn matrix(&self, block: usize, anchor: &[f64]) -> Vec<Vec<f64>>;
    /// Uniform lower bound on the smallest eigenvalue of every matrix.
    fn floor(&self) -> f64;
}

/// Proximal metric per block.
#[derive(Debug, Clone)]
pub enum Metric {
    Identity,
    /// One symmetric matrix per block with a declared eigenvalue floor.
    Fixed {
        matrices: Vec<Vec<Vec<f64>>>,
        floor: f64,
    },
    Custom(Arc<dyn MetricOracle>),
}

impl Metric {
    pub fn floor(&self) -> f64 {
        match self {
            Metric::Identity => 1.0,
            Metric::Fixed { floor, .. } => *floor,
            Metric::Custom(m) => m.floor(),
        }
    }

    /// Check shapes, symmetry, and that the declared floor is positive and
    /// below every eigenvalue.
    pub fn validate(&self, sizes: &[usize]) -> Result<()> {
        match self {
            Metric::Identity => Ok(()),
            Metric::Custom(m) => {
                if m.floor() > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter("metric floor must be positive".into()))
                }
            }
            Metric::Fixed { matrices, floor } => {
                if !(*floor > 0.0) {
                    return Err(Error::Parameter("metric floor must be positive".into()));
                }
                if matrices.len() != sizes.len() {
                    return Err(Error::Parameter(format!(
                        "{} metric matrices for {} blocks",
                        matrices.len(),
                        sizes.len()
                    )));
                }
                for (b, (m, &n)) in matrices.iter().zip(sizes).enumerate() {
                    if m.len() != n || m.iter().any(|row| row.len() != n) {
                        return Err(Error::dimension(&format!("metric for block {b}"), n, m.len()));
                    }
                    let mat = DMatrix::from_fn(n, n, |r, c| m[r][c]);
                    if (&mat - mat.transpose()).amax() > 1e-12 {
                        return Err(Error::Parameter(format!("metric for block {b} is not symmetric")));
                    }
                    let min_eig = mat.symmetric_eigenvalues().min();
                    if min_eig < *floor {
                        return Err(Error::Parameter(format!(
                            "metric for block {b} has eigenvalue {min_eig} below declared floor {floor}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn matrix(&self, block: usize, size: usize, anchor: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Metric::Identity => (0..size)
                .map(|r| (0..size).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect(),
            Metric::Fixed { matrices, .. } => matrices[block].clone(),
            Metric::Custom(m) => m.matrix(block, anchor),
        }
    }
}

/// Approximation used for one factor of a product objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorModel {
    /// Keep the factor itself (it is convex) instead of linearizing it.
    #[serde(default)]
    pub convex: bool,
    #[serde(default)]
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProductMode {
    /// Both factors convex and positive on the set.
    ConvexPositive,
    /// Both factors positive, bounded below by `lower_bound` on the set.
    Positive {
        left: FactorModel,
        right: FactorModel,
        lower_bound: f64,
    },
    /// Factors of arbitrary sign.
    General {
        left: FactorModel,
        right: FactorModel,
    },
}

fn check_tau(tau: &[f64], blocks: &[Range<usize>], modulus: f64) -> Result<()> {
    if tau.len() != blocks.len() {
        return Err(Error::Parameter(format!(
            "{} proximal weights for {} blocks",
            tau.len(),
            blocks.len()
        )));
    }
    if !(modulus >= 0.0) {
        return Err(Error::Parameter("declared strong-convexity modulus must be >= 0".into()));
    }
    for (i, &t) in tau.iter().enumerate() {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Parameter(format!("tau[{i}] = {t} must be >= 0")));
        }
        if t == 0.0 && modulus == 0.0 {
            return Err(Error::Parameter(format!(
                "tau[{i}] = 0 requires a declared block strong-convexity modulus"
            )));
        }
    }
    Ok(())
}

pub(crate) fn modulus_of(tau: &[f64], metric: &Metric, declared: f64) -> f64 {
    let floor = metric.floor();
    tau.iter().map(|t| t * floor).fold(f64::INFINITY, f64::min) + declared
}

fn prox_term(y: &[f64], blocks: &[Range<usize>], tau: &[f64], metric: &Metric) -> Oracle {
    let parts = blocks
        .iter()
        .enumerate()
        .filter(|(i, _)| tau[*i] != 0.0)
        .map(|(i, r)| {
            let h = metric.matrix(i, r.len(), y);
            let scaled = h
                .into_iter()
                .map(|row| row.into_iter().map(|v| tau[i] * v).collect())
                .collect();
            (r.clone(), scaled)
        })
        .collect();
    Arc::new(BlockQuadratic {
        center: y.to_vec(),
        parts,
    })
}

fn objective(y: &[f64], func: Oracle, c: f64, label: String) -> SurrogateObjective {
    SurrogateObjective {
        anchor: y.to_vec(),
        func,
        strong_convexity: c,
        components: None,
        label,
    }
}

/// `Σ_i ∇_{x_i}U(y)ᵀ(x_i − y_i) + (τ_i/2)‖x_i − y_i‖²`, modulus `min τ_i`.
pub fn proximal_linear_objective(
    u: &Oracle,
    tau: &[f64],
    blocks: &[Range<usize>],
    y: &[f64],
) -> Result<SurrogateObjective> {
    if let Some(t) = tau.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Parameter(format!("proximal weight must be positive, got {t}")));
    }
    check_tau(tau, blocks, 0.0)?;
    let mut lin = Affine::tangent(u.as_ref(), y);
    lin.constant -= u.value(y);
    let func = SumFn::new(y.len())
        .with(1.0, Arc::new(lin))
        .with(1.0, prox_term(y, blocks, tau, &Metric::Identity))
        .into_oracle();
    let c = modulus_of(tau, &Metric::Identity, 0.0);
    Ok(objective(y, func, c, "proximal-linear".into()))
}

/// Keep the terms that are convex in block `i` (with the other blocks
/// frozen at `y`), linearize the rest, add a proximal term per block.
#[allow(clippy::too_many_arguments)]
pub fn sum_utility_objective(
    terms: &[Oracle],
    convex_terms: &[Vec<usize>],
    blocks: &[Range<usize>],
    tau: &[f64],
    metric: &Metric,
    modulus: f64,
    y: &[f64],
) -> Result<SurrogateObjective> {
    check_tau(tau, blocks, modulus)?;
    metric.validate(&blocks.iter().map(|r| r.len()).collect::<Vec<_>>())?;
    if convex_terms.len() != blocks.len() {
        return Err(Error::Parameter(format!(
            "{} convex index sets for {} blocks",
            convex_terms.len(),
            blocks.len()
        )));
    }
    let n = y.len();
    let grads: Vec<Vec<f64>> = terms.iter().map(|f| f.gradient(y)).collect();
    let mut func = SumFn::new(n);
    let mut lin = vec![0.0; n];
    for (i, range) in blocks.iter().enumerate() {
        let kept = &convex_terms[i];
        if let Some(&bad) = kept.iter().find(|&&j| j >= terms.len()) {
            return Err(Error::Parameter(format!(
                "block {i}: term index {bad} out of range ({} terms)",
                terms.len()
            )));
        }
        for &j in kept {
            func.push(
                1.0,
                Arc::new(BlockEmbedded {
                    restricted: Restricted {
                        inner: terms[j].clone(),
                        anchor: y.to_vec(),
                        range: range.clone(),
                        offset: 0.0,
                    },
                }),
            );
        }
        for (k, g) in grads.iter().enumerate() {
            if !kept.contains(&k) {
                for c in range.clone() {
                    lin[c] += g[c];
                }
            }
        }
    }
    if lin.iter().any(|v| *v != 0.0) {
        let constant = -crate::linalg::dot(&lin, y);
        func.push(1.0, Arc::new(Affine { constant, coef: lin }));
    }
    func.push(1.0, prox_term(y, blocks, tau, metric));
    let c = modulus_of(tau, metric, modulus);
    Ok(objective(y, func.into_oracle(), c, "sum-utility".into()))
}

/// `Σ_i U(x_i, y_{−i}) + (τ_i/2)(x_i − y_i)ᵀH_i(x_i − y_i)` for `U` convex
/// in each block; with `joint`, `U(x) + Σ_i (τ_i/2)…` for jointly convex
/// `U`. `τ_i = 0` is allowed when `modulus > 0` is declared.
pub fn block_convex_objective(
    u: &Oracle,
    blocks: &[Range<usize>],
    tau: &[f64],
    metric: &Metric,
    modulus: f64,
    joint: bool,
    y: &[f64],
) -> Result<SurrogateObjective> {
    if joint {
        check_tau(tau, blocks, modulus)?;
        metric.validate(&blocks.iter().map(|r| r.len()).collect::<Vec<_>>())?;
        let func = SumFn::new(y.len())
            .with(1.0, u.clone())
            .with(1.0, prox_term(y, blocks, tau, metric))
            .into_oracle();
        let c = modulus_of(tau, metric, modulus);
        return Ok(objective(y, func, c, "block-convex(joint)".into()));
    }
    let all = vec![vec![0]; blocks.len()];
    let mut s = sum_utility_objective(std::slice::from_ref(u), &all, blocks, tau, metric, modulus, y)?;
    s.label = "block-convex".into();
    Ok(s)
}

fn factor_model(f: &Oracle, model: FactorModel, y: &[f64]) -> Oracle {
    let base: Oracle = if model.convex {
        f.clone()
    } else {
        Arc::new(Affine::tangent(f.as_ref(), y))
    };
    if model.tau == 0.0 {
        base
    } else {
        SumFn::new(y.len())
            .with(1.0, base)
            .with(1.0, Arc::new(BlockQuadratic::isotropic(y.to_vec(), model.tau)))
            .into_oracle()
    }
}

/// Model of `U = f₁ · f₂`.
///
/// * convex-positive: `f₁(x)f₂(y) + f₁(y)f₂(x) + (τ/2)(x−y)ᵀH(x−y)`;
/// * positive: `f̃₁(x;y)f₂(y) + f₁(y)f̃₂(x;y)`, modulus
///   `lower_bound·(τ₁ + τ₂)`;
/// * general: each product `f₂(y)·f̃₁` and `f₁(y)·f̃₂` is kept when its
///   factor is convex and the coefficient nonnegative, else linearized;
///   modulus `τ₁ + τ₂`.
#[allow(clippy::too_many_arguments)]
pub fn product_objective(
    f1: &Oracle,
    f2: &Oracle,
    mode: &ProductMode,
    blocks: &[Range<usize>],
    tau: &[f64],
    metric: &Metric,
    modulus: f64,
    y: &[f64],
) -> Result<SurrogateObjective> {
    let (a1, a2) = (f1.value(y), f2.value(y));
    let n = y.len();
    match mode {
        ProductMode::ConvexPositive => {
            check_tau(tau, blocks, modulus)?;
            metric.validate(&blocks.iter().map(|r| r.len()).collect::<Vec<_>>())?;
            if !(a1 > 0.0 && a2 > 0.0) {
                return Err(Error::Config(format!(
                    "convex-positive product needs positive factors at the anchor, got {a1} and {a2}"
                )));
            }
            let func = SumFn::new(n)
                .with(a2, f1.clone())
                .with(a1, f2.clone())
                .with(1.0, prox_term(y, blocks, tau, metric))
                .into_oracle();
            let c = modulus_of(tau, metric, modulus);
            Ok(objective(y, func, c, "product(convex-positive)".into()))
        }
        ProductMode::Positive {
            left,
            right,
            lower_bound,
        } => {
            if !(*lower_bound > 0.0) {
                return Err(Error::Config(
                    "positive product mode needs a declared lower_bound > 0".into(),
                ));
            }
            if a1 < *lower_bound || a2 < *lower_bound {
                return Err(Error::Config(format!(
                    "factor values {a1}, {a2} at the anchor fall below lower_bound {lower_bound}"
                )));
            }
            check_factor_taus(left, right, modulus)?;
            let func = SumFn::new(n)
                .with(a2, factor_model(f1, *left, y))
                .with(a1, factor_model(f2, *right, y))
                .into_oracle();
            let c = lower_bound * (left.tau + right.tau) + modulus;
            Ok(objective(y, func, c, "product(positive)".into()))
        }
        ProductMode::General { left, right } => {
            check_factor_taus(left, right, modulus)?;
            let keep = |m: &FactorModel, coef: f64| FactorModel {
                convex: m.convex && coef >= 0.0,
                tau: 0.0,
            };
            let func = SumFn::new(n)
                .with(a2, factor_model(f1, keep(left, a2), y))
                .with(a1, factor_model(f2, keep(right, a1), y))
                .with(
                    1.0,
                    Arc::new(BlockQuadratic::isotropic(y.to_vec(), left.tau + right.tau)),
                )
                .into_oracle();
            let c = left.tau + right.tau + modulus;
            Ok(objective(y, func, c, "product(general)".into()))
        }
    }
}

fn check_factor_taus(left: &FactorModel, right: &FactorModel, modulus: f64) -> Result<()> {
    if !(left.tau >= 0.0 && right.tau >= 0.0) {
        return Err(Error::Parameter("factor tau must be >= 0".into()));
    }
    if left.tau + right.tau == 0.0 && modulus <= 0.0 {
        return Err(Error::Parameter(
            "product model needs a positive factor tau or a declared modulus".into(),
        ));
    }
    Ok(())
}
