//! Builtin smooth primitives for problems described in JSON.
//!
//! An [`Expr`] is plain data; [`Expr::compile`] validates it against a
//! dimension and yields an [`Oracle`] with analytic gradients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{Oracle, SmoothFn};
use crate::linalg::dot;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Expr {
    /// `value`
    Constant { value: f64 },
    /// `coef^T x + constant`
    Linear {
        coef: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
    /// `½ x^T A x + b^T x + c`
    Quadratic {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Option<Vec<f64>>,
        #[serde(default)]
        constant: f64,
    },
    /// `weight · ‖x_S − center‖²`, `S` = `coords` or all coordinates.
    SquaredDistance {
        center: Vec<f64>,
        #[serde(default = "one")]
        weight: f64,
        #[serde(default)]
        coords: Option<Vec<usize>>,
    },
    /// `coef · x_i · x_j`
    Bilinear { i: usize, j: usize, coef: f64 },
    /// `coef · x_index^exponent`
    Power {
        index: usize,
        exponent: f64,
        #[serde(default = "one")]
        coef: f64,
    },
    /// `weight · ln(a^T x + b)`
    Log {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// `weight · exp(a^T x + b)`
    Exp {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// `weight · sin(a^T x + b)`
    Sin {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    Sum { terms: Vec<Expr> },
    Scaled { factor: f64, term: Box<Expr> },
    Product { left: Box<Expr>, right: Box<Expr> },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Constant { value }
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        Expr::Sum { terms }
    }

    pub fn scaled(factor: f64, term: Expr) -> Self {
        Expr::Scaled {
            factor,
            term: Box::new(term),
        }
    }

    pub fn squared_distance(center: Vec<f64>) -> Self {
        Expr::SquaredDistance {
            center,
            weight: 1.0,
            coords: None,
        }
    }

    pub fn product(left: Expr, right: Expr) -> Self {
        Expr::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Validate against `dim` and produce an oracle.
    pub fn compile(&self, dim: usize) -> Result<Oracle> {
        self.validate(dim)?;
        Ok(Arc::new(ExprFn {
            dim,
            expr: self.clone(),
        }))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let len_check = |what: &str, len: usize| {
            if len == dim {
                Ok(())
            } else {
                Err(Error::dimension(what, dim, len))
            }
        };
        let index_check = |what: &str, k: usize| {
            if k < dim {
                Ok(())
            } else {
                Err(Error::Input(format!(
                    "{what}: index {k} out of range for dimension {dim}"
                )))
            }
        };
        match self {
            Expr::Constant { .. } => Ok(()),
            Expr::Linear { coef, .. } => len_check("linear coef", coef.len()),
            Expr::Quadratic { matrix, linear, .. } => {
                len_check("quadratic matrix rows", matrix.len())?;
                for row in matrix {
                    len_check("quadratic matrix row", row.len())?;
                }
                if let Some(b) = linear {
                    len_check("quadratic linear term", b.len())?;
                }
                Ok(())
            }
            Expr::SquaredDistance { center, coords, .. } => match coords {
                Some(c) => {
                    for &k in c {
                        index_check("squared-distance coord", k)?;
                    }
                    if c.len() != center.len() {
                        return Err(Error::dimension(
                            "squared-distance center",
                            c.len(),
                            center.len(),
                        ));
                    }
                    Ok(())
                }
                None => len_check("squared-distance center", center.len()),
            },
            Expr::Bilinear { i, j, .. } => {
                index_check("bilinear", *i)?;
                index_check("bilinear", *j)
            }
            Expr::Power { index, .. } => index_check("power", *index),
            Expr::Log { a, .. } | Expr::Exp { a, .. } | Expr::Sin { a, .. } => {
                len_check("scalar-map coefficients", a.len())
            }
            Expr::Sum { terms } => terms.iter().try_for_each(|t| t.validate(dim)),
            Expr::Scaled { term, .. } => term.validate(dim),
            Expr::Product { left, right } => {
                left.validate(dim)?;
                right.validate(dim)
            }
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Constant { value } => *value,
            Expr::Linear { coef, constant } => dot(coef, x) + constant,
            Expr::Quadratic {
                matrix,
                linear,
                constant,
            } => {
                let quad: f64 = matrix
                    .iter()
                    .zip(x)
                    .map(|(row, xi)| xi * dot(row, x))
                    .sum();
                0.5 * quad + linear.as_ref().map_or(0.0, |b| dot(b, x)) + constant
            }
            Expr::SquaredDistance {
                center,
                weight,
                coords,
            } => {
                let s: f64 = match coords {
                    Some(c) => c
                        .iter()
                        .zip(center)
                        .map(|(&k, ck)| (x[k] - ck).powi(2))
                        .sum(),
                    None => x.iter().zip(center).map(|(xk, ck)| (xk - ck).powi(2)).sum(),
                };
                weight * s
            }
            Expr::Bilinear { i, j, coef } => coef * x[*i] * x[*j],
            Expr::Power {
                index,
                exponent,
                coef,
            } => coef * x[*index].powf(*exponent),
            Expr::Log { a, b, weight } => weight * (dot(a, x) + b).ln(),
            Expr::Exp { a, b, weight } => weight * (dot(a, x) + b).exp(),
            Expr::Sin { a, b, weight } => weight * (dot(a, x) + b).sin(),
            Expr::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
            Expr::Scaled { factor, term } => factor * term.eval(x),
            Expr::Product { left, right } => left.eval(x) * right.eval(x),
        }
    }

    fn grad_into(&self, x: &[f64], w: f64, out: &mut [f64]) {
        match self {
            Expr::Constant { .. } => {}
            Expr::Linear { coef, .. } => {
                for (o, c) in out.iter_mut().zip(coef) {
                    *o += w * c;
                }
            }
            Expr::Quadratic { matrix, linear, .. } => {
                // ∇ ½xᵀAx = ½(A + Aᵀ)x
                for (k, o) in out.iter_mut().enumerate() {
                    let row: f64 = dot(&matrix[k], x);
                    let col: f64 = matrix.iter().zip(x).map(|(r, xi)| r[k] * xi).sum();
                    *o += w * 0.5 * (row + col);
                }
                if let Some(b) = linear {
                    for (o, bk) in out.iter_mut().zip(b) {
                        *o += w * bk;
                    }
                }
            }
            Expr::SquaredDistance {
                center,
                weight,
                coords,
            } => match coords {
                Some(c) => {
                    for (&k, ck) in c.iter().zip(center) {
                        out[k] += w * 2.0 * weight * (x[k] - ck);
                    }
                }
                None => {
                    for ((o, xk), ck) in out.iter_mut().zip(x).zip(center) {
                        *o += w * 2.0 * weight * (xk - ck);
                    }
                }
            },
            Expr::Bilinear { i, j, coef } => {
                out[*i] += w * coef * x[*j];
                out[*j] += w * coef * x[*i];
            }
            Expr::Power {
                index,
                exponent,
                coef,
            } => {
                if *exponent != 0.0 {
                    out[*index] += w * coef * exponent * x[*index].powf(exponent - 1.0);
                }
            }
            Expr::Log { a, b, weight } => {
                let s = w * weight / (dot(a, x) + b);
                scaled_add(out, a, s);
            }
            Expr::Exp { a, b, weight } => {
                let s = w * weight * (dot(a, x) + b).exp();
                scaled_add(out, a, s);
            }
            Expr::Sin { a, b, weight } => {
                let s = w * weight * (dot(a, x) + b).cos();
                scaled_add(out, a, s);
            }
            Expr::Sum { terms } => {
                for t in terms {
                    t.grad_into(x, w, out);
                }
            }
            Expr::Scaled { factor, term } => term.grad_into(x, w * factor, out),
            Expr::Product { left, right } => {
                let l = left.eval(x);
                let r = right.eval(x);
                left.grad_into(x, w * r, out);
                right.grad_into(x, w * l, out);
            }
        }
    }

    fn supports(&self, dim: usize) -> Vec<Vec<usize>> {
        let nonzero = |a: &[f64]| -> Vec<usize> { (0..a.len()).filter(|&k| a[k] != 0.0).collect() };
        match self {
            Expr::Constant { .. } => vec![],
            Expr::Linear { coef, .. } => nonzero(coef).into_iter().map(|k| vec![k]).collect(),
            Expr::Quadratic { matrix, linear, .. } => {
                let mut s = Vec::new();
                for (r, row) in matrix.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        if *v != 0.0 {
                            s.push(if r == c { vec![r] } else { vec![r.min(c), r.max(c)] });
                        }
                    }
                }
                if let Some(b) = linear {
                    s.extend(nonzero(b).into_iter().map(|k| vec![k]));
                }
                s
            }
            Expr::SquaredDistance { coords, .. } => match coords {
                Some(c) => c.iter().map(|&k| vec![k]).collect(),
                None => (0..dim).map(|k| vec![k]).collect(),
            },
            Expr::Bilinear { i, j, .. } => {
                if i == j {
                    vec![vec![*i]]
                } else {
                    vec![vec![*i.min(j), *i.max(j)]]
                }
            }
            Expr::Power { index, .. } => vec![vec![*index]],
            Expr::Log { a, .. } | Expr::Exp { a, .. } | Expr::Sin { a, .. } => {
                let s = nonzero(a);
                if s.is_empty() {
                    vec![]
                } else {
                    vec![s]
                }
            }
            Expr::Sum { terms } => terms.iter().flat_map(|t| t.supports(dim)).collect(),
            Expr::Scaled { factor, term } => {
                if *factor == 0.0 {
                    vec![]
                } else {
                    term.supports(dim)
                }
            }
            Expr::Product { left, right } => {
                let mut joint: Vec<usize> = left
                    .supports(dim)
                    .into_iter()
                    .chain(right.supports(dim))
                    .flatten()
                    .collect();
                joint.sort_unstable();
                joint.dedup();
                if joint.is_empty() {
                    vec![]
                } else {
                    vec![joint]
                }
            }
        }
    }
}

fn scaled_add(out: &mut [f64], a: &[f64], s: f64) {
    for (o, ak) in out.iter_mut().zip(a) {
        *o += s * ak;
    }
}

/// A validated expression bound to a dimension.
#[derive(Debug, Clone)]
pub struct ExprFn {
    dim: usize,
    expr: Expr,
}

impl ExprFn {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl SmoothFn for ExprFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        self.expr.grad_into(x, weight, out);
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        Some(self.expr.supports(self.dim))
    }
}
