//! Smooth function oracles and small combinators used to assemble
//! surrogates.
//!
//! Every oracle is pure and `Send + Sync`: evaluation never mutates hidden
//! state, so the same oracle can be evaluated from several workers.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::linalg::dot;

/// A differentiable function `R^dim -> R`.
pub trait SmoothFn: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `out += weight * grad f(x)`.
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    /// Coordinate supports of the additive terms of `f`, when known.
    ///
    /// `Some(vec![])` means the function is constant. `None` means the
    /// structure is opaque, which is treated as fully coupled.
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        None
    }
}

pub type Oracle = Arc<dyn SmoothFn>;

/// True when `f` splits as a sum of functions of the individual blocks plus
/// a constant.
pub fn is_separable(f: &dyn SmoothFn, blocks: &[Range<usize>]) -> bool {
    let Some(supports) = f.term_supports() else {
        return blocks.len() == 1;
    };
    supports.iter().all(|support| {
        let Some(&first) = support.first() else {
            return true;
        };
        let Some(block) = blocks.iter().find(|r| r.contains(&first)) else {
            return false;
        };
        support.iter().all(|k| block.contains(k))
    })
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &dyn SmoothFn, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f.value(&probe);
            probe[k] = orig - h;
            let down = f.value(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Oracle backed by a pair of closures. Handy for library users and tests.
#[derive(Clone)]
pub struct FnOracle {
    dim: usize,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
    supports: Option<Vec<Vec<usize>>>,
}

impl FnOracle {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            grad: Arc::new(grad),
            supports: None,
        }
    }

    /// Declare the additive structure so the oracle can take part in
    /// block decompositions.
    pub fn with_supports(mut self, supports: Vec<Vec<usize>>) -> Self {
        self.supports = Some(supports);
        self
    }

    pub fn into_oracle(self) -> Oracle {
        Arc::new(self)
    }
}

impl fmt::Debug for FnOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOracle").field("dim", &self.dim).finish()
    }
}

impl SmoothFn for FnOracle {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        let g = (self.grad)(x);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += weight * gi;
        }
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        self.supports.clone()
    }
}

/// `constant + coef^T x`
#[derive(Debug, Clone)]
pub struct Affine {
    pub constant: f64,
    pub coef: Vec<f64>,
}

impl Affine {
    /// First-order expansion of `f` around `y`.
    pub fn tangent(f: &dyn SmoothFn, y: &[f64]) -> Self {
        let coef = f.gradient(y);
        let constant = f.value(y) - dot(&coef, y);
        Self { constant, coef }
    }
}

impl SmoothFn for Affine {
    fn dim(&self) -> usize {
        self.coef.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.constant + dot(&self.coef, x)
    }
    fn add_gradient(&self, _x: &[f64], weight: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.coef) {
            *o += weight * c;
        }
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        Some(
            (0..self.coef.len())
                .filter(|&k| self.coef[k] != 0.0)
                .map(|k| vec![k])
                .collect(),
        )
    }
}

/// `½ Σ_b (x_b − c_b)ᵀ M_b (x_b − c_b)` over disjoint coordinate ranges,
/// each with its own symmetric matrix. Used for proximal terms.
#[derive(Debug, Clone)]
pub struct BlockQuadratic {
    pub center: Vec<f64>,
    pub parts: Vec<(Range<usize>, Vec<Vec<f64>>)>,
}

impl BlockQuadratic {
    /// `(w/2)‖x − c‖²` with a single weight on all coordinates.
    pub fn isotropic(center: Vec<f64>, weight: f64) -> Self {
        let parts = (0..center.len())
            .map(|k| (k..k + 1, vec![vec![weight]]))
            .collect();
        Self { center, parts }
    }
}

impl SmoothFn for BlockQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (range, m) in &self.parts {
            let off = range.start;
            for (a, row) in m.iter().enumerate() {
                let da = x[off + a] - self.center[off + a];
                for (b, mab) in row.iter().enumerate() {
                    total += da * mab * (x[off + b] - self.center[off + b]);
                }
            }
        }
        0.5 * total
    }
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        for (range, m) in &self.parts {
            let off = range.start;
            for (a, row) in m.iter().enumerate() {
                let s: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(b, mab)| mab * (x[off + b] - self.center[off + b]))
                    .sum();
                out[off + a] += weight * s;
            }
        }
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        Some(self.parts.iter().map(|(r, _)| r.clone().collect()).collect())
    }
}

/// Weighted sum `Σ w_k f_k` plus a constant.
#[derive(Debug, Clone)]
pub struct SumFn {
    dim: usize,
    pub terms: Vec<(f64, Oracle)>,
    pub constant: f64,
}

impl SumFn {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn with(mut self, weight: f64, f: Oracle) -> Self {
        debug_assert_eq!(f.dim(), self.dim);
        self.terms.push((weight, f));
        self
    }

    pub fn push(&mut self, weight: f64, f: Oracle) {
        debug_assert_eq!(f.dim(), self.dim);
        self.terms.push((weight, f));
    }

    pub fn into_oracle(self) -> Oracle {
        Arc::new(self)
    }
}

impl SmoothFn for SumFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, (w, f)| acc + w * f.value(x))
    }
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        for (w, f) in &self.terms {
            f.add_gradient(x, weight * w, out);
        }
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        let mut all = Vec::new();
        for (w, f) in &self.terms {
            if *w != 0.0 {
                all.extend(f.term_supports()?);
            }
        }
        Some(all)
    }
}

/// The product `f(x) · g(x)`.
#[derive(Debug, Clone)]
pub struct ProductFn {
    pub left: Oracle,
    pub right: Oracle,
}

impl SmoothFn for ProductFn {
    fn dim(&self) -> usize {
        self.left.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.left.value(x) * self.right.value(x)
    }
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        let l = self.left.value(x);
        let r = self.right.value(x);
        self.left.add_gradient(x, weight * r, out);
        self.right.add_gradient(x, weight * l, out);
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        let mut joint: Vec<usize> = self
            .left
            .term_supports()?
            .into_iter()
            .chain(self.right.term_supports()?)
            .flatten()
            .collect();
        joint.sort_unstable();
        joint.dedup();
        Some(if joint.is_empty() { vec![] } else { vec![joint] })
    }
}

/// `f` viewed as a function of one block of coordinates, the others frozen
/// at `anchor`, minus a constant `offset`.
///
/// For a separable `f` and offset `f(anchor)·(I−1)/I`, the block views sum
/// to `f` exactly.
#[derive(Debug, Clone)]
pub struct Restricted {
    pub inner: Oracle,
    pub anchor: Vec<f64>,
    pub range: Range<usize>,
    pub offset: f64,
}

impl Restricted {
    fn embed(&self, z: &[f64]) -> Vec<f64> {
        let mut full = self.anchor.clone();
        full[self.range.clone()].copy_from_slice(z);
        full
    }
}

impl SmoothFn for Restricted {
    fn dim(&self) -> usize {
        self.range.len()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.inner.value(&self.embed(z)) - self.offset
    }
    fn add_gradient(&self, z: &[f64], weight: f64, out: &mut [f64]) {
        let mut g = vec![0.0; self.anchor.len()];
        self.inner.add_gradient(&self.embed(z), 1.0, &mut g);
        for (o, gi) in out.iter_mut().zip(&g[self.range.clone()]) {
            *o += weight * gi;
        }
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        Some(vec![(0..self.range.len()).collect()])
    }
}

/// A block view of `f` embedded back into the full space: depends only on
/// the coordinates in `range`.
#[derive(Debug, Clone)]
pub struct BlockEmbedded {
    pub restricted: Restricted,
}

impl SmoothFn for BlockEmbedded {
    fn dim(&self) -> usize {
        self.restricted.anchor.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.restricted.value(&x[self.restricted.range.clone()])
    }
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        let r = self.restricted.range.clone();
        self.restricted.add_gradient(&x[r.clone()], weight, &mut out[r]);
    }
    fn term_supports(&self) -> Option<Vec<Vec<usize>>> {
        Some(vec![self.restricted.range.clone().collect()])
    }
}

/// Split a separable `f` into block functions whose sum is `f`.
pub fn block_components(f: &Oracle, anchor: &[f64], blocks: &[Range<usize>]) -> Vec<Oracle> {
    let count = blocks.len() as f64;
    let share = if blocks.len() > 1 {
        f.value(anchor) * (count - 1.0) / count
    } else {
        0.0
    };
    blocks
        .iter()
        .map(|r| {
            Arc::new(Restricted {
                inner: f.clone(),
                anchor: anchor.to_vec(),
                range: r.clone(),
                offset: share,
            }) as Oracle
        })
        .collect()
}
