//! Exhaustive grid scan, an independent check for low-dimensional
//! problems.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::FEASIBILITY_TOL;

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Feasible grid point of least objective value with that value, or
    /// `None` when no grid point is feasible.
    pub best: Option<(Vec<f64>, f64)>,
    pub points_scanned: usize,
}

fn axis(lo: f64, hi: f64, resolution: f64) -> Vec<f64> {
    let count = ((hi - lo) / resolution + 1e-9).floor() as usize;
    (0..=count).map(|k| lo + k as f64 * resolution).collect()
}

/// Lower value wins; ties go to the lexicographically smaller point.
fn better(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.0.iter().zip(&b.0).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y),
    }
}

/// Scan `bounds` (or the set's bounding box) at spacing `resolution` and
/// return the best feasible grid point. Feasibility uses the library
/// tolerance.
pub fn grid_oracle(p: &ProblemSpec, resolution: f64, bounds: Option<(Vec<f64>, Vec<f64>)>) -> Result<GridResult> {
    if p.dim > 3 {
        return Err(Error::Unsupported(format!("grid oracle handles dim ≤ 3, got {}", p.dim)));
    }
    if !(resolution > 0.0) {
        return Err(Error::Parameter(format!("resolution must be positive, got {resolution}")));
    }
    let (lo, hi) = match bounds {
        Some(b) => b,
        None => p
            .set
            .bounding_box()
            .ok_or_else(|| Error::Input("the set is unbounded; give explicit bounds".into()))?,
    };
    if lo.len() != p.dim || hi.len() != p.dim {
        return Err(Error::dimension("grid bounds", p.dim, lo.len().min(hi.len())));
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) || lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return Err(Error::Input("grid bounds must be finite with lower ≤ upper".into()));
    }
    let axes: Vec<Vec<f64>> = lo.iter().zip(&hi).map(|(a, b)| axis(*a, *b, resolution)).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let inner: usize = axes[1..].iter().map(Vec::len).product();
    let scan_slice = |&first: &f64| {
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut x = vec![first; p.dim];
        for k in 0..inner {
            let mut rest = k;
            for d in (1..p.dim).rev() {
                let len = axes[d].len();
                x[d] = axes[d][rest % len];
                rest /= len;
            }
            if p.set.distance(&x) > FEASIBILITY_TOL || p.constraints.iter().any(|g| g.value(&x) > FEASIBILITY_TOL) {
                continue;
            }
            let cand = (x.clone(), p.objective.value(&x));
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        best
    };
    let slices: Vec<Option<(Vec<f64>, f64)>> = axes[0].par_iter().map(scan_slice).collect();
    let best = slices.into_iter().flatten().fold(None, |acc: Option<(Vec<f64>, f64)>, c| match acc {
        Some(a) if !better(&c, &a) => Some(a),
        _ => Some(c),
    });
    Ok(GridResult {
        best,
        points_scanned: total,
    })
}
