use std::sync::Arc;

use super::SurrogateConstraint;
use crate::error::{Error, Result};
use crate::func::{Affine, BlockQuadratic, FnOracle, Oracle, SumFn};

fn constraint(anchor: &[f64], func: Oracle, label: String) -> SurrogateConstraint {
    SurrogateConstraint {
        anchor: anchor.to_vec(),
        func,
        components: None,
        lipschitz: None,
        label,
    }
}

/// `g(y) + ∇g(y)ᵀ(x − y) + (L/2)‖x − y‖²`, a global upper bound whenever
/// `L` bounds the Lipschitz constant of `∇g`.
pub fn lipschitz_quadratic_surrogate(
    g: &Oracle,
    lipschitz: f64,
    y: &[f64],
) -> Result<SurrogateConstraint> {
    if !(lipschitz > 0.0) {
        return Err(Error::Parameter(format!(
            "Lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    let func = SumFn::new(g.dim())
        .with(1.0, Arc::new(Affine::tangent(g.as_ref(), y)))
        .with(1.0, Arc::new(BlockQuadratic::isotropic(y.to_vec(), lipschitz)))
        .into_oracle();
    Ok(constraint(y, func, format!("lipschitz(L={lipschitz})")))
}

/// For `g = g⁺ − g⁻` with both parts convex: `g⁺(x) − g⁻(y) − ∇g⁻(y)ᵀ(x − y)`.
pub fn dc_linearize(plus: &Oracle, minus: &Oracle, y: &[f64]) -> SurrogateConstraint {
    let func = SumFn::new(plus.dim())
        .with(1.0, plus.clone())
        .with(-1.0, Arc::new(Affine::tangent(minus.as_ref(), y)))
        .into_oracle();
    constraint(y, func, "dc".into())
}

/// Split `g` as `(g + (b/2)‖x‖², (b/2)‖x‖²)`. Both parts are convex when
/// `b` bounds the most negative Hessian eigenvalue of `g` on the set.
pub fn hessian_shift_dc_split(g: &Oracle, curvature_bound: f64) -> Result<(Oracle, Oracle)> {
    if !(curvature_bound > 0.0) {
        return Err(Error::Parameter(format!(
            "curvature bound must be positive, got {curvature_bound}"
        )));
    }
    let n = g.dim();
    let shift: Oracle = Arc::new(BlockQuadratic::isotropic(vec![0.0; n], curvature_bound));
    let plus = SumFn::new(n)
        .with(1.0, g.clone())
        .with(1.0, shift.clone())
        .into_oracle();
    Ok((plus, shift))
}

/// Model of `remainder(x) + coef · x_i · x_j` with a convex `remainder`.
///
/// The product is written as a difference of convex quadratics,
/// `x_i x_j = ½(x_i + x_j)² − ½(x_i² + x_j²)`, and whichever part enters
/// with a negative sign is linearized at `y`.
pub fn bilinear_surrogate(
    i: usize,
    j: usize,
    coef: f64,
    remainder: Option<Oracle>,
    y: &[f64],
) -> Result<SurrogateConstraint> {
    let n = y.len();
    if i == j {
        return Err(Error::Parameter(
            "bilinear term needs two distinct coordinates; use a quadratic term instead".into(),
        ));
    }
    if i >= n || j >= n {
        return Err(Error::Parameter(format!(
            "bilinear coordinates ({i}, {j}) out of range for dimension {n}"
        )));
    }
    if coef == 0.0 || !coef.is_finite() {
        return Err(Error::Parameter("bilinear coefficient must be nonzero".into()));
    }
    let s = coef.abs();
    // ½(x_i + x_j)² and ½(x_i² + x_j²), each scaled by |coef|
    let joint = FnOracle::new(
        n,
        move |x| 0.5 * s * (x[i] + x[j]).powi(2),
        move |x| {
            let mut g = vec![0.0; n];
            g[i] = s * (x[i] + x[j]);
            g[j] = s * (x[i] + x[j]);
            g
        },
    )
    .with_supports(vec![vec![i.min(j), i.max(j)]])
    .into_oracle();
    let split = FnOracle::new(
        n,
        move |x| 0.5 * s * (x[i] * x[i] + x[j] * x[j]),
        move |x| {
            let mut g = vec![0.0; n];
            g[i] = s * x[i];
            g[j] = s * x[j];
            g
        },
    )
    .with_supports(vec![vec![i], vec![j]])
    .into_oracle();
    let (convex_part, concave_part) = if coef > 0.0 {
        (joint, split)
    } else {
        (split, joint)
    };
    let mut func = SumFn::new(n)
        .with(1.0, convex_part)
        .with(-1.0, Arc::new(Affine::tangent(concave_part.as_ref(), y)));
    if let Some(r) = remainder {
        if r.dim() != n {
            return Err(Error::dimension("bilinear remainder", n, r.dim()));
        }
        func.push(1.0, r);
    }
    Ok(constraint(y, func.into_oracle(), format!("bilinear({i},{j},{coef})")))
}

/// A constraint that is already convex serves as its own model.
pub fn identity_convex(g: &Oracle, y: &[f64]) -> SurrogateConstraint {
    constraint(y, g.clone(), "identity-convex".into())
}
