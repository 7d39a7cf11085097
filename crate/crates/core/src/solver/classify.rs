use nalgebra::DVector;

use super::Classification;
use crate::linalg::symmetric_pivots;
use crate::qgs::{gram, singularity_threshold};
use crate::system::{eval_residual, jacobian, FdConfig, NonlinearSystem};

/// Largest `‖F(x+s)‖ / ‖F(x)‖` accepted after one Gauss-Newton step for `x`
/// to count as a regular root. Regular roots contract quadratically; a double
/// root only reaches 1/4.
const REGULAR_ROOT_CONTRACTION: f64 = 0.1;

/// Labels a QGS stationary point.
///
/// * type 1: `‖F‖ ≤ ε` and `DFᵀDF` nonsingular,
/// * type 2: `‖DFᵀF‖ ≤ ε` with `‖F‖ > ε`,
/// * type 3: `‖F‖ ≤ ε` with `DFᵀDF` singular.
///
/// Points that are neither roots nor stationary are `NotClassified`.
pub fn classify_solution(base: &dyn NonlinearSystem, x: &DVector<f64>, eps: f64) -> Classification {
    classify_solution_with(base, x, eps, &FdConfig::forward())
}

pub fn classify_solution_with(base: &dyn NonlinearSystem, x: &DVector<f64>, eps: f64, fd: &FdConfig) -> Classification {
    let (f, df) = match (eval_residual(base, x), jacobian(base, x, fd)) {
        (Ok(f), Ok(df)) => (f, df),
        _ => return Classification::NotClassified,
    };
    let g = df.tr_mul(&f);
    let f_norm = f.norm();
    if f_norm > eps {
        return if g.norm() <= eps { Classification::Type2 } else { Classification::NotClassified };
    }

    let normal = gram(&df);
    let piv = symmetric_pivots(&normal);
    if !piv.positive || piv.smallest() <= singularity_threshold(&normal) {
        return Classification::Type3;
    }

    // In floating point a singular root is still reached to within ε (x² at
    // |x| ≤ 1e-3), and the relative pivot test cannot see it. A regular root is
    // where one more Gauss-Newton step contracts the residual superlinearly.
    let Some(chol) = normal.clone().cholesky() else {
        return Classification::Type3;
    };
    let s = chol.solve(&(-&g));
    let floor = 1e3 * f64::EPSILON * (1.0 + x.amax() * df.amax() + f_norm);
    match eval_residual(base, &(x + s)) {
        Ok(next) if next.norm() <= (REGULAR_ROOT_CONTRACTION * f_norm).max(floor) => Classification::Type1,
        _ => Classification::Type3,
    }
}
