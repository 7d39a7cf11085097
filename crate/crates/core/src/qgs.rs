//! Quotient gradient system wrapper: `ẋ = Q(x) = −DF(x)ᵀF(x)`.
//!
//! `Q` is the negative gradient of the merit `½‖F(x)‖²`, so every root of `F`
//! with a nonsingular Jacobian is a stable equilibrium of the flow, whatever
//! its stability in the original dynamics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{small_symmetric_eigenvalues, symmetric_pivots};
use crate::system::{eval_residual, fd_jacobian_of, jacobian, FdConfig, NonlinearSystem};

/// `AᵀA`, assembled so that the result is exactly symmetric.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = a.column(i).dot(&a.column(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Pivot threshold below which `DFᵀDF` is treated as singular:
/// `n · ε_mach · max|diag|`.
pub fn singularity_threshold(m: &DMatrix<f64>) -> f64 {
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs()));
    m.nrows() as f64 * f64::EPSILON * max_diag
}

#[derive(Clone, Copy)]
pub struct QgsSystem<'a> {
    base: &'a dyn NonlinearSystem,
    /// Used for `DF` when the base system has no analytic Jacobian.
    fd: FdConfig,
}

impl<'a> QgsSystem<'a> {
    pub fn new(base: &'a dyn NonlinearSystem) -> Self {
        Self { base, fd: FdConfig::forward() }
    }

    pub fn with_fd(base: &'a dyn NonlinearSystem, fd: FdConfig) -> Self {
        Self { base, fd }
    }

    pub fn base(&self) -> &'a dyn NonlinearSystem {
        self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `F(x)` and `DF(x)` together.
    pub fn linearize(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let f = eval_residual(self.base, x)?;
        let df = jacobian(self.base, x, &self.fd)?;
        Ok((f, df))
    }

    /// `Q(x) = −DF(x)ᵀF(x)`.
    pub fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (f, df) = self.linearize(x)?;
        Ok(-(df.tr_mul(&f)))
    }

    /// `DQ(x)`, including the Hessian contraction `−Σ f_k ∇²f_k`, obtained by
    /// finite-differencing [`Self::field`].
    pub fn jacobian_exact(&self, x: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>> {
        let q = self.field(x)?;
        fd_jacobian_of(x, &q, cfg, |p| self.field(p))
    }

    /// `DQ̃(x) = −DF(x)ᵀDF(x)`, symmetric negative semi-definite.
    pub fn jacobian_approx(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let df = jacobian(self.base, x, &self.fd)?;
        Ok(-gram(&df))
    }

    /// Checks whether `x` is a stable equilibrium of the QGS by testing
    /// `DF(x)ᵀDF(x)` for positive definiteness.
    ///
    /// `tol` bounds `‖F(x)‖₂` for `x` to count as an equilibrium; beyond it the
    /// Hessian term of `DQ` is not negligible and the report carries a warning.
    pub fn verify_sep(&self, x: &DVector<f64>, tol: f64) -> Result<DefinitenessReport> {
        let (f, df) = self.linearize(x)?;
        let normal = gram(&df);
        let piv = symmetric_pivots(&normal);
        let threshold = singularity_threshold(&normal);
        let smallest = piv.smallest();
        let positive_definite = piv.positive && smallest > threshold;
        let residual_norm = f.norm();
        Ok(DefinitenessReport {
            positive_definite,
            smallest_pivot: smallest,
            pivot_threshold: threshold,
            eigenvalues: small_symmetric_eigenvalues(&normal),
            residual_norm,
            off_equilibrium: residual_norm > tol,
        })
    }
}

/// Result of [`QgsSystem::verify_sep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    /// `DFᵀDF` factorized with every pivot above `pivot_threshold`.
    pub positive_definite: bool,
    pub smallest_pivot: f64,
    pub pivot_threshold: f64,
    /// Eigenvalues of `DFᵀDF` for systems of dimension ≤ 3, ascending.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    pub residual_norm: f64,
    /// `x` was not an equilibrium within the tolerance given.
    pub off_equilibrium: bool,
}

/// Free-function form of [`QgsSystem::field`].
pub fn qgs_field(q: &QgsSystem<'_>, x: &DVector<f64>) -> Result<DVector<f64>> {
    q.field(x)
}

pub fn qgs_jacobian_exact(q: &QgsSystem<'_>, x: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>> {
    q.jacobian_exact(x, cfg)
}

pub fn qgs_jacobian_approx(q: &QgsSystem<'_>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    q.jacobian_approx(x)
}

pub fn verify_qgs_sep(q: &QgsSystem<'_>, x: &DVector<f64>, tol: f64) -> Result<DefinitenessReport> {
    q.verify_sep(x, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn field_examples() {
        let lin = builtin::linear(1);
        assert_eq!(QgsSystem::new(&lin).field(&v(&[1.0])).unwrap()[0], -1.0);
        let quad = builtin::quadratic();
        assert_eq!(QgsSystem::new(&quad).field(&v(&[3.0])).unwrap()[0], -30.0);
        let q = QgsSystem::new(&quad);
        assert_eq!(q.field(&v(&[2.0])).unwrap()[0], 0.0);
        let pend = builtin::pendulum();
        assert!(QgsSystem::new(&pend).field(&v(&[PI, 0.0])).unwrap().amax() < 1e-15);
    }

    #[test]
    fn exact_jacobian_examples() {
        let c = FdConfig::central();
        let lin = builtin::linear(1);
        let j = QgsSystem::new(&lin).jacobian_exact(&v(&[0.0]), &c).unwrap();
        assert!((j[(0, 0)] + 1.0).abs() < 1e-8);

        let quad = builtin::quadratic();
        let j = QgsSystem::new(&quad).jacobian_exact(&v(&[3.0]), &c).unwrap();
        assert!((j[(0, 0)] + 46.0).abs() < 1e-5, "{}", j[(0, 0)]);

        let pend = builtin::pendulum();
        let q = QgsSystem::new(&pend);
        let j = q.jacobian_exact(&v(&[PI, 0.0]), &c).unwrap();
        let want = -DMatrix::from_row_slice(2, 2, &[1.0, -0.1, -0.1, 1.01]);
        assert!((&j - &want).amax() < 1e-6);
        // Hessian term vanishes at the root.
        let a = q.jacobian_approx(&v(&[PI, 0.0])).unwrap();
        assert!((j - a).amax() < 1e-6);
    }

    #[test]
    fn approx_jacobian_examples() {
        let lin = builtin::linear(1);
        assert_eq!(QgsSystem::new(&lin).jacobian_approx(&v(&[4.2])).unwrap()[(0, 0)], -1.0);
        let quad = builtin::quadratic();
        assert_eq!(QgsSystem::new(&quad).jacobian_approx(&v(&[3.0])).unwrap()[(0, 0)], -36.0);
    }

    #[test]
    fn approx_jacobian_is_exactly_symmetric() {
        let sys = builtin::random_polynomial(5, 6);
        let q = QgsSystem::new(&sys);
        let a = q.jacobian_approx(&DVector::from_fn(6, |i, _| 0.1 * i as f64 - 0.2)).unwrap();
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn exact_minus_approx_gap_on_quadratic() {
        // Hessian contraction of x² − 4 is 2·F(x).
        let quad = builtin::quadratic();
        let q = QgsSystem::new(&quad);
        for x in [3.0, 2.5, 2.1, 2.01, 2.001] {
            let gap = (q.jacobian_exact(&v(&[x]), &FdConfig::central()).unwrap()
                - q.jacobian_approx(&v(&[x])).unwrap())[(0, 0)]
                .abs();
            let want = 2.0 * (x * x - 4.0_f64).abs();
            assert!((gap - want).abs() < 1e-5 * (1.0 + want), "x={x} gap={gap} want={want}");
        }
    }

    #[test]
    fn sep_verification_examples() {
        let lin = builtin::linear(1);
        let r = QgsSystem::new(&lin).verify_sep(&v(&[0.0]), 1e-6).unwrap();
        assert!(r.positive_definite && !r.off_equilibrium);
        assert_eq!(r.smallest_pivot, 1.0);

        let pend = builtin::pendulum();
        let r = QgsSystem::new(&pend).verify_sep(&v(&[PI, 0.0]), 1e-6).unwrap();
        assert!(r.positive_definite);
        let ev = r.eigenvalues.unwrap();
        // Roots of λ² − 2.01λ + 1.
        let disc = (2.01f64 * 2.01 - 4.0).sqrt();
        assert!((ev[0] - (2.01 - disc) / 2.0).abs() < 1e-12);
        assert!((ev[1] - (2.01 + disc) / 2.0).abs() < 1e-12);
        assert!((ev[0] - 0.9049).abs() < 1e-3 && (ev[1] - 1.1051).abs() < 1e-3);

        let t3 = builtin::type3();
        let r = QgsSystem::new(&t3).verify_sep(&v(&[0.0]), 1e-6).unwrap();
        assert!(!r.positive_definite);
    }

    #[test]
    fn sep_verification_warns_off_equilibrium() {
        let quad = builtin::quadratic();
        let r = QgsSystem::new(&quad).verify_sep(&v(&[3.0]), 1e-6).unwrap();
        assert!(r.off_equilibrium);
        assert!(r.positive_definite);
    }
}
