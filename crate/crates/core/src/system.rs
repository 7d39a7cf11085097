//! The nonlinear-system abstraction consumed by every solver, plus
//! finite-difference differentiation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, all_finite_mat};

/// A square map `F: Rⁿ → Rⁿ` whose roots are the equilibria of interest.
///
/// Implementations must be pure: the same `x` always yields the same output.
pub trait NonlinearSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str {
        "system"
    }

    /// Raw residual. Callers normally go through [`eval_residual`], which
    /// checks dimensions and finiteness.
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian, when the system has one.
    fn analytic_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    Forward,
    Central,
}

/// Finite-difference settings. The step for coordinate `j` is
/// `perturbation * max(1, |x_j|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub perturbation: f64,
    pub scheme: FdScheme,
}

impl FdConfig {
    pub fn forward() -> Self {
        Self { perturbation: f64::EPSILON.sqrt(), scheme: FdScheme::Forward }
    }

    pub fn central() -> Self {
        Self { perturbation: f64::EPSILON.sqrt(), scheme: FdScheme::Central }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.perturbation > 0.0) || !self.perturbation.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "finite-difference perturbation must be positive, got {}",
                self.perturbation
            )));
        }
        Ok(())
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        Self::forward()
    }
}

fn check_dim(expected: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// `F(x)` with input and output validation.
pub fn eval_residual<S: NonlinearSystem + ?Sized>(sys: &S, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(sys.dim(), x)?;
    let f = sys.residual(x);
    check_dim(sys.dim(), &f)?;
    if !all_finite(&f) {
        return Err(Error::NonFinite { what: "residual" });
    }
    Ok(f)
}

/// Finite-difference Jacobian of an arbitrary map `g: Rⁿ → Rᵐ` at `x`.
/// `gx` is `g(x)`, reused by the forward scheme.
pub fn fd_jacobian_of<G>(x: &DVector<f64>, gx: &DVector<f64>, cfg: &FdConfig, g: G) -> Result<DMatrix<f64>>
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    let n = x.len();
    let m = gx.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = cfg.perturbation * x[j].abs().max(1.0);
        let col = match cfg.scheme {
            FdScheme::Forward => {
                xp[j] = x[j] + h;
                let gp = g(&xp)?;
                // Use the representable step to cancel rounding in x + h.
                let dh = xp[j] - x[j];
                (gp - gx) / dh
            }
            FdScheme::Central => {
                xp[j] = x[j] + h;
                let gp = g(&xp)?;
                let up = xp[j];
                xp[j] = x[j] - h;
                let gm = g(&xp)?;
                let dh = up - xp[j];
                (gp - gm) / dh
            }
        };
        xp[j] = x[j];
        jac.set_column(j, &col);
    }
    if !all_finite_mat(&jac) {
        return Err(Error::NonFinite { what: "finite-difference jacobian" });
    }
    Ok(jac)
}

/// Finite-difference approximation of `DF(x)`.
pub fn fd_jacobian<S: NonlinearSystem + ?Sized>(sys: &S, x: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>> {
    let fx = eval_residual(sys, x)?;
    fd_jacobian_of(x, &fx, cfg, |p| eval_residual(sys, p))
}

/// `DF(x)`: the analytic Jacobian when available, otherwise finite differences.
pub fn jacobian<S: NonlinearSystem + ?Sized>(sys: &S, x: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>> {
    check_dim(sys.dim(), x)?;
    match sys.analytic_jacobian(x) {
        Some(j) => {
            let n = sys.dim();
            if j.nrows() != n || j.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: j.nrows().max(j.ncols()) });
            }
            if !all_finite_mat(&j) {
                return Err(Error::NonFinite { what: "jacobian" });
            }
            Ok(j)
        }
        None => fd_jacobian(sys, x, cfg),
    }
}

type ResidualFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A system assembled from closures.
pub struct FnSystem {
    name: String,
    dim: usize,
    residual: Box<ResidualFn>,
    jacobian: Option<Box<JacobianFn>>,
}

impl FnSystem {
    pub fn new<F>(name: impl Into<String>, dim: usize, residual: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { name: name.into(), dim, residual: Box::new(residual), jacobian: None }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jacobian));
        self
    }
}

impl std::fmt::Debug for FnSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl NonlinearSystem for FnSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.residual)(x)
    }

    fn analytic_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}
