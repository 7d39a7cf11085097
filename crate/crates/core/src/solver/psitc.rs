//! Pseudo-transient continuation (ψtc) for `ẋ = −G(x)`.
//!
//! Each iteration solves `(h⁻¹I + DG(x))s = −G(x)`, sets `x ← x + s` and
//! adapts `h`. Two instantiations target roots of `F`:
//!
//! * exact: `G = DFᵀF` with `DG = −DQ` finite-differenced from the QGS field,
//! * QGS-based: `DG ≈ DFᵀDF`, which turns the step into a regularised
//!   Gauss-Newton step that is always solvable.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{
    check_start, classify_solution_with, settle_root, Classification, LinearStrategy, Outcome, SolverConfig,
    SolverKind, SolverResult, Status, StepController, TraceRecord,
};
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::qgs::{gram, QgsSystem};
use crate::system::{eval_residual, jacobian, FdConfig, NonlinearSystem};

/// A vector field `G` integrated as `ẋ = −G(x)`, tied to the system whose
/// roots it should find. Termination is always judged on `‖F‖` of
/// [`PseudoTransientField::base`].
pub trait PseudoTransientField {
    fn base(&self) -> &dyn NonlinearSystem;
    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn field_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// `G = F`: ψtc applied directly to the residual.
pub struct ResidualFlow<'a> {
    base: &'a dyn NonlinearSystem,
    fd: FdConfig,
}

impl<'a> ResidualFlow<'a> {
    pub fn new(base: &'a dyn NonlinearSystem, cfg: &SolverConfig) -> Self {
        Self { base, fd: cfg.fd }
    }
}

impl PseudoTransientField for ResidualFlow<'_> {
    fn base(&self) -> &dyn NonlinearSystem {
        self.base
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        eval_residual(self.base, x)
    }

    fn field_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        jacobian(self.base, x, &self.fd)
    }
}

/// `G = −Q = DFᵀF` with the exact Jacobian `DG = −DQ`.
pub struct QgsFlow<'a> {
    qgs: QgsSystem<'a>,
    exact_fd: FdConfig,
}

impl<'a> QgsFlow<'a> {
    pub fn new(base: &'a dyn NonlinearSystem, cfg: &SolverConfig) -> Self {
        Self { qgs: QgsSystem::with_fd(base, cfg.fd), exact_fd: cfg.exact_fd }
    }
}

impl PseudoTransientField for QgsFlow<'_> {
    fn base(&self) -> &dyn NonlinearSystem {
        self.qgs.base()
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-self.qgs.field(x)?)
    }

    fn field_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-self.qgs.jacobian_exact(x, &self.exact_fd)?)
    }
}

/// Linearization at one iterate: `G(x)` plus what is needed to solve the
/// shifted system for any `h`.
enum Linearization {
    Exact { g: DVector<f64>, dg: DMatrix<f64> },
    Qgs { g: DVector<f64>, df: DMatrix<f64>, f: DVector<f64> },
}

impl Linearization {
    fn g(&self) -> &DVector<f64> {
        match self {
            Linearization::Exact { g, .. } | Linearization::Qgs { g, .. } => g,
        }
    }

    fn solve(&self, h: f64, strategy: LinearStrategy) -> Result<DVector<f64>> {
        match self {
            Linearization::Exact { g, dg } => {
                let n = g.len();
                let shifted = DMatrix::<f64>::identity(n, n) / h + dg;
                shifted.lu().solve(&(-g)).ok_or(Error::LinearSolve("shifted jacobian is singular"))
            }
            Linearization::Qgs { df, f, .. } => qgs_step_from(df, f, h, strategy),
        }
    }
}

fn qgs_step_from(df: &DMatrix<f64>, f: &DVector<f64>, h: f64, strategy: LinearStrategy) -> Result<DVector<f64>> {
    let n = df.ncols();
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("pseudo-time step must be positive, got {h}")));
    }
    match strategy {
        LinearStrategy::NormalEquations => {
            let mut normal = gram(df);
            for i in 0..n {
                normal[(i, i)] += 1.0 / h;
            }
            let chol = normal.cholesky().ok_or(Error::LinearSolve("shifted normal matrix is not positive definite"))?;
            Ok(chol.solve(&(-df.tr_mul(f))))
        }
        LinearStrategy::LeastSquares => {
            let m = df.nrows();
            let mut stacked = DMatrix::<f64>::zeros(m + n, n);
            stacked.view_mut((0, 0), (m, n)).copy_from(df);
            let scale = h.sqrt().recip();
            for i in 0..n {
                stacked[(m + i, i)] = scale;
            }
            let mut rhs = DVector::<f64>::zeros(m + n);
            rhs.rows_mut(0, m).copy_from(&(-f));
            let qr = stacked.qr();
            let qtb = qr.q().tr_mul(&rhs);
            qr.r().solve_upper_triangular(&qtb).ok_or(Error::LinearSolve("triangular factor is singular"))
        }
    }
}

/// One QGS-based ψtc step: the `s` solving `(h⁻¹I + DFᵀDF)s = −DFᵀF`,
/// either through the normal equations or as the least-squares solution of
/// `min ‖[DF; h^{-1/2}I]s + [F; 0]‖`.
pub fn qgs_psitc_step(
    base: &dyn NonlinearSystem,
    x: &DVector<f64>,
    h: f64,
    strategy: LinearStrategy,
) -> Result<DVector<f64>> {
    let f = eval_residual(base, x)?;
    let df = jacobian(base, x, &FdConfig::forward())?;
    qgs_step_from(&df, &f, h, strategy)
}

/// The ψtc loop. `linearize` maps `(x, F(x))` to the current linear model.
/// With `classify_roots`, an iterate reaching `‖F‖ ≤ tol` is only accepted as
/// converged if it is a regular root.
fn pseudo_transient_loop<L>(
    base: &dyn NonlinearSystem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    tol: f64,
    classify_roots: bool,
    linearize: L,
) -> Outcome
where
    L: Fn(&DVector<f64>, &DVector<f64>) -> Result<Linearization>,
{
    let mut x = x0.clone();
    let mut ctrl = StepController::new(cfg.step_rule, cfg.h0, cfg.h_max);
    let mut trace = Vec::new();
    let mut last_step_norm = 0.0;
    let mut near_stationary = 0usize;
    let mut r0 = None;
    let mut iter = 0usize;

    let stop = |status, classification, x, r, iter, trace| Outcome {
        status,
        classification,
        x,
        residual_norm: r,
        iterations: iter,
        trace,
    };

    loop {
        let f = match eval_residual(base, &x) {
            Ok(f) => f,
            Err(_) => return stop(Status::Diverged, Classification::NotClassified, x, f64::NAN, iter, trace),
        };
        let r = f.norm();
        let lin = match linearize(&x, &f) {
            Ok(l) => l,
            Err(_) => return stop(Status::Diverged, Classification::NotClassified, x, r, iter, trace),
        };
        let g_norm = lin.g().norm();
        let h = if iter == 0 {
            ctrl.record_residual(g_norm);
            ctrl.h()
        } else {
            ctrl.update(g_norm, last_step_norm)
        };
        trace.push(TraceRecord { iteration: iter, residual_norm: r, h: Some(h), phase: None });

        if r <= tol {
            if !classify_roots {
                return stop(Status::Converged, Classification::NotClassified, x, r, iter, trace);
            }
            let (status, classification) = settle_root(base, &x, cfg);
            return stop(status, classification, x, r, iter, trace);
        }
        // ‖G‖ has collapsed while ‖F‖ has not: a type-2 neighbourhood.
        if g_norm <= cfg.tolerance {
            near_stationary += 1;
        } else {
            near_stationary = 0;
        }
        if g_norm == 0.0 || near_stationary >= cfg.stagnation_window {
            let classification = classify_solution_with(base, &x, cfg.tolerance, &cfg.fd);
            return stop(Status::SpuriousStationary, classification, x, r, iter, trace);
        }
        let r0 = *r0.get_or_insert(r);
        if !all_finite(&x) || !r.is_finite() || r > cfg.divergence_factor * r0 || x.amax() > cfg.divergence_box {
            return stop(Status::Diverged, Classification::NotClassified, x, r, iter, trace);
        }
        if iter >= cfg.max_iterations {
            // Budget ran out inside a stagnation window.
            if near_stationary > 0 {
                let classification = classify_solution_with(base, &x, cfg.tolerance, &cfg.fd);
                return stop(Status::SpuriousStationary, classification, x, r, iter, trace);
            }
            return stop(Status::MaxIterations, Classification::NotClassified, x, r, iter, trace);
        }
        let s = match lin.solve(h, cfg.linear_strategy) {
            Ok(s) if all_finite(&s) => s,
            _ => return stop(Status::LinearSolveFailure, Classification::NotClassified, x, r, iter, trace),
        };
        last_step_norm = s.norm();
        x += s;
        iter += 1;
    }
}

/// ψtc on an arbitrary field, with the exact shifted Jacobian.
pub fn psitc_solve(field: &dyn PseudoTransientField, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    check_start(field.base(), x0, cfg)?;
    let t = Instant::now();
    let out = pseudo_transient_loop(field.base(), x0, cfg, cfg.tolerance, true, |x, _f| {
        Ok(Linearization::Exact { g: field.field(x)?, dg: field.field_jacobian(x)? })
    });
    Ok(out.into_result(SolverKind::PsitcExact, t.elapsed().as_secs_f64()))
}

pub(crate) fn qgs_psitc_outcome(
    base: &dyn NonlinearSystem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    tol: f64,
    classify_roots: bool,
) -> Outcome {
    pseudo_transient_loop(base, x0, cfg, tol, classify_roots, |x, f| {
        let df = jacobian(base, x, &cfg.fd)?;
        Ok(Linearization::Qgs { g: df.tr_mul(f), df, f: f.clone() })
    })
}

/// QGS-based ψtc: the quasi-Newton ψtc iteration on the quotient gradient
/// system, with `DQ` replaced by `−DFᵀDF`.
pub fn qgs_psitc_solve(base: &dyn NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    check_start(base, x0, cfg)?;
    let t = Instant::now();
    let out = qgs_psitc_outcome(base, x0, cfg, cfg.tolerance, true);
    Ok(out.into_result(SolverKind::QgsPsitc, t.elapsed().as_secs_f64()))
}
