use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{
    check_start, settle_root, Classification, Outcome, SolverConfig, SolverKind, SolverResult, Status, TraceRecord,
};
use crate::error::Result;
use crate::linalg::all_finite;
use crate::system::{eval_residual, jacobian, NonlinearSystem};

/// Newton direction `DF(x)⁻¹F(x)`, or `None` when the Jacobian is singular
/// or the solve is not finite.
fn newton_direction(
    sys: &dyn NonlinearSystem,
    x: &DVector<f64>,
    f: &DVector<f64>,
    cfg: &SolverConfig,
) -> Option<DVector<f64>> {
    let j: DMatrix<f64> = jacobian(sys, x, &cfg.fd).ok()?;
    let d = j.lu().solve(f)?;
    all_finite(&d).then_some(d)
}

enum Step {
    Ok(DVector<f64>),
    Singular,
    EvalFailed,
}

fn out_of_bounds(x: &DVector<f64>, r: f64, r0: f64, cfg: &SolverConfig) -> bool {
    !all_finite(x) || !r.is_finite() || r > cfg.divergence_factor * r0 || x.amax() > cfg.divergence_box
}

/// Shared driver for explicit integrations of `ẋ = −DF⁻¹F`.
fn drive<S>(sys: &dyn NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig, budget: usize, mut step: S) -> Outcome
where
    S: FnMut(&DVector<f64>, &DVector<f64>) -> Step,
{
    let mut x = x0.clone();
    let mut trace = Vec::new();
    let mut r0 = None;
    let mut iter = 0;
    loop {
        let f = match eval_residual(sys, &x) {
            Ok(f) => f,
            Err(_) => return finish(Status::Diverged, x, f64::NAN, iter, trace),
        };
        let r = f.norm();
        trace.push(TraceRecord { iteration: iter, residual_norm: r, h: None, phase: None });
        if r <= cfg.tolerance {
            let (status, classification) = settle_root(sys, &x, cfg);
            return Outcome { status, classification, x, residual_norm: r, iterations: iter, trace };
        }
        let r0 = *r0.get_or_insert(r);
        if out_of_bounds(&x, r, r0, cfg) {
            return finish(Status::Diverged, x, r, iter, trace);
        }
        if iter >= budget {
            return finish(Status::MaxIterations, x, r, iter, trace);
        }
        match step(&x, &f) {
            Step::Ok(dx) => x += dx,
            Step::Singular => return finish(Status::LinearSolveFailure, x, r, iter, trace),
            Step::EvalFailed => return finish(Status::Diverged, x, r, iter, trace),
        }
        iter += 1;
    }
}

fn finish(status: Status, x: DVector<f64>, r: f64, iterations: usize, trace: Vec<TraceRecord>) -> Outcome {
    Outcome { status, classification: Classification::NotClassified, x, residual_norm: r, iterations, trace }
}

pub(crate) fn newton_with_budget(
    sys: &dyn NonlinearSystem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    budget: usize,
) -> Outcome {
    drive(sys, x0, cfg, budget, |x, f| match newton_direction(sys, x, f, cfg) {
        Some(d) => Step::Ok(-d),
        None => Step::Singular,
    })
}

/// Newton-Raphson: the forward Euler discretisation of `ẋ = −DF⁻¹F` with unit step.
pub fn newton_solve(sys: &dyn NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    check_start(sys, x0, cfg)?;
    let t = Instant::now();
    let out = newton_with_budget(sys, x0, cfg, cfg.max_iterations);
    Ok(out.into_result(SolverKind::Nr, t.elapsed().as_secs_f64()))
}

/// Continuous Newton: one classical RK4 step of length `cfg.cnr_step` on
/// `ẋ = −DF⁻¹F` per iteration, four linear solves each.
pub fn continuous_newton_solve(
    sys: &dyn NonlinearSystem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    check_start(sys, x0, cfg)?;
    let t = Instant::now();
    let h = cfg.cnr_step;
    let stage = |x: &DVector<f64>| -> std::result::Result<DVector<f64>, Step> {
        let f = eval_residual(sys, x).map_err(|_| Step::EvalFailed)?;
        newton_direction(sys, x, &f, cfg).map(|d| -d).ok_or(Step::Singular)
    };
    let out = drive(sys, x0, cfg, cfg.max_iterations, |x, f| {
        let k1 = match newton_direction(sys, x, f, cfg) {
            Some(d) => -d,
            None => return Step::Singular,
        };
        let rk = || -> std::result::Result<DVector<f64>, Step> {
            let k2 = stage(&(x + &k1 * (h / 2.0)))?;
            let k3 = stage(&(x + &k2 * (h / 2.0)))?;
            let k4 = stage(&(x + &k3 * h))?;
            Ok((&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        };
        match rk() {
            Ok(dx) => Step::Ok(dx),
            Err(e) => e,
        }
    });
    Ok(out.into_result(SolverKind::Cnr, t.elapsed().as_secs_f64()))
}
