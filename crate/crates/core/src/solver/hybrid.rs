use std::time::Instant;

use nalgebra::DVector;

use super::newton::newton_with_budget;
use super::psitc::qgs_psitc_outcome;
use super::{check_start, Outcome, SolverConfig, SolverKind, SolverResult, Status, TraceRecord};
use crate::error::Result;
use crate::system::NonlinearSystem;

fn tag(trace: Vec<TraceRecord>, phase: u8) -> impl Iterator<Item = TraceRecord> {
    trace.into_iter().map(move |mut t| {
        t.phase = Some(phase);
        t
    })
}

/// NR first. If it fails within `hybrid_nr_budget` iterations, restart from
/// `x0` with QGS-based ψtc until `‖F‖ ≤ hybrid_switch_threshold`, then let NR
/// finish. Iterations and traces are accumulated over all phases.
pub fn hybrid_solve(base: &dyn NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    check_start(base, x0, cfg)?;
    let t = Instant::now();
    let elapsed = || t.elapsed().as_secs_f64();

    let nr = newton_with_budget(base, x0, cfg, cfg.hybrid_nr_budget);
    let mut iterations = nr.iterations;
    let mut trace: Vec<TraceRecord> = tag(nr.trace, 1).collect();
    if nr.status == Status::Converged {
        let out = Outcome { trace, ..nr };
        return Ok(out.into_result(SolverKind::Hybrid, elapsed()));
    }

    let restart = qgs_psitc_outcome(base, x0, cfg, cfg.hybrid_switch_threshold, false);
    iterations += restart.iterations;
    trace.extend(tag(restart.trace, 2));
    if restart.status != Status::Converged {
        let out = Outcome { iterations, trace, ..restart };
        let mut res = out.into_result(SolverKind::Hybrid, elapsed());
        res.failed_phase = Some(2);
        return Ok(res);
    }

    let finish = newton_with_budget(base, &restart.x, cfg, cfg.max_iterations);
    iterations += finish.iterations;
    trace.extend(tag(finish.trace, 3));
    let ok = finish.status == Status::Converged;
    let out = Outcome { iterations, trace, ..finish };
    let mut res = out.into_result(SolverKind::Hybrid, elapsed());
    if !ok {
        res.failed_phase = Some(3);
    }
    Ok(res)
}
