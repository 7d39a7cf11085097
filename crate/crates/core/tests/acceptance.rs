//! End-to-end acceptance checks. Criteria run one after another so timings do
//! not compete; each prints one `criterion N: PASS|FAIL` line and the process
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uepflow_core::benchmark::{run_benchmark, BenchmarkCase, BenchmarkReport};
use uepflow_core::power::{power_flow, wscc9, wscc9_starts, wscc9_system, SpmSystem};
use uepflow_core::region::{connected_stats, map_region, GridSpec, RegionStats};
use uepflow_core::system::{eval_residual, jacobian};
use uepflow_core::{
    builtin, classify_solution, newton_solve, qgs_field, qgs_psitc_solve, qgs_psitc_step, verify_qgs_sep,
    Classification, FnSystem, LinearStrategy, NonlinearSystem, QgsSystem, SolverConfig, SolverKind, Status,
};

type Verdict = (bool, String);

/// Iterates `x_0 .. x_N` of a run, recovered by capping the iteration budget.
fn iterates(
    run: impl Fn(&SolverConfig) -> uepflow_core::SolverResult,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Vec<DVector<f64>> {
    let full = run(cfg);
    let mut xs = vec![x0.clone()];
    for k in 1..full.iterations {
        let capped = SolverConfig { max_iterations: k, ..cfg.clone() };
        let r = run(&capped);
        assert_eq!(r.iterations, k);
        xs.push(r.solution_vector());
    }
    if full.iterations > 0 {
        xs.push(full.solution_vector());
    }
    xs
}

struct WsccBatch {
    systems: Vec<(u32, SpmSystem)>,
    report: BenchmarkReport,
    elapsed: f64,
}

fn wscc_batch() -> &'static WsccBatch {
    static BATCH: OnceLock<WsccBatch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let t = Instant::now();
        let starts = wscc9_starts();
        let systems: Vec<(u32, SpmSystem)> =
            starts.iter().map(|s| (s.contingency, wscc9_system(Some(s.contingency)).unwrap().0)).collect();
        let cases: Vec<BenchmarkCase> = systems
            .iter()
            .zip(&starts)
            .map(|((id, sys), s)| BenchmarkCase {
                label: format!("c{id}"),
                system: sys,
                x0: DVector::from_vec(s.x0.clone()),
            })
            .collect();
        let report = run_benchmark(&cases, &SolverKind::ALL, &SolverConfig::default());
        WsccBatch { systems, report, elapsed: t.elapsed().as_secs_f64() }
    })
}

fn average_iterations(report: &BenchmarkReport, kind: SolverKind) -> f64 {
    report.average(kind).and_then(|a| a.avg_iterations).unwrap_or(f64::NAN)
}

fn builtin_suite() -> Vec<FnSystem> {
    let mut v = vec![builtin::linear(3), builtin::quadratic(), builtin::pendulum(), builtin::type2(), builtin::type3()];
    v.extend((0..5).map(|seed| builtin::random_polynomial(seed, 2 + seed as usize)));
    v
}

fn criterion_01_gradient_structure() -> Verdict {
    let t = Instant::now();
    let systems = builtin_suite();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let sys = &systems[k % systems.len()];
        let n = sys.dim();
        let x: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let merit = |p: &DVector<f64>| 0.5 * eval_residual(sys, p).unwrap().norm_squared();
        let grad = DVector::from_fn(n, |i, _| {
            let h = 1e-5 * x[i].abs().max(1.0);
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += h;
            lo[i] -= h;
            (merit(&hi) - merit(&lo)) / (2.0 * h)
        });
        let q = qgs_field(&QgsSystem::new(sys), &x).unwrap();
        let err = (&q + &grad).norm() / grad.norm().max(f64::MIN_POSITIVE);
        if grad.norm() > 1e-8 {
            worst = worst.max(err);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (worst <= 1e-5 && secs < 5.0, format!("worst relative error {worst:.2e}, {secs:.2} s"))
}

fn criterion_02_qgs_sep_definiteness() -> Verdict {
    let sys = builtin::pendulum();
    let x = DVector::from_vec(vec![PI, 0.0]);
    let rep = verify_qgs_sep(&QgsSystem::new(&sys), &x, 1e-6).unwrap();
    // DFᵀDF = [[1, −d], [−d, 1 + d²]]: trace 2 + d², determinant 1.
    let d = builtin::PENDULUM_DAMPING;
    let (tr, det) = (2.0 + d * d, 1.0);
    let disc = (tr * tr - 4.0 * det).sqrt();
    let oracle = [(tr - disc) / 2.0, (tr + disc) / 2.0];
    let eig = rep.eigenvalues.clone().unwrap_or_default();
    let eig_ok = eig.len() == 2
        && (eig[0] - oracle[0]).abs() <= 1e-3
        && (eig[1] - oracle[1]).abs() <= 1e-3
        && (oracle[0] - 0.9049).abs() <= 1e-3
        && (oracle[1] - 1.1051).abs() <= 1e-3;

    let batch = wscc_batch();
    let mut checked = 0;
    let mut wscc_ok = true;
    for run in batch.report.runs.iter().filter(|r| r.converged() && r.classification == Some(Classification::Type1)) {
        let sys = &batch.systems.iter().find(|(id, _)| format!("c{id}") == run.case).unwrap().1;
        let r = verify_qgs_sep(&QgsSystem::new(sys), &DVector::from_vec(run.solution.clone()), 1e-6).unwrap();
        wscc_ok &= r.positive_definite && !r.off_equilibrium;
        checked += 1;
    }
    (
        rep.positive_definite && eig_ok && wscc_ok && checked > 0,
        format!("pendulum eigenvalues {eig:.4?}, {checked} WSCC type-1 solutions checked, all definite: {wscc_ok}"),
    )
}

fn criterion_03_no_false_convergence() -> Verdict {
    let t = Instant::now();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t2, t3) = (builtin::type2(), builtin::type3());
    let mut converged = 0;
    let mut near_stationary = 0;
    let mut mislabeled = 0;
    for k in 0..1000 {
        let (sys, x0): (&FnSystem, DVector<f64>) = if k % 2 == 0 {
            (&t2, DVector::from_fn(2, |_, _| rng.gen_range(-5.0..5.0)))
        } else {
            (&t3, DVector::from_element(1, rng.gen_range(-5.0..5.0)))
        };
        let r = qgs_psitc_solve(sys, &x0, &cfg).unwrap();
        if r.converged() {
            converged += 1;
        }
        let x = r.solution_vector();
        let f = eval_residual(sys, &x).unwrap();
        let g = jacobian(sys, &x, &cfg.fd).unwrap().tr_mul(&f);
        if g.norm() <= cfg.tolerance {
            near_stationary += 1;
            if r.status != Status::SpuriousStationary {
                mislabeled += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        converged == 0 && mislabeled == 0 && secs < 30.0,
        format!("{converged} converged, {near_stationary} near-stationary, {mislabeled} mislabeled, {secs:.2} s"),
    )
}

fn linear_map(a: DMatrix<f64>, b: DVector<f64>) -> FnSystem {
    let n = a.nrows();
    let a2 = a.clone();
    FnSystem::new("affine", n, move |x| &a * x + &b).with_jacobian(move |_| a2.clone())
}

fn criterion_04_step_solvability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = rng.gen_range(1..=6);
        let rank = if k % 3 == 0 { rng.gen_range(0..n) } else { n };
        let u = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
        let v = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = if rank == n { DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)) } else { u * v };
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let h = 10f64.powf(rng.gen_range(-6.0..6.0));
        let sys = linear_map(a.clone(), b);
        let x = DVector::zeros(n);
        let normal = qgs_psitc_step(&sys, &x, h, LinearStrategy::NormalEquations);
        let lsq = qgs_psitc_step(&sys, &x, h, LinearStrategy::LeastSquares);
        let (s1, s2) = match (normal, lsq) {
            (Ok(s1), Ok(s2)) if s1.iter().chain(s2.iter()).all(|v| v.is_finite()) => (s1, s2),
            _ => {
                failures += 1;
                continue;
            }
        };
        let sv = a.clone().singular_values();
        let cond = sv.max() / sv.min();
        if rank == n && cond <= 100.0 {
            compared += 1;
            let rel = (&s1 - &s2).norm() / s1.norm().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    (
        failures == 0 && compared > 0 && worst <= 1e-10,
        format!("{failures} failed steps, {compared} well-conditioned pairs, worst disagreement {worst:.2e}"),
    )
}

fn criterion_05_rate_signatures() -> Verdict {
    let sys = builtin::quadratic();
    let x0 = DVector::from_element(1, 3.0);
    let cfg = SolverConfig { h_max: f64::INFINITY, ..Default::default() };

    let nr: Vec<f64> =
        iterates(|c| newton_solve(&sys, &x0, c).unwrap(), &x0, &cfg).iter().map(|x| (x[0] - 2.0).abs()).collect();
    let nr_ratios: Vec<f64> = nr.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / (w[0] * w[0])).collect();
    let nr_ok = !nr_ratios.is_empty() && nr_ratios.iter().all(|r| r.is_finite() && *r <= 1.0);

    let qgs: Vec<f64> =
        iterates(|c| qgs_psitc_solve(&sys, &x0, c).unwrap(), &x0, &cfg).iter().map(|x| (x[0] - 2.0).abs()).collect();
    let q_ratios: Vec<f64> = qgs.windows(2).map(|w| w[1] / w[0]).collect();
    let last: Vec<f64> = q_ratios.iter().rev().take(3).rev().copied().collect();
    let q_ok = last.len() == 3 && last.windows(2).all(|w| w[1] < w[0]) && last[2] < 0.1;
    (
        nr_ok && q_ok,
        format!(
            "NR e_k+1/e_k^2 = {nr_ratios:.3?}; QGS final e_k+1/e_k = [{}]",
            last.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_06_ser_behavior() -> Verdict {
    let cfg = SolverConfig { h_max: f64::INFINITY, ..Default::default() };
    let mut runs: Vec<(Box<dyn NonlinearSystem>, DVector<f64>)> = vec![
        (Box::new(builtin::quadratic()), DVector::from_element(1, 3.0)),
        (Box::new(builtin::pendulum()), DVector::from_vec(vec![2.0, 0.5])),
        (Box::new(builtin::pendulum()), DVector::from_vec(vec![3.5, -0.3])),
        (Box::new(builtin::linear(3)), DVector::from_vec(vec![1.0, -2.0, 0.5])),
    ];
    for seed in 0..4 {
        runs.push((Box::new(builtin::random_polynomial(seed, 3)), DVector::from_vec(vec![0.2, -0.1, 0.3])));
    }
    let (mut monotone, mut violations) = (0, 0);
    for (sys, x0) in &runs {
        let res = qgs_psitc_solve(sys.as_ref(), x0, &cfg).unwrap();
        let xs = iterates(|c| qgs_psitc_solve(sys.as_ref(), x0, c).unwrap(), x0, &cfg);
        let g: Vec<f64> = xs
            .iter()
            .map(|x| {
                jacobian(sys.as_ref(), x, &cfg.fd).unwrap().tr_mul(&eval_residual(sys.as_ref(), x).unwrap()).norm()
            })
            .collect();
        if !g.windows(2).all(|w| w[1] <= w[0]) {
            continue;
        }
        monotone += 1;
        let h: Vec<f64> = res.trace.iter().map(|t| t.h.unwrap()).collect();
        let non_decreasing = h.windows(2).all(|w| w[1] >= w[0]);
        let uncapped_value = cfg.h0 * g[0] / g[g.len() - 1];
        let uncapped = (h[h.len() - 1] - uncapped_value).abs() <= 1e-9 * uncapped_value;
        if !(non_decreasing && uncapped) {
            violations += 1;
        }
    }
    (monotone > 0 && violations == 0, format!("{monotone} monotone runs, {violations} violations"))
}

fn pendulum_map(kind: SolverKind) -> RegionStats {
    let sys = builtin::pendulum();
    let target = DVector::from_vec(vec![PI, 0.0]);
    let spec = GridSpec {
        center: vec![PI, 0.0],
        half_widths: vec![PI, 2.0],
        resolution: vec![41, 41],
        swept_dims: vec![0, 1],
    };
    let map =
        map_region(kind, &sys, &spec, &target, 1e-4, &SolverConfig::default(), |c| Some(DVector::from_row_slice(c)))
            .unwrap();
    connected_stats(&map)
}

fn criterion_07_pendulum_basin_ordering() -> Verdict {
    let t = Instant::now();
    let nr = pendulum_map(SolverKind::Nr);
    let qgs = pendulum_map(SolverKind::QgsPsitc);
    let secs = t.elapsed().as_secs_f64();
    let more = qgs.total_target_points > nr.total_target_points;
    let tighter = qgs.outside_fraction() < nr.outside_fraction();
    (
        more && tighter && secs < 120.0,
        format!(
            "target nodes QGS {} vs NR {}; outside-connected fraction QGS {:.4} vs NR {:.4}; {secs:.1} s",
            qgs.total_target_points,
            nr.total_target_points,
            qgs.outside_fraction(),
            nr.outside_fraction()
        ),
    )
}

fn criterion_08_wscc_end_to_end() -> Verdict {
    let t = Instant::now();
    let pf = power_flow(&wscc9()).unwrap();
    let pf_ok = pf.report.max_mismatch <= 1e-8;
    let batch = wscc_batch();

    let mut found = Vec::new();
    for (id, sys) in &batch.systems {
        let label = format!("c{id}");
        let ok = batch.report.runs.iter().filter(|r| r.case == label && r.converged()).any(|r| {
            let x = DVector::from_vec(r.solution.clone());
            let f = eval_residual(sys, &x).unwrap().norm();
            let sep = verify_qgs_sep(&QgsSystem::new(sys), &x, 1e-6).unwrap();
            f <= 1e-6 && classify_solution(sys, &x, 1e-6) == Classification::Type1 && sep.positive_definite
        });
        found.push(ok);
    }
    let avg: Vec<(SolverKind, f64)> =
        SolverKind::ALL.iter().map(|&k| (k, average_iterations(&batch.report, k))).collect();
    let get = |k: SolverKind| avg.iter().find(|(s, _)| *s == k).unwrap().1;
    let nr = get(SolverKind::Nr);
    let qgs = get(SolverKind::QgsPsitc);
    let cnr = get(SolverKind::Cnr);
    let cnr_largest = avg.iter().filter(|(k, _)| *k != SolverKind::Cnr).all(|(_, v)| cnr > *v);
    let secs = t.elapsed().as_secs_f64() + batch.elapsed;
    let pass = pf_ok
        && found.iter().all(|&b| b)
        && (2.0..=8.0).contains(&nr)
        && (5.0..=20.0).contains(&qgs)
        && cnr_largest
        && secs < 60.0;
    let table: Vec<String> = avg.iter().map(|(k, v)| format!("{k} {v:.1}")).collect();
    (
        pass,
        format!(
            "mismatch {:.1e}; type-1 found per contingency {found:?}; average iterations {}; {secs:.1} s",
            pf.report.max_mismatch,
            table.join(", ")
        ),
    )
}

fn criterion_09_jacobian_approximation_speedup() -> Verdict {
    let batch = wscc_batch();
    let starts = wscc9_starts();
    let cases: Vec<BenchmarkCase> = batch
        .systems
        .iter()
        .zip(&starts)
        .map(|((id, sys), s)| BenchmarkCase {
            label: format!("c{id}"),
            system: sys,
            x0: DVector::from_vec(s.x0.clone()),
        })
        .collect();
    let cfg = SolverConfig::default();
    let (mut exact, mut approx) = (0.0, 0.0);
    for _ in 0..3 {
        let r = run_benchmark(&cases, &[SolverKind::PsitcExact, SolverKind::QgsPsitc], &cfg);
        for run in &r.runs {
            assert!(run.converged(), "{} on {} did not converge", run.solver, run.case);
            match run.solver {
                SolverKind::PsitcExact => exact += run.wall_time,
                _ => approx += run.wall_time,
            }
        }
    }
    let ratio = exact / approx;
    (ratio >= 3.0, format!("psitc-exact {exact:.4} s vs qgs-psitc {approx:.4} s, speedup {ratio:.2}x"))
}

fn criterion_10_hybrid_parity() -> Verdict {
    let batch = wscc_batch();
    let hybrid = average_iterations(&batch.report, SolverKind::Hybrid);
    let qgs = average_iterations(&batch.report, SolverKind::QgsPsitc);
    let all = batch.report.average(SolverKind::Hybrid).map_or(0, |a| a.failed_runs) == 0;
    (all && hybrid <= qgs, format!("hybrid {hybrid:.1} vs qgs-psitc {qgs:.1} average iterations"))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Verdict); 10] = [
        (1, criterion_01_gradient_structure),
        (2, criterion_02_qgs_sep_definiteness),
        (3, criterion_03_no_false_convergence),
        (4, criterion_04_step_solvability),
        (5, criterion_05_rate_signatures),
        (6, criterion_06_ser_behavior),
        (7, criterion_07_pendulum_basin_ordering),
        (8, criterion_08_wscc_end_to_end),
        (9, criterion_09_jacobian_approximation_speedup),
        (10, criterion_10_hybrid_parity),
    ];
    let mut failed = Vec::new();
    for (n, check) in criteria {
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(n);
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
