//! Searches the post-fault 9-bus systems for equilibria, picks the type-1
//! UEP nearest each post-fault SEP and writes benchmark starts that sit a
//! fixed angle offset away from it.
//!
//! `cargo run --release -p uepflow-core --example derive_starts [-- OUT.json]`

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use uepflow_core::power::{wscc9_system, SpmSystem};
use uepflow_core::{newton_solve, NonlinearSystem, SolverConfig};

const GRID: usize = 41;
const OFFSET: [f64; 2] = [0.1, -0.1];

/// Number of unstable modes of `M δ̈ = f(δ)` with the network eliminated.
fn unstable_modes(sys: &SpmSystem, x: &DVector<f64>) -> usize {
    let j = sys.analytic_jacobian(x).expect("analytic jacobian");
    let k = sys.layout().machines - 1;
    let a = j.rows(k, j.nrows() - k).columns(k, j.ncols() - k).clone_owned();
    let coupling = j.rows(k, j.nrows() - k).columns(0, k).clone_owned();
    let Some(elim) = a.lu().solve(&coupling) else { return usize::MAX };
    let schur = j.view((0, 0), (k, k)) - j.rows(0, k).columns(k, j.ncols() - k) * elim;
    let minv = DMatrix::from_diagonal(&DVector::from_iterator(k, sys.inertia()[1..].iter().map(|m| 1.0 / m)));
    (minv * schur).complex_eigenvalues().iter().filter(|z| z.re > 1e-9).count()
}

#[derive(Serialize)]
struct Start {
    contingency: u32,
    uep: Vec<f64>,
    x0: Vec<f64>,
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "crates/core/data/wscc9_starts.json".into());
    let cfg = SolverConfig::default();
    let mut starts = Vec::new();
    for cid in 1..=5 {
        let (sys, sep) = wscc9_system(Some(cid)).unwrap();
        let sep_post = newton_solve(&sys, &sys.state_from_sep(&sep), &cfg).unwrap().solution_vector();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..GRID {
            for j in 0..GRID {
                let step = 2.0 * PI / (GRID - 1) as f64;
                let p = [sep_post[0] - PI + step * i as f64, sep_post[1] - PI + step * j as f64];
                let Some(x0) = sys.grid_initial_state(&p, &sep_post) else { continue };
                let r = newton_solve(&sys, &x0, &cfg).unwrap();
                if !r.converged() {
                    continue;
                }
                let x = r.solution_vector();
                let dist = (x.rows(0, 2) - sep_post.rows(0, 2)).norm();
                if dist < 1e-3 || unstable_modes(&sys, &x) != 1 {
                    continue;
                }
                if best.as_ref().is_none_or(|(d, _)| dist < *d - 1e-9) {
                    best = Some((dist, x));
                }
            }
        }
        let (dist, uep) = best.expect("a type-1 UEP exists");
        // Re-derive the UEP from its own angles so the bus angles sit on the
        // branch nearest the post-fault SEP.
        let uep = sys.grid_initial_state(&[uep[0], uep[1]], &sep_post).unwrap();
        let tight = SolverConfig { tolerance: 1e-12, ..cfg.clone() };
        let uep = newton_solve(&sys, &uep, &tight).unwrap().solution_vector();
        let x0 = sys.grid_initial_state(&[uep[0] + OFFSET[0], uep[1] + OFFSET[1]], &uep).unwrap();
        println!(
            "contingency {cid}: UEP angles {:?} at distance {dist:.3}, |F(uep)| = {:.2e}",
            sys.machine_angles(&uep),
            sys.residual(&uep).norm()
        );
        starts.push(Start { contingency: cid, uep: uep.iter().copied().collect(), x0: x0.iter().copied().collect() });
    }
    std::fs::write(&out, serde_json::to_string_pretty(&starts).unwrap()).unwrap();
    println!("wrote {out}");
}
