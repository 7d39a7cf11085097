use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use uepflow_core::region::{connected_stats, GridSpec, Outcome, PointRecord, RegionMap};
use uepflow_core::{
    builtin, classify_solution, qgs_psitc_solve, qgs_psitc_step, Classification, FnSystem, LinearStrategy,
    SolverConfig, SolverKind, StepController, StepRule,
};

fn affine(a: DMatrix<f64>, b: DVector<f64>) -> FnSystem {
    let n = a.nrows();
    let a2 = a.clone();
    FnSystem::new("affine", n, move |x| &a * x + &b).with_jacobian(move |_| a2.clone())
}

fn matrix_and_rhs() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (1usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v)),
            prop::collection::vec(-3.0f64..3.0, n).prop_map(DVector::from_vec),
        )
    })
}

proptest! {
    #[test]
    fn step_solves_the_shifted_normal_system((a, b) in matrix_and_rhs(), log_h in -4.0f64..4.0) {
        let h = 10f64.powf(log_h);
        let n = a.nrows();
        let sys = affine(a.clone(), b.clone());
        let x = DVector::zeros(n);
        for strategy in [LinearStrategy::NormalEquations, LinearStrategy::LeastSquares] {
            let s = qgs_psitc_step(&sys, &x, h, strategy).unwrap();
            let lhs = (DMatrix::identity(n, n) / h + a.transpose() * &a) * &s;
            let rhs = -(a.transpose() * &b);
            let scale = 1.0 + rhs.norm() + lhs.norm();
            prop_assert!((lhs - &rhs).norm() <= 1e-8 * scale);
            // A descent direction for ½‖F‖².
            prop_assert!(s.dot(&(a.transpose() * &b)) <= 1e-12 * scale);
        }
    }

    #[test]
    fn ser_never_shrinks_on_decreasing_residuals(
        h0 in 1e-3f64..10.0,
        mut norms in prop::collection::vec(1e-8f64..1e3, 2..30),
    ) {
        norms.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut ctrl = StepController::new(StepRule::Ser, h0, f64::INFINITY);
        ctrl.record_residual(norms[0]);
        let mut prev = ctrl.h();
        for &r in &norms[1..] {
            let h = ctrl.ser_update(r);
            prop_assert!(h >= prev);
            prev = h;
        }
        let expected = h0 * norms[0] / norms[norms.len() - 1];
        prop_assert!((prev - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn ser_respects_the_cap(h_max in 0.5f64..5.0, norms in prop::collection::vec(1e-6f64..1e3, 2..20)) {
        let mut ctrl = StepController::new(StepRule::Ser, 0.1, h_max);
        ctrl.record_residual(norms[0]);
        for &r in &norms[1..] {
            let h = ctrl.ser_update(r);
            prop_assert!(h > 0.0 && h <= h_max);
        }
    }

    #[test]
    fn converged_runs_are_regular_roots(seed in 0u64..200, n in 1usize..5) {
        let sys = builtin::random_polynomial(seed, n);
        let x0 = DVector::zeros(n);
        let cfg = SolverConfig::default();
        let r = qgs_psitc_solve(&sys, &x0, &cfg).unwrap();
        if r.converged() {
            prop_assert_eq!(r.classification, Classification::Type1);
            prop_assert!(r.residual_norm <= cfg.tolerance);
            prop_assert_eq!(classify_solution(&sys, &r.solution_vector(), cfg.tolerance), Classification::Type1);
        }
    }

    #[test]
    fn region_stats_partition_target_nodes(cells in prop::collection::vec(0u8..4, 25)) {
        let spec = GridSpec { center: vec![0.0, 0.0], half_widths: vec![1.0, 1.0], resolution: vec![5, 5], swept_dims: vec![0, 1] };
        let points = cells
            .iter()
            .map(|&c| PointRecord {
                coords: vec![0.0, 0.0],
                outcome: [Outcome::Target, Outcome::OtherSolution, Outcome::Diverged, Outcome::Unresolvable][c as usize],
                iterations: 0,
                residual_norm: 0.0,
            })
            .collect();
        let map = RegionMap {
            solver: SolverKind::Nr,
            spec,
            target: vec![0.0, 0.0],
            match_tolerance: 1e-4,
            config: SolverConfig::default(),
            points,
        };
        let st = connected_stats(&map);
        let targets = cells.iter().filter(|&&c| c == 0).count();
        prop_assert_eq!(st.total_target_points, targets);
        prop_assert_eq!(st.inside_connected + st.outside_connected, targets);
        prop_assert_eq!(st.unresolvable, cells.iter().filter(|&&c| c == 3).count());
        prop_assert_eq!(st.empty, targets == 0);
        let f = st.outside_fraction();
        prop_assert!((0.0..=1.0).contains(&f));
    }
}
