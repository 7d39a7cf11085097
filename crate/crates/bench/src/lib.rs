//! Shared fixtures for the solver benchmarks.

use nalgebra::DVector;
use uepflow_core::power::{wscc9_starts, wscc9_system, SpmSystem};

/// Post-fault system and benchmark start for every bundled contingency.
pub fn wscc_cases() -> Vec<(u32, SpmSystem, DVector<f64>)> {
    wscc9_starts()
        .into_iter()
        .map(|s| {
            let (sys, _) = wscc9_system(Some(s.contingency)).expect("bundled case assembles");
            (s.contingency, sys, DVector::from_vec(s.x0))
        })
        .collect()
}
