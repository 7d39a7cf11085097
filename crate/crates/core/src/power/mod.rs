//! Classical-machine power system model with the full network retained.

mod case;
mod flow;
mod spm;
mod ybus;

pub use case::{
    contingencies_from_json_str, load_contingencies, Bus, BusKind, Contingency, InertiaKind, Line, Machine, PowerCase,
};
pub use flow::{power_flow, power_flow_sep, PowerFlowReport, PowerFlowSolution, SepSolution, POWER_FLOW_TOLERANCE};
pub use spm::{assemble_spm, coi_quantities, Coi, SpmSystem, StateLayout};
pub use ybus::{build_ybus, fold_constant_impedance_loads, MIN_LOAD_VOLTAGE};

use crate::error::Result;

const WSCC9_CASE: &str = include_str!("../../data/wscc9.json");
const WSCC9_CONTINGENCIES: &str = include_str!("../../data/wscc9_contingencies.json");
const WSCC9_STARTS: &str = include_str!("../../data/wscc9_starts.json");

/// The bundled WSCC 3-machine, 9-bus case.
pub fn wscc9() -> PowerCase {
    PowerCase::from_json_str(WSCC9_CASE).expect("bundled case is valid")
}

/// The five line-outage contingencies bundled with the 9-bus case.
pub fn wscc9_contingencies() -> Vec<Contingency> {
    contingencies_from_json_str(WSCC9_CONTINGENCIES).expect("bundled contingencies are valid")
}

/// Benchmark initial points for the bundled contingencies, each offset
/// from a type-1 UEP of the post-fault system.
pub fn wscc9_starts() -> Vec<crate::benchmark::BenchmarkStart> {
    crate::benchmark::starts_from_json_str(WSCC9_STARTS).expect("bundled starts are valid")
}

/// Post-fault system for one bundled contingency together with the pre-fault
/// equilibrium it was built from.
pub fn wscc9_system(contingency_id: Option<u32>) -> Result<(SpmSystem, SepSolution)> {
    let case = wscc9();
    let sep = power_flow_sep(&case)?;
    let cont = match contingency_id {
        Some(id) => Some(
            wscc9_contingencies()
                .into_iter()
                .find(|c| c.id == id)
                .ok_or_else(|| crate::Error::InvalidCase(format!("no contingency with id {id}")))?,
        ),
        None => None,
    };
    let sys = assemble_spm(&case, cont.as_ref(), &sep)?;
    Ok((sys, sep))
}
