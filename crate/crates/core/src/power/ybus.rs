use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::PowerCase;
use crate::error::{Error, Result};

/// Lowest bus voltage accepted when converting loads to impedances.
pub const MIN_LOAD_VOLTAGE: f64 = 0.1;

/// Bus admittance matrix over in-service lines and bus shunts, indexed in
/// bus order.
pub fn build_ybus(case: &PowerCase) -> Result<DMatrix<Complex64>> {
    let m = case.bus_count();
    let mut y = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for l in case.lines.iter().filter(|l| l.in_service) {
        let z = Complex64::new(l.r, l.x);
        if z.norm() == 0.0 {
            return Err(Error::InvalidCase(format!("line {}-{} has zero impedance", l.from, l.to)));
        }
        let ys = z.inv();
        let charging = Complex64::new(0.0, l.b_half);
        let (f, t) = (case.bus_index(l.from).expect("validated"), case.bus_index(l.to).expect("validated"));
        y[(f, f)] += ys + charging;
        y[(t, t)] += ys + charging;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    for (k, b) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(0.0, b.b_shunt);
    }
    Ok(y)
}

/// Adds each load `P + jQ` as the shunt admittance `(P − jQ)/|V|²` at its bus.
pub fn fold_constant_impedance_loads(
    ybus: &DMatrix<Complex64>,
    case: &PowerCase,
    voltages: &[f64],
) -> Result<DMatrix<Complex64>> {
    let mut y = ybus.clone();
    for (k, b) in case.buses.iter().enumerate() {
        if b.p_load == 0.0 && b.q_load == 0.0 {
            continue;
        }
        let v = voltages[k];
        if !(v >= MIN_LOAD_VOLTAGE) {
            return Err(Error::InvalidCase(format!(
                "bus {} voltage {v} is below {MIN_LOAD_VOLTAGE} p.u.; cannot convert its load to an impedance",
                b.id
            )));
        }
        y[(k, k)] += Complex64::new(b.p_load, -b.q_load) / (v * v);
    }
    Ok(y)
}
