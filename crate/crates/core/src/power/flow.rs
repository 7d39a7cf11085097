use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::case::{BusKind, PowerCase};
use super::spm::coi_quantities;
use super::ybus::build_ybus;
use crate::error::{Error, Result};
use crate::solver::{newton_solve, SolverConfig, Status};
use crate::system::{FdConfig, NonlinearSystem};

/// Power-flow convergence threshold on the 2-norm of the P/Q mismatch.
pub const POWER_FLOW_TOLERANCE: f64 = 1e-10;
const POWER_FLOW_MAX_ITERATIONS: usize = 30;

/// Polar power-flow mismatch. Unknowns are the angles of all non-slack buses
/// followed by the magnitudes of all load buses.
struct PowerFlowEquations {
    ybus: DMatrix<Complex64>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    v_fixed: Vec<f64>,
    angle_buses: Vec<usize>,
    magnitude_buses: Vec<usize>,
}

impl PowerFlowEquations {
    fn new(case: &PowerCase) -> Result<Self> {
        let slack = case.slack_index();
        let mut p_spec = Vec::new();
        let mut q_spec = Vec::new();
        let mut v_fixed = Vec::new();
        let mut angle_buses = Vec::new();
        let mut magnitude_buses = Vec::new();
        for (k, b) in case.buses.iter().enumerate() {
            p_spec.push(b.p_gen.unwrap_or(0.0) - b.p_load);
            q_spec.push(-b.q_load);
            v_fixed.push(b.v_set.unwrap_or(1.0));
            if k != slack {
                angle_buses.push(k);
            }
            if b.kind == BusKind::Load {
                magnitude_buses.push(k);
            }
        }
        Ok(Self { ybus: build_ybus(case)?, p_spec, q_spec, v_fixed, angle_buses, magnitude_buses })
    }

    fn unpack(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let m = self.p_spec.len();
        let mut theta = vec![0.0; m];
        let mut v = self.v_fixed.clone();
        for (i, &k) in self.angle_buses.iter().enumerate() {
            theta[k] = x[i];
        }
        let off = self.angle_buses.len();
        for (i, &k) in self.magnitude_buses.iter().enumerate() {
            v[k] = x[off + i];
        }
        (theta, v)
    }

    fn start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        let off = self.angle_buses.len();
        for i in 0..self.magnitude_buses.len() {
            x[off + i] = 1.0;
        }
        x
    }
}

/// Complex power injected at every bus.
fn injections(ybus: &DMatrix<Complex64>, theta: &[f64], v: &[f64]) -> Vec<Complex64> {
    let u = DVector::from_iterator(v.len(), v.iter().zip(theta).map(|(&vm, &th)| Complex64::from_polar(vm, th)));
    let i = ybus * &u;
    u.iter().zip(i.iter()).map(|(uk, ik)| uk * ik.conj()).collect()
}

impl NonlinearSystem for PowerFlowEquations {
    fn dim(&self) -> usize {
        self.angle_buses.len() + self.magnitude_buses.len()
    }

    fn name(&self) -> &str {
        "power-flow"
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let (theta, v) = self.unpack(x);
        let s = injections(&self.ybus, &theta, &v);
        let p = self.angle_buses.iter().map(|&k| self.p_spec[k] - s[k].re);
        let q = self.magnitude_buses.iter().map(|&k| self.q_spec[k] - s[k].im);
        DVector::from_iterator(self.dim(), p.chain(q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowReport {
    pub iterations: usize,
    /// Largest absolute P/Q mismatch at the solution.
    pub max_mismatch: f64,
    /// Mismatch 2-norm per iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Net complex injection `P + jQ` per bus, split into parts.
    pub p_injection: Vec<f64>,
    pub q_injection: Vec<f64>,
    pub report: PowerFlowReport,
}

/// Newton power flow on the case network from a flat start.
pub fn power_flow(case: &PowerCase) -> Result<PowerFlowSolution> {
    case.validate()?;
    let eqs = PowerFlowEquations::new(case)?;
    let cfg = SolverConfig {
        tolerance: POWER_FLOW_TOLERANCE,
        hybrid_switch_threshold: POWER_FLOW_TOLERANCE,
        max_iterations: POWER_FLOW_MAX_ITERATIONS,
        fd: FdConfig::central(),
        ..Default::default()
    };
    let res = newton_solve(&eqs, &eqs.start(), &cfg)?;
    let trace: Vec<f64> = res.trace.iter().map(|t| t.residual_norm).collect();
    if res.status != Status::Converged {
        return Err(Error::PowerFlowDiverged { iterations: res.iterations, trace });
    }
    let x = res.solution_vector();
    let max_mismatch = eqs.residual(&x).amax();
    let (theta, v) = eqs.unpack(&x);
    let s = injections(&eqs.ybus, &theta, &v);
    Ok(PowerFlowSolution {
        v,
        theta,
        p_injection: s.iter().map(|c| c.re).collect(),
        q_injection: s.iter().map(|c| c.im).collect(),
        report: PowerFlowReport { iterations: res.iterations, max_mismatch, trace },
    })
}

/// Pre-fault stable equilibrium in the centre-of-inertia frame, together
/// with the classical machine internals it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepSolution {
    /// COI-relative rotor angles of all machines.
    pub delta: Vec<f64>,
    /// COI-relative bus angles.
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    /// Internal EMF magnitude behind `X'd`.
    pub e_q: Vec<f64>,
    /// Mechanical power, equal to electrical output at this point.
    pub pm: Vec<f64>,
    /// COI angle of the power-flow solution, removed from all angles above.
    pub delta0: f64,
    pub flow: PowerFlowSolution,
}

/// Runs the power flow and initialises the machines from terminal
/// conditions: `E'∠δ = V∠θ + jX'd·I`, `Pm = Pe`.
pub fn power_flow_sep(case: &PowerCase) -> Result<SepSolution> {
    let flow = power_flow(case)?;
    let buses = case.machine_buses();
    let mut delta = Vec::new();
    let mut e_q = Vec::new();
    let mut pm = Vec::new();
    for (mach, &k) in case.machines.iter().zip(&buses) {
        let bus = &case.buses[k];
        let s_gen = Complex64::new(flow.p_injection[k] + bus.p_load, flow.q_injection[k] + bus.q_load);
        let u = Complex64::from_polar(flow.v[k], flow.theta[k]);
        let current = (s_gen / u).conj();
        let e = u + Complex64::new(0.0, mach.xd_prime) * current;
        delta.push(e.arg());
        e_q.push(e.norm());
        pm.push((e * current.conj()).re);
        for (given, derived, what) in [(mach.pm, pm[pm.len() - 1], "pm"), (mach.e_q, e_q[e_q.len() - 1], "e_q")] {
            if let Some(g) = given {
                if (g - derived).abs() > 1e-6 {
                    log::warn!(
                        "machine at bus {}: supplied {what} = {g} replaced by {derived} from the power flow",
                        mach.bus
                    );
                }
            }
        }
    }
    let coi = coi_quantities(&delta, &vec![0.0; delta.len()], &case.inertias());
    let theta = flow.theta.iter().map(|t| t - coi.delta0).collect();
    Ok(SepSolution { delta: coi.delta_tilde, theta, v: flow.v.clone(), e_q, pm, delta0: coi.delta0, flow })
}
