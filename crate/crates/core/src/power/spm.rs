use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::case::{Contingency, PowerCase};
use super::flow::SepSolution;
use super::ybus::{build_ybus, fold_constant_impedance_loads, MIN_LOAD_VOLTAGE};
use crate::error::{Error, Result};
use crate::system::NonlinearSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coi {
    pub delta0: f64,
    pub omega0: f64,
    pub m_total: f64,
    pub delta_tilde: Vec<f64>,
    pub omega_tilde: Vec<f64>,
}

/// Centre-of-inertia angle and speed, and the machine variables relative to
/// them.
pub fn coi_quantities(delta: &[f64], omega: &[f64], m: &[f64]) -> Coi {
    assert!(delta.len() == m.len() && omega.len() == m.len(), "length mismatch");
    let m_total: f64 = m.iter().sum();
    let weighted = |v: &[f64]| v.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() / m_total;
    let delta0 = weighted(delta);
    let omega0 = weighted(omega);
    Coi {
        delta0,
        omega0,
        m_total,
        delta_tilde: delta.iter().map(|d| d - delta0).collect(),
        omega_tilde: omega.iter().map(|w| w - omega0).collect(),
    }
}

/// Position of each variable group in the flat state
/// `x = (δ̃₂…δ̃ₙ, θ̃₁…θ̃ₘ, V₁…Vₘ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub machines: usize,
    pub buses: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.machines - 1 + 2 * self.buses
    }

    pub fn angle_offset(&self) -> usize {
        self.machines - 1
    }

    pub fn voltage_offset(&self) -> usize {
        self.machines - 1 + self.buses
    }

    pub fn labels(&self, bus_ids: &[usize]) -> Vec<String> {
        let d = (2..=self.machines).map(|i| format!("delta{i}"));
        let t = bus_ids.iter().map(|b| format!("theta{b}"));
        let v = bus_ids.iter().map(|b| format!("v{b}"));
        d.chain(t).chain(v).collect()
    }
}

/// Equilibrium equations of the structure-preserving classical model in the
/// COI frame. Rows: `n − 1` swing mismatches (machines 2…n), then the real
/// and the imaginary parts of the `m` bus current balances.
#[derive(Debug, Clone)]
pub struct SpmSystem {
    name: String,
    layout: StateLayout,
    bus_ids: Vec<usize>,
    /// Network admittance with loads folded in and each machine's `1/(jX'd)`
    /// added at its bus.
    y_aug: DMatrix<Complex64>,
    machine_bus: Vec<usize>,
    inertia: Vec<f64>,
    m_total: f64,
    xd_prime: Vec<f64>,
    e_q: Vec<f64>,
    pm: Vec<f64>,
}

impl SpmSystem {
    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn m_total(&self) -> f64 {
        self.m_total
    }

    pub fn labels(&self) -> Vec<String> {
        self.layout.labels(&self.bus_ids)
    }

    /// All `n` COI-relative machine angles, with `δ̃₁ = −Σᵢ₌₂ Mᵢδ̃ᵢ / M₁`.
    pub fn machine_angles(&self, x: &DVector<f64>) -> Vec<f64> {
        self.angles_from_reduced(x.rows(0, self.layout.machines - 1).as_slice())
    }

    fn angles_from_reduced(&self, reduced: &[f64]) -> Vec<f64> {
        let rest: f64 = reduced.iter().zip(&self.inertia[1..]).map(|(d, m)| d * m).sum();
        std::iter::once(-rest / self.inertia[0]).chain(reduced.iter().copied()).collect()
    }

    fn split<'a>(&self, x: &'a DVector<f64>) -> (&'a [f64], &'a [f64]) {
        let s = x.as_slice();
        let (a, v) = (self.layout.angle_offset(), self.layout.voltage_offset());
        (&s[a..v], &s[v..])
    }

    /// Electrical output `E'V sin(δ − θ)/X'd` of every machine.
    fn electrical_power(&self, delta: &[f64], theta: &[f64], v: &[f64]) -> Vec<f64> {
        (0..self.layout.machines)
            .map(|g| {
                let k = self.machine_bus[g];
                self.e_q[g] * v[k] * (delta[g] - theta[k]).sin() / self.xd_prime[g]
            })
            .collect()
    }

    /// Swing mismatches of all `n` machines; they sum to zero identically.
    pub fn swing_mismatches(&self, x: &DVector<f64>) -> Vec<f64> {
        let delta = self.machine_angles(x);
        let (theta, v) = self.split(x);
        let pe = self.electrical_power(&delta, theta, v);
        let p_coi: f64 = self.pm.iter().sum::<f64>() - pe.iter().sum::<f64>();
        (0..self.layout.machines).map(|i| self.pm[i] - pe[i] - self.inertia[i] / self.m_total * p_coi).collect()
    }

    /// Source currents `Σ_g E'_g e^{jδ_g}/(jX'_g)` injected at each bus.
    fn source_currents(&self, delta: &[f64]) -> DVector<Complex64> {
        let mut c = DVector::from_element(self.layout.buses, Complex64::new(0.0, 0.0));
        for g in 0..self.layout.machines {
            c[self.machine_bus[g]] +=
                Complex64::from_polar(self.e_q[g], delta[g]) / Complex64::new(0.0, self.xd_prime[g]);
        }
        c
    }

    fn phasors(theta: &[f64], v: &[f64]) -> DVector<Complex64> {
        DVector::from_iterator(v.len(), v.iter().zip(theta).map(|(&vm, &th)| Complex64::from_polar(vm, th)))
    }

    /// Full state from the reduced machine angles with the network solved
    /// exactly. The network equations are linear in the bus phasors once the
    /// machine angles are fixed. Bus angles take the `2π` branch nearest
    /// `anchor`. `None` when the network is singular or some bus voltage
    /// collapses below the load-conversion floor.
    pub fn grid_initial_state(&self, angle_point: &[f64], anchor: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.layout.machines;
        if angle_point.len() != n - 1 || anchor.len() != self.layout.dim() {
            return None;
        }
        let delta = self.angles_from_reduced(angle_point);
        let u = self.y_aug.clone().lu().solve(&self.source_currents(&delta))?;
        let (anchor_theta, _) = self.split(anchor);
        let mut x = DVector::zeros(self.layout.dim());
        x.rows_mut(0, n - 1).copy_from_slice(angle_point);
        for (k, uk) in u.iter().enumerate() {
            let v = uk.norm();
            if !v.is_finite() || v < MIN_LOAD_VOLTAGE {
                return None;
            }
            let raw = uk.arg();
            let shift = ((anchor_theta[k] - raw) / (2.0 * PI)).round() * 2.0 * PI;
            x[self.layout.angle_offset() + k] = raw + shift;
            x[self.layout.voltage_offset() + k] = v;
        }
        Some(x)
    }

    /// Flat state of a COI-frame equilibrium.
    pub fn state_from_sep(&self, sep: &SepSolution) -> DVector<f64> {
        let iter = sep.delta[1..].iter().chain(&sep.theta).chain(&sep.v).copied();
        DVector::from_iterator(self.layout.dim(), iter)
    }
}

impl NonlinearSystem for SpmSystem {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let (n, m) = (self.layout.machines, self.layout.buses);
        let delta = self.machine_angles(x);
        let (theta, v) = self.split(x);
        let swing = self.swing_mismatches(x);
        let r = &self.y_aug * Self::phasors(theta, v) - self.source_currents(&delta);
        let mut out = DVector::zeros(self.layout.dim());
        for i in 1..n {
            out[i - 1] = swing[i];
        }
        for k in 0..m {
            out[n - 1 + k] = r[k].re;
            out[n - 1 + m + k] = r[k].im;
        }
        out
    }

    fn analytic_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (n, m) = (self.layout.machines, self.layout.buses);
        let delta = self.machine_angles(x);
        let (theta, v) = self.split(x);
        // Columns of the unreduced Jacobian: δ₁…δₙ, θ₁…θₘ, V₁…Vₘ.
        let (td, vd) = (n, n + m);
        let mut full = DMatrix::<f64>::zeros(self.layout.dim(), n + 2 * m);

        // dPe_g for every machine, scattered into a dense row per machine.
        let mut dpe = DMatrix::<f64>::zeros(n, n + 2 * m);
        for g in 0..n {
            let k = self.machine_bus[g];
            let (s, c) = (delta[g] - theta[k]).sin_cos();
            let a = self.e_q[g] / self.xd_prime[g];
            dpe[(g, g)] = a * v[k] * c;
            dpe[(g, td + k)] = -a * v[k] * c;
            dpe[(g, vd + k)] = a * s;
        }
        let total = dpe.row_sum();
        for i in 1..n {
            let w = self.inertia[i] / self.m_total;
            let row = -dpe.row(i) + total.clone() * w;
            full.row_mut(i - 1).copy_from(&row);
        }

        let u = Self::phasors(theta, v);
        let j = Complex64::new(0.0, 1.0);
        for k in 0..m {
            for l in 0..m {
                let y = self.y_aug[(k, l)];
                if y.norm() == 0.0 {
                    continue;
                }
                let d_theta = y * j * u[l];
                let d_v = y * Complex64::from_polar(1.0, theta[l]);
                full[(n - 1 + k, td + l)] = d_theta.re;
                full[(n - 1 + m + k, td + l)] = d_theta.im;
                full[(n - 1 + k, vd + l)] = d_v.re;
                full[(n - 1 + m + k, vd + l)] = d_v.im;
            }
        }
        for g in 0..n {
            let k = self.machine_bus[g];
            let d = -Complex64::from_polar(self.e_q[g], delta[g]) / self.xd_prime[g];
            full[(n - 1 + k, g)] = d.re;
            full[(n - 1 + m + k, g)] = d.im;
        }

        // Eliminate δ₁: ∂/∂δ̃ᵢ = ∂/∂δᵢ − (Mᵢ/M₁) ∂/∂δ₁.
        let mut jac = DMatrix::<f64>::zeros(self.layout.dim(), self.layout.dim());
        let d1 = full.column(0).clone_owned();
        for i in 1..n {
            let col = full.column(i) - &d1 * (self.inertia[i] / self.inertia[0]);
            jac.column_mut(i - 1).copy_from(&col);
        }
        jac.columns_mut(n - 1, 2 * m).copy_from(&full.columns(n, 2 * m));
        Some(jac)
    }
}

/// Post-fault equilibrium system. Loads become constant impedances at the
/// pre-fault voltages in `sep`; machine internals come from `sep`.
pub fn assemble_spm(case: &PowerCase, contingency: Option<&Contingency>, sep: &SepSolution) -> Result<SpmSystem> {
    case.validate()?;
    let n = case.machine_count();
    if n < 2 {
        return Err(Error::InvalidCase("the COI-frame model needs at least two machines".into()));
    }
    if sep.e_q.len() != n || sep.v.len() != case.bus_count() {
        return Err(Error::InvalidCase("equilibrium data do not match the case".into()));
    }
    let post = match contingency {
        Some(c) => case.apply_contingency(c)?,
        None => case.clone(),
    };
    let mut y_aug = fold_constant_impedance_loads(&build_ybus(&post)?, &post, &sep.v)?;
    let machine_bus = post.machine_buses();
    for (g, &k) in machine_bus.iter().enumerate() {
        y_aug[(k, k)] += Complex64::new(0.0, post.machines[g].xd_prime).inv();
    }
    let inertia = post.inertias();
    let name = match contingency {
        Some(c) => format!("{}-c{}", post.name, c.id),
        None => post.name.clone(),
    };
    Ok(SpmSystem {
        name,
        layout: StateLayout { machines: n, buses: post.bus_count() },
        bus_ids: post.buses.iter().map(|b| b.id).collect(),
        y_aug,
        machine_bus,
        m_total: inertia.iter().sum(),
        inertia,
        xd_prime: post.machines.iter().map(|m| m.xd_prime).collect(),
        e_q: sep.e_q.clone(),
        pm: sep.pm.clone(),
    })
}
