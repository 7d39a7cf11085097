use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default)]
    pub b_shunt: f64,
    /// Voltage magnitude setpoint (generator buses).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set: Option<f64>,
    /// Scheduled real generation (non-slack generator buses).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_gen: Option<f64>,
    #[serde(default)]
    pub slack: bool,
}

fn in_service_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Half of the total line-charging susceptance.
    #[serde(default)]
    pub b_half: f64,
    #[serde(default = "in_service_default")]
    pub in_service: bool,
}

impl Line {
    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

/// Whether `Machine::inertia` holds the inertia constant `H` (seconds) or
/// `M = 2H/ω_s` directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InertiaKind {
    H,
    #[default]
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub bus: usize,
    pub inertia: f64,
    #[serde(default)]
    pub inertia_kind: InertiaKind,
    pub damping: f64,
    pub xd_prime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_q: Option<f64>,
}

fn freq_default() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    #[serde(default = "freq_default")]
    pub freq_hz: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub machines: Vec<Machine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub id: u32,
    /// Faulted bus. Carried for reporting only.
    pub fault_bus: usize,
    pub from: usize,
    pub to: usize,
}

/// Relative tolerance on `D_i / M_i` uniformity.
const DAMPING_RATIO_TOL: f64 = 1e-9;

impl PowerCase {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let case: PowerCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses.iter().position(|b| b.slack).expect("validated case has a slack bus")
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * PI * self.freq_hz
    }

    /// `M_i` in p.u.·s².
    pub fn machine_m(&self, i: usize) -> f64 {
        let m = &self.machines[i];
        match m.inertia_kind {
            InertiaKind::M => m.inertia,
            InertiaKind::H => 2.0 * m.inertia / self.omega_s(),
        }
    }

    pub fn inertias(&self) -> Vec<f64> {
        (0..self.machine_count()).map(|i| self.machine_m(i)).collect()
    }

    /// Bus index of every machine, in machine order.
    pub fn machine_buses(&self) -> Vec<usize> {
        self.machines.iter().map(|m| self.bus_index(m.bus).expect("validated")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCase(msg));
        if !(self.base_mva > 0.0) || !(self.freq_hz > 0.0) {
            return bad("base_mva and freq_hz must be positive".into());
        }
        if self.buses.is_empty() || self.machines.is_empty() {
            return bad("a case needs at least one bus and one machine".into());
        }
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return bad(format!("duplicate bus id {}", b.id));
            }
            let finite = [b.p_load, b.q_load, b.b_shunt].iter().all(|v| v.is_finite());
            if !finite {
                return bad(format!("bus {} has non-finite data", b.id));
            }
            if b.kind == BusKind::Generator && b.v_set.is_none_or(|v| !(v > 0.0)) {
                return bad(format!("generator bus {} needs a positive v_set", b.id));
            }
            if b.kind == BusKind::Generator && !b.slack && b.p_gen.is_none() {
                return bad(format!("generator bus {} needs p_gen", b.id));
            }
            if b.slack && b.kind != BusKind::Generator {
                return bad(format!("slack bus {} must be a generator bus", b.id));
            }
        }
        match self.buses.iter().filter(|b| b.slack).count() {
            1 => {}
            k => return bad(format!("expected exactly one slack bus, found {k}")),
        }
        for l in &self.lines {
            if !ids.contains(&l.from) || !ids.contains(&l.to) || l.from == l.to {
                return bad(format!("line {}-{} references unknown or identical buses", l.from, l.to));
            }
            if ![l.r, l.x, l.b_half].iter().all(|v| v.is_finite()) {
                return bad(format!("line {}-{} has non-finite data", l.from, l.to));
            }
        }
        let mut seen = HashSet::new();
        for m in &self.machines {
            match self.buses.iter().find(|b| b.id == m.bus) {
                Some(b) if b.kind == BusKind::Generator => {}
                _ => return bad(format!("machine at bus {} needs an existing generator bus", m.bus)),
            }
            if !seen.insert(m.bus) {
                return bad(format!("more than one machine at bus {}", m.bus));
            }
            if !(m.inertia > 0.0) || !(m.xd_prime > 0.0) || !(m.damping >= 0.0) {
                return bad(format!("machine at bus {} needs M > 0, X'd > 0 and D >= 0", m.bus));
            }
        }
        if let Some(b) = self.buses.iter().find(|b| b.kind == BusKind::Generator && !seen.contains(&b.id)) {
            return bad(format!("generator bus {} has no machine", b.id));
        }
        let ratios: Vec<f64> =
            (0..self.machine_count()).map(|i| self.machines[i].damping / self.machine_m(i)).collect();
        let r0 = ratios[0];
        if ratios.iter().any(|r| (r - r0).abs() > DAMPING_RATIO_TOL * r0.abs().max(1.0)) {
            return bad(format!("damping must be uniform (D/M identical across machines), got {ratios:?}"));
        }
        Ok(())
    }

    /// Bus ids reachable from the first bus through in-service lines.
    fn reachable(&self) -> HashSet<usize> {
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for l in self.lines.iter().filter(|l| l.in_service) {
            adj.entry(l.from).or_default().push(l.to);
            adj.entry(l.to).or_default().push(l.from);
        }
        let start = self.buses[0].id;
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for &n in adj.get(&b).into_iter().flatten() {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Copy of the case with the contingency's line taken out of service. Fails
    /// with [`Error::Islanded`] naming the smaller component if the network splits.
    pub fn apply_contingency(&self, c: &Contingency) -> Result<PowerCase> {
        let mut post = self.clone();
        let line = post.lines.iter_mut().find(|l| l.in_service && l.connects(c.from, c.to)).ok_or_else(|| {
            Error::InvalidCase(format!("contingency {}: no in-service line {}-{}", c.id, c.from, c.to))
        })?;
        line.in_service = false;
        let reach = post.reachable();
        if reach.len() < post.buses.len() {
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                post.buses.iter().map(|b| b.id).partition(|id| reach.contains(id));
            // Report the smaller side.
            let mut island = if outside.len() <= inside.len() { outside } else { inside };
            island.sort_unstable();
            return Err(Error::Islanded { from: c.from, to: c.to, island });
        }
        Ok(post)
    }
}

pub fn contingencies_from_json_str(text: &str) -> Result<Vec<Contingency>> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_contingencies(path: impl AsRef<Path>) -> Result<Vec<Contingency>> {
    contingencies_from_json_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_bus() -> PowerCase {
        PowerCase {
            name: "two-bus".into(),
            base_mva: 100.0,
            freq_hz: 60.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Generator,
                    p_load: 0.0,
                    q_load: 0.0,
                    b_shunt: 0.0,
                    v_set: Some(1.0),
                    p_gen: None,
                    slack: true,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Load,
                    p_load: 0.5,
                    q_load: 0.0,
                    b_shunt: 0.0,
                    v_set: None,
                    p_gen: None,
                    slack: false,
                },
            ],
            lines: vec![Line { from: 1, to: 2, r: 0.0, x: 0.1, b_half: 0.0, in_service: true }],
            machines: vec![Machine {
                bus: 1,
                inertia: 0.1,
                inertia_kind: InertiaKind::M,
                damping: 0.01,
                xd_prime: 0.2,
                pm: None,
                e_q: None,
            }],
        }
    }

    #[test]
    fn two_bus_is_valid() {
        two_bus().validate().unwrap();
    }

    #[test]
    fn rejects_bad_machines() {
        let mut c = two_bus();
        c.machines[0].xd_prime = 0.0;
        assert!(c.validate().is_err());
        let mut c = two_bus();
        c.machines[0].bus = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn damping_must_be_uniform() {
        let mut c = two_bus();
        c.buses[1].kind = BusKind::Generator;
        c.buses[1].v_set = Some(1.0);
        c.buses[1].p_gen = Some(0.0);
        c.machines.push(Machine {
            bus: 2,
            inertia: 0.2,
            inertia_kind: InertiaKind::M,
            damping: 0.02,
            xd_prime: 0.2,
            pm: None,
            e_q: None,
        });
        c.validate().unwrap();
        c.machines[1].damping = 0.021;
        assert!(matches!(c.validate(), Err(Error::InvalidCase(_))));
    }

    #[test]
    fn inertia_constant_conversion() {
        let mut c = two_bus();
        c.machines[0].inertia = 23.64;
        c.machines[0].inertia_kind = InertiaKind::H;
        c.machines[0].damping = 0.1 * 2.0 * 23.64 / (120.0 * PI);
        c.validate().unwrap();
        assert!((c.machine_m(0) - 47.28 / (120.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn contingency_errors() {
        let c = two_bus();
        let cont = Contingency { id: 1, fault_bus: 1, from: 2, to: 1 };
        match c.apply_contingency(&cont) {
            Err(Error::Islanded { island, .. }) => assert_eq!(island, vec![2]),
            other => panic!("{other:?}"),
        }
        let mut off = c.clone();
        off.lines[0].in_service = false;
        assert!(matches!(off.apply_contingency(&cont), Err(Error::InvalidCase(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = two_bus();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(PowerCase::from_json_str(&text).unwrap(), c);
    }
}
