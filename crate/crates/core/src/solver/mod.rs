//! Newton-type and pseudo-transient solvers for `F(x) = 0`.
//!
//! Five solvers share one configuration and result type:
//!
//! | kind          | iteration                                               |
//! |---------------|---------------------------------------------------------|
//! | `nr`          | `x ← x − DF⁻¹F`                                          |
//! | `cnr`         | one RK4 step of `ẋ = −DF⁻¹F` per iteration               |
//! | `psitc-exact` | `(h⁻¹I + DG)s = −G` on `G = DFᵀF` with `DG` by FD of `Q` |
//! | `qgs-psitc`   | `(h⁻¹I + DFᵀDF)s = −DFᵀF`                                |
//! | `hybrid`      | NR, then `qgs-psitc` restart, then NR to finish          |
//!
//! Every solver terminates on `‖F(x)‖₂ ≤ ε` and only reports `converged` when
//! the point classifies as a regular root (type 1).

mod classify;
mod hybrid;
mod newton;
mod psitc;
mod step;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{FdConfig, NonlinearSystem};

pub use classify::{classify_solution, classify_solution_with};
pub use hybrid::hybrid_solve;
pub use newton::{continuous_newton_solve, newton_solve};
pub use psitc::{psitc_solve, qgs_psitc_solve, qgs_psitc_step, PseudoTransientField, QgsFlow, ResidualFlow};
pub use step::StepController;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Switched evolution relaxation: `h ← min(h·‖G_prev‖/‖G‖, h_max)`.
    Ser,
    /// `h ← min(h·‖x_i − x_{i−1}‖, h_max)`.
    StepNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearStrategy {
    /// Cholesky on `h⁻¹I + DFᵀDF`.
    NormalEquations,
    /// QR on the stacked matrix `[DF; h^{-1/2} I]`.
    LeastSquares,
}

/// Serializes `f64::INFINITY` as the string `"inf"` so configs survive JSON.
pub(crate) mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence threshold on `‖F(x)‖₂`.
    pub tolerance: f64,
    /// Initial pseudo-time step.
    pub h0: f64,
    #[serde(with = "inf_f64")]
    pub h_max: f64,
    pub max_iterations: usize,
    pub step_rule: StepRule,
    pub linear_strategy: LinearStrategy,
    /// Bound on the relative inexactness of inner solves. Direct solves make
    /// this informational only.
    pub inexactness: f64,
    /// RK4 step length for continuous Newton.
    pub cnr_step: f64,
    /// Residual level at which the hybrid solver hands back to NR.
    pub hybrid_switch_threshold: f64,
    /// NR iterations the hybrid solver spends before restarting.
    pub hybrid_nr_budget: usize,
    /// Consecutive near-stationary iterations tolerated with `‖F‖ > ε`.
    pub stagnation_window: usize,
    /// NR/CNR are declared diverged once `‖F‖` exceeds this multiple of its
    /// initial value.
    pub divergence_factor: f64,
    /// NR/CNR are declared diverged once any `|x_i|` exceeds this.
    #[serde(with = "inf_f64")]
    pub divergence_box: f64,
    /// Finite differences for `DF` when a system has no analytic Jacobian.
    pub fd: FdConfig,
    /// Finite differences for the exact QGS Jacobian `DQ`.
    pub exact_fd: FdConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            h0: 0.1,
            h_max: f64::INFINITY,
            max_iterations: 100,
            step_rule: StepRule::Ser,
            linear_strategy: LinearStrategy::NormalEquations,
            inexactness: 0.0,
            cnr_step: 1.0,
            hybrid_switch_threshold: 1e-2,
            hybrid_nr_budget: 20,
            stagnation_window: 5,
            divergence_factor: 1e6,
            divergence_box: f64::INFINITY,
            fd: FdConfig::forward(),
            exact_fd: FdConfig::forward(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.h0 > 0.0) || !self.h0.is_finite() {
            return bad(format!("h0 must be positive and finite, got {}", self.h0));
        }
        if !(self.h_max >= self.h0) {
            return bad(format!("h_max ({}) must be at least h0 ({})", self.h_max, self.h0));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.cnr_step > 0.0) {
            return bad(format!("cnr_step must be positive, got {}", self.cnr_step));
        }
        if !(self.hybrid_switch_threshold >= self.tolerance) {
            return bad(format!(
                "hybrid_switch_threshold ({}) must be at least the tolerance ({})",
                self.hybrid_switch_threshold, self.tolerance
            ));
        }
        if self.stagnation_window == 0 {
            return bad("stagnation_window must be at least 1".into());
        }
        if !(self.inexactness >= 0.0) {
            return bad(format!("inexactness must be non-negative, got {}", self.inexactness));
        }
        if !(self.divergence_factor > 1.0) {
            return bad(format!("divergence_factor must exceed 1, got {}", self.divergence_factor));
        }
        self.fd.validate()?;
        self.exact_fd.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    Diverged,
    SpuriousStationary,
    LinearSolveFailure,
}

/// Stationary-point taxonomy of the QGS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Root of `F` with nonsingular Jacobian.
    Type1,
    /// `DFᵀF = 0` but `F ≠ 0`.
    Type2,
    /// Root of `F` with singular Jacobian.
    Type3,
    NotClassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Nr,
    Cnr,
    PsitcExact,
    QgsPsitc,
    Hybrid,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] =
        [SolverKind::Nr, SolverKind::Cnr, SolverKind::PsitcExact, SolverKind::QgsPsitc, SolverKind::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Nr => "nr",
            SolverKind::Cnr => "cnr",
            SolverKind::PsitcExact => "psitc-exact",
            SolverKind::QgsPsitc => "qgs-psitc",
            SolverKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown solver `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    /// Pseudo-time step used from this iterate (ψtc variants only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Hybrid phase (1 = NR, 2 = QGS-ψtc restart, 3 = NR finish).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub solver: SolverKind,
    pub status: Status,
    pub solution: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub classification: Classification,
    pub trace: Vec<TraceRecord>,
    /// Seconds spent inside the solver loop.
    pub wall_time: f64,
    /// Hybrid only: the phase that ended the run unsuccessfully.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_phase: Option<u8>,
}

impl SolverResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn solution_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.solution)
    }
}

/// Runs the solver selected by `kind`.
pub fn solve(
    kind: SolverKind,
    sys: &dyn NonlinearSystem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    match kind {
        SolverKind::Nr => newton_solve(sys, x0, cfg),
        SolverKind::Cnr => continuous_newton_solve(sys, x0, cfg),
        SolverKind::PsitcExact => psitc_solve(&QgsFlow::new(sys, cfg), x0, cfg),
        SolverKind::QgsPsitc => qgs_psitc_solve(sys, x0, cfg),
        SolverKind::Hybrid => hybrid_solve(sys, x0, cfg),
    }
}

pub(crate) fn check_start(sys: &dyn NonlinearSystem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x0.len() });
    }
    Ok(())
}

/// Status and label for an iterate with `‖F‖ ≤ ε`: converged only if it is a
/// regular root.
pub(crate) fn settle_root(sys: &dyn NonlinearSystem, x: &DVector<f64>, cfg: &SolverConfig) -> (Status, Classification) {
    match classify_solution_with(sys, x, cfg.tolerance, &cfg.fd) {
        Classification::Type1 => (Status::Converged, Classification::Type1),
        other => (Status::SpuriousStationary, other),
    }
}

pub(crate) struct Outcome {
    pub status: Status,
    pub classification: Classification,
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
}

impl Outcome {
    pub fn into_result(self, solver: SolverKind, wall_time: f64) -> SolverResult {
        SolverResult {
            solver,
            status: self.status,
            solution: self.x.iter().copied().collect(),
            residual_norm: self.residual_norm,
            iterations: self.iterations,
            classification: self.classification,
            trace: self.trace,
            wall_time,
            failed_phase: None,
        }
    }
}
