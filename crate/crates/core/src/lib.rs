//! Root finding for nonlinear systems through the quotient gradient system,
//! with a structure-preserving power system model and basin mapping.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod builtin;
pub mod error;
pub mod linalg;
pub mod power;
pub mod qgs;
pub mod region;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
pub use qgs::{qgs_field, qgs_jacobian_approx, qgs_jacobian_exact, verify_qgs_sep, DefinitenessReport, QgsSystem};
pub use solver::{
    classify_solution, continuous_newton_solve, hybrid_solve, newton_solve, psitc_solve, qgs_psitc_solve,
    qgs_psitc_step, solve, Classification, LinearStrategy, SolverConfig, SolverKind, SolverResult, Status,
    StepController, StepRule, TraceRecord,
};
pub use system::{FdConfig, FdScheme, FnSystem, NonlinearSystem};
