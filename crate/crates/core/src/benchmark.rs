//! Batch runs of several solvers from shared initial points.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::solver::{solve, Classification, SolverConfig, SolverKind, Status};
use crate::system::NonlinearSystem;

/// Initial point for one contingency, with the equilibrium it was placed
/// around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStart {
    pub contingency: u32,
    pub uep: Vec<f64>,
    pub x0: Vec<f64>,
}

pub fn starts_from_json_str(text: &str) -> Result<Vec<BenchmarkStart>> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_starts(path: impl AsRef<Path>) -> Result<Vec<BenchmarkStart>> {
    starts_from_json_str(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub case: String,
    pub solver: SolverKind,
    pub status: Option<Status>,
    pub classification: Option<Classification>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub wall_time: f64,
    pub solution: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BenchmarkRun {
    pub fn converged(&self) -> bool {
        self.status == Some(Status::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverAverage {
    pub solver: SolverKind,
    pub converged_runs: usize,
    pub failed_runs: usize,
    /// Over converged runs only; `None` when none converged.
    pub avg_iterations: Option<f64>,
    pub avg_wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub runs: Vec<BenchmarkRun>,
    pub averages: Vec<SolverAverage>,
    pub config: SolverConfig,
}

impl BenchmarkReport {
    pub fn average(&self, solver: SolverKind) -> Option<&SolverAverage> {
        self.averages.iter().find(|a| a.solver == solver)
    }
}

/// One problem in a batch: a label, the system and its start.
pub struct BenchmarkCase<'a> {
    pub label: String,
    pub system: &'a dyn NonlinearSystem,
    pub x0: DVector<f64>,
}

/// Runs every solver on every case, sequentially so timings do not compete.
/// Errors are recorded in the run rather than aborting the batch.
pub fn run_benchmark(cases: &[BenchmarkCase<'_>], solvers: &[SolverKind], cfg: &SolverConfig) -> BenchmarkReport {
    let mut runs = Vec::new();
    for case in cases {
        for &kind in solvers {
            let run = match solve(kind, case.system, &case.x0, cfg) {
                Ok(r) => BenchmarkRun {
                    case: case.label.clone(),
                    solver: kind,
                    status: Some(r.status),
                    classification: Some(r.classification),
                    iterations: r.iterations,
                    residual_norm: r.residual_norm,
                    wall_time: r.wall_time,
                    solution: r.solution,
                    error: None,
                },
                Err(e) => BenchmarkRun {
                    case: case.label.clone(),
                    solver: kind,
                    status: None,
                    classification: None,
                    iterations: 0,
                    residual_norm: f64::NAN,
                    wall_time: 0.0,
                    solution: Vec::new(),
                    error: Some(e.to_string()),
                },
            };
            runs.push(run);
        }
    }
    let averages = solvers
        .iter()
        .map(|&solver| {
            let ok: Vec<&BenchmarkRun> = runs.iter().filter(|r| r.solver == solver && r.converged()).collect();
            let failed = runs.iter().filter(|r| r.solver == solver && !r.converged()).count();
            let mean = |f: fn(&BenchmarkRun) -> f64| {
                (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            SolverAverage {
                solver,
                converged_runs: ok.len(),
                failed_runs: failed,
                avg_iterations: mean(|r| r.iterations as f64),
                avg_wall_time: mean(|r| r.wall_time),
            }
        })
        .collect();
    BenchmarkReport { runs, averages, config: cfg.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn single_row_report() {
        let sys = builtin::quadratic();
        let cases = [BenchmarkCase { label: "q".into(), system: &sys, x0: DVector::from_element(1, 3.0) }];
        let rep = run_benchmark(&cases, &[SolverKind::Nr], &SolverConfig::default());
        assert_eq!(rep.runs.len(), 1);
        let avg = rep.average(SolverKind::Nr).unwrap();
        assert_eq!(avg.converged_runs, 1);
        assert_eq!(avg.avg_iterations, Some(rep.runs[0].iterations as f64));
    }

    #[test]
    fn failures_are_excluded_from_averages() {
        let q = builtin::quadratic();
        let t2 = builtin::type2();
        let cases = [
            BenchmarkCase { label: "q".into(), system: &q, x0: DVector::from_element(1, 3.0) },
            BenchmarkCase { label: "t2".into(), system: &t2, x0: DVector::from_row_slice(&[0.3, 0.0]) },
            BenchmarkCase { label: "bad".into(), system: &q, x0: DVector::from_element(2, 3.0) },
        ];
        let rep = run_benchmark(&cases, &[SolverKind::QgsPsitc], &SolverConfig::default());
        let avg = rep.average(SolverKind::QgsPsitc).unwrap();
        assert_eq!((avg.converged_runs, avg.failed_runs), (1, 2));
        assert_eq!(avg.avg_iterations, Some(rep.runs[0].iterations as f64));
        assert!(rep.runs[2].error.is_some());
    }
}
