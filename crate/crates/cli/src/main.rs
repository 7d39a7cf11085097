#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use uepflow_core::benchmark::{load_starts, run_benchmark, BenchmarkCase, BenchmarkStart};
use uepflow_core::power::{
    assemble_spm, load_contingencies, power_flow_sep, wscc9, wscc9_contingencies, wscc9_starts, Contingency, PowerCase,
    SpmSystem,
};
use uepflow_core::region::{embed, export_region, map_region, GridSpec, RegionSummary, DEFAULT_MATCH_TOLERANCE};
use uepflow_core::solver::solve;
use uepflow_core::{
    builtin, classify_solution, qgs_field, verify_qgs_sep, Classification, LinearStrategy, NonlinearSystem, QgsSystem,
    SolverConfig, SolverKind, SolverResult, StepRule,
};

#[derive(Parser)]
#[command(name = "uepflow", version, about = "Equilibrium solvers for nonlinear and power systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver from an initial point.
    Solve(SolveArgs),
    /// Map which grid starts converge to a target solution.
    MapRegion(MapArgs),
    /// Solve the pre-fault power flow and initialise the machines.
    PowerFlow(PowerFlowArgs),
    /// Run solvers on every contingency from shared initial points.
    Benchmark(BenchArgs),
    /// Label a point as a type-1, type-2 or type-3 stationary point.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Synthetic system, e.g. `builtin:pendulum` or `builtin:randpoly:7:4`.
    #[arg(long, conflicts_with = "case")]
    system: Option<String>,
    /// Power system case file (JSON). Defaults to the bundled 9-bus case.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Contingency list (JSON). Defaults to the bundled list with the bundled case.
    #[arg(long)]
    contingencies: Option<PathBuf>,
    /// Contingency to apply; without it the base network is used.
    #[arg(long)]
    contingency_id: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepRuleArg {
    Ser,
    StepNorm,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearArg {
    Normal,
    Lsq,
}

#[derive(Args)]
struct ConfigArgs {
    /// Convergence tolerance on the residual 2-norm.
    #[arg(long)]
    tol: Option<f64>,
    /// Initial pseudo-time step.
    #[arg(long)]
    h0: Option<f64>,
    /// Pseudo-time step cap; `inf` for none.
    #[arg(long)]
    h_max: Option<String>,
    /// Iteration budget per run.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Pseudo-time step update rule.
    #[arg(long, value_enum)]
    step_rule: Option<StepRuleArg>,
    /// Linear solve for the QGS step: normal equations or least squares.
    #[arg(long, value_enum)]
    linear: Option<LinearArg>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(t) = self.tol {
            cfg.tolerance = t;
            cfg.hybrid_switch_threshold = cfg.hybrid_switch_threshold.max(t);
        }
        if let Some(h) = self.h0 {
            cfg.h0 = h;
        }
        if let Some(h) = &self.h_max {
            cfg.h_max = match h.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => f64::INFINITY,
                s => s.parse().with_context(|| format!("invalid --h-max `{h}`"))?,
            };
        }
        if let Some(m) = self.max_iter {
            cfg.max_iterations = m;
        }
        if let Some(r) = self.step_rule {
            cfg.step_rule = match r {
                StepRuleArg::Ser => StepRule::Ser,
                StepRuleArg::StepNorm => StepRule::StepNorm,
            };
        }
        if let Some(l) = self.linear {
            cfg.linear_strategy = match l {
                LinearArg::Normal => LinearStrategy::NormalEquations,
                LinearArg::Lsq => LinearStrategy::LeastSquares,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "qgs-psitc")]
    solver: SolverKind,
    /// Initial point: comma list or a file (JSON array, result JSON, or plain numbers).
    /// Power cases default to the pre-fault equilibrium.
    #[arg(long)]
    x0: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Solvers to map (repeatable). Defaults to nr and qgs-psitc.
    #[arg(long)]
    solver: Vec<SolverKind>,
    /// Target solution: comma list or file, e.g. the output of `solve`.
    #[arg(long)]
    target: String,
    /// State coordinates to sweep. Power cases sweep the reduced machine angles.
    #[arg(long, value_delimiter = ',')]
    swept_dims: Option<Vec<usize>>,
    /// Grid center; defaults to the target's swept coordinates.
    #[arg(long, value_delimiter = ',')]
    grid_center: Option<Vec<f64>>,
    /// Half widths of the grid (one value or one per axis). Defaults to π.
    #[arg(long, value_delimiter = ',')]
    grid_half_widths: Option<Vec<f64>>,
    /// Nodes per axis (one value for all axes, or one per axis).
    #[arg(long, value_delimiter = ',', default_value = "41")]
    grid_resolution: Vec<usize>,
    /// Distance within which a converged run counts as reaching the target.
    #[arg(long, default_value_t = DEFAULT_MATCH_TOLERANCE)]
    match_tol: f64,
    /// Output stem; writes `<stem>-<solver>.csv` and `.json`.
    #[arg(long, default_value = "region")]
    out: PathBuf,
}

#[derive(Args)]
struct PowerFlowArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    contingencies: Option<PathBuf>,
    /// Initial points per contingency (JSON). Defaults to the bundled starts.
    #[arg(long)]
    starts: Option<PathBuf>,
    /// Solvers to run (repeatable). Defaults to all.
    #[arg(long)]
    solver: Vec<SolverKind>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    x0: String,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure kinds mapped to exit codes 2 (bad input) and 1 (method failure).
enum Failure {
    Input(anyhow::Error),
    Method(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::MapRegion(a) => cmd_map_region(a),
        Command::PowerFlow(a) => cmd_power_flow(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Classify(a) => cmd_classify(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Method(msg)) => {
            eprintln!("uepflow: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("uepflow: {e:#}");
            ExitCode::from(2)
        }
    }
}

enum Loaded {
    Synthetic(Box<dyn NonlinearSystem>),
    Power { sys: Box<SpmSystem>, default_x0: DVector<f64> },
}

impl Loaded {
    fn system(&self) -> &dyn NonlinearSystem {
        match self {
            Loaded::Synthetic(s) => s.as_ref(),
            Loaded::Power { sys, .. } => sys.as_ref(),
        }
    }

    fn label(&self) -> String {
        self.system().name().to_string()
    }
}

fn load_case(path: Option<&Path>) -> anyhow::Result<PowerCase> {
    match path {
        Some(p) => PowerCase::load(p).with_context(|| format!("cannot load case file {}", p.display())),
        None => Ok(wscc9()),
    }
}

fn load_contingency_list(case_given: bool, path: Option<&Path>) -> anyhow::Result<Vec<Contingency>> {
    match path {
        Some(p) => load_contingencies(p).with_context(|| format!("cannot load contingency file {}", p.display())),
        None if !case_given => Ok(wscc9_contingencies()),
        None => Ok(Vec::new()),
    }
}

fn load_system(args: &SystemArgs) -> anyhow::Result<Loaded> {
    if let Some(spec) = &args.system {
        let name =
            spec.strip_prefix("builtin:").ok_or_else(|| anyhow!("--system expects `builtin:NAME`, got `{spec}`"))?;
        return Ok(Loaded::Synthetic(Box::new(builtin::by_name(name)?)));
    }
    let case = load_case(args.case.as_deref())?;
    let sep = power_flow_sep(&case)?;
    let cont = match args.contingency_id {
        Some(id) => {
            let list = load_contingency_list(args.case.is_some(), args.contingencies.as_deref())?;
            Some(
                list.into_iter()
                    .find(|c| c.id == id)
                    .ok_or_else(|| anyhow!("contingency {id} is not in the contingency list"))?,
            )
        }
        None => None,
    };
    let sys = assemble_spm(&case, cont.as_ref(), &sep)?;
    let default_x0 = sys.state_from_sep(&sep);
    Ok(Loaded::Power { sys: Box::new(sys), default_x0 })
}

fn parse_numbers(text: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return None;
    }
    parts.iter().map(|p| p.parse().ok()).collect()
}

/// A point given inline, or in a file holding a JSON array, a JSON object
/// with a `solution` field, or plain numbers.
fn parse_point(arg: &str) -> anyhow::Result<Vec<f64>> {
    if let Some(v) = parse_numbers(arg) {
        return Ok(v);
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("cannot read point file {arg}"))?;
    if let Ok(json) = serde_json::from_str::<serde_json::Value>(&text) {
        let arr = match &json {
            serde_json::Value::Object(o) => {
                o.get("solution").or_else(|| o.get("result").and_then(|r| r.get("solution"))).cloned()
            }
            serde_json::Value::Array(_) => Some(json.clone()),
            _ => None,
        };
        if let Some(a) = arr {
            return serde_json::from_value(a).with_context(|| format!("{arg}: expected an array of numbers"));
        }
    }
    parse_numbers(&text).ok_or_else(|| anyhow!("{arg}: no point found"))
}

fn to_vector(v: Vec<f64>, dim: usize, what: &str) -> anyhow::Result<DVector<f64>> {
    if v.len() != dim {
        bail!("{what} has {} entries but the system has dimension {dim}", v.len());
    }
    Ok(DVector::from_vec(v))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display())),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    system: String,
    #[serde(flatten)]
    result: &'a SolverResult,
    config: &'a SolverConfig,
}

fn cmd_solve(a: SolveArgs) -> Outcome {
    let cfg = a.config.resolve()?;
    let loaded = load_system(&a.system)?;
    let sys = loaded.system();
    let x0 = match (&a.x0, &loaded) {
        (Some(s), _) => to_vector(parse_point(s)?, sys.dim(), "--x0")?,
        (None, Loaded::Power { default_x0, .. }) => default_x0.clone(),
        (None, Loaded::Synthetic(_)) => return Err(Failure::Input(anyhow!("--x0 is required for synthetic systems"))),
    };
    let res = solve(a.solver, sys, &x0, &cfg)?;
    emit(&SolveOutput { system: loaded.label(), result: &res, config: &cfg }, a.out.as_deref())?;
    if res.converged() {
        Ok(())
    } else {
        Err(Failure::Method(format!("{} did not converge: {:?}", a.solver, res.status)))
    }
}

fn per_axis<T: Copy>(values: &[T], d: usize, what: &str) -> anyhow::Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        n if n == d => Ok(values.to_vec()),
        n => bail!("{what} has {n} values for {d} swept dimensions"),
    }
}

fn cmd_map_region(a: MapArgs) -> Outcome {
    let cfg = a.config.resolve()?;
    let loaded = load_system(&a.system)?;
    let sys = loaded.system();
    let target = to_vector(parse_point(&a.target)?, sys.dim(), "--target")?;
    let swept = match (&a.swept_dims, &loaded) {
        (Some(d), _) => d.clone(),
        (None, Loaded::Power { sys, .. }) => (0..sys.layout().machines - 1).collect(),
        (None, Loaded::Synthetic(s)) => (0..s.dim().min(2)).collect(),
    };
    if let (Loaded::Power { sys, .. }, Some(_)) = (&loaded, &a.swept_dims) {
        let k = sys.layout().machines - 1;
        if swept != (0..k).collect::<Vec<_>>() {
            return Err(Failure::Input(anyhow!("power cases sweep exactly the reduced machine angles 0..{k}")));
        }
    }
    let d = swept.len();
    let spec = GridSpec {
        center: match &a.grid_center {
            Some(c) => per_axis(c, d, "--grid-center")?,
            None => swept.iter().map(|&i| target.get(i).copied().unwrap_or(f64::NAN)).collect(),
        },
        half_widths: per_axis(
            a.grid_half_widths.as_deref().unwrap_or(&[std::f64::consts::PI]),
            d,
            "--grid-half-widths",
        )?,
        resolution: per_axis(&a.grid_resolution, d, "--grid-resolution")?,
        swept_dims: swept.clone(),
    };
    spec.validate()?;

    let residual = uepflow_core::system::eval_residual(sys, &target)?.norm();
    if residual > cfg.tolerance {
        return Err(Failure::Method(format!(
            "target is not a solution: residual norm {residual:e} exceeds {}",
            cfg.tolerance
        )));
    }
    let solvers = if a.solver.is_empty() { vec![SolverKind::Nr, SolverKind::QgsPsitc] } else { a.solver.clone() };
    let mut summaries: Vec<RegionSummary> = Vec::new();
    for kind in solvers {
        let map = match &loaded {
            Loaded::Synthetic(s) => {
                map_region(kind, s.as_ref(), &spec, &target, a.match_tol, &cfg, |c| Some(embed(&target, &swept, c)))?
            }
            Loaded::Power { sys, .. } => map_region(kind, sys.as_ref(), &spec, &target, a.match_tol, &cfg, |c| {
                sys.grid_initial_state(c, &target)
            })?,
        };
        let stem = PathBuf::from(format!("{}-{}", a.out.display(), kind));
        summaries.push(export_region(&map, &stem)?);
    }
    emit(&summaries, None)?;
    Ok(())
}

#[derive(Serialize)]
struct PowerFlowOutput<'a> {
    case: &'a str,
    sep: &'a uepflow_core::power::SepSolution,
    model_residual_norm: f64,
}

fn cmd_power_flow(a: PowerFlowArgs) -> Outcome {
    let case = load_case(a.case.as_deref())?;
    let sep = match power_flow_sep(&case) {
        Ok(s) => s,
        Err(e @ uepflow_core::Error::PowerFlowDiverged { .. }) => return Err(Failure::Method(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let model_residual_norm = match assemble_spm(&case, None, &sep) {
        Ok(sys) => sys.residual(&sys.state_from_sep(&sep)).norm(),
        Err(_) => f64::NAN,
    };
    emit(&PowerFlowOutput { case: &case.name, sep: &sep, model_residual_norm }, a.out.as_deref())?;
    Ok(())
}

fn cmd_benchmark(a: BenchArgs) -> Outcome {
    let cfg = a.config.resolve()?;
    let case = load_case(a.case.as_deref())?;
    let conts = load_contingency_list(a.case.is_some(), a.contingencies.as_deref())?;
    let starts: Vec<BenchmarkStart> = match &a.starts {
        Some(p) => load_starts(p).with_context(|| format!("cannot load starts file {}", p.display()))?,
        None if a.case.is_none() => wscc9_starts(),
        None => return Err(Failure::Input(anyhow!("--starts is required with --case"))),
    };
    let sep = power_flow_sep(&case)?;
    let mut systems = Vec::new();
    for s in &starts {
        let c = conts
            .iter()
            .find(|c| c.id == s.contingency)
            .ok_or_else(|| anyhow!("start refers to unknown contingency {}", s.contingency))?;
        let sys = assemble_spm(&case, Some(c), &sep)?;
        let x0 = to_vector(s.x0.clone(), sys.dim(), "start")?;
        systems.push((format!("contingency {}", c.id), sys, x0));
    }
    let cases: Vec<BenchmarkCase> = systems
        .iter()
        .map(|(label, sys, x0)| BenchmarkCase { label: label.clone(), system: sys, x0: x0.clone() })
        .collect();
    let solvers = if a.solver.is_empty() { SolverKind::ALL.to_vec() } else { a.solver.clone() };
    let report = run_benchmark(&cases, &solvers, &cfg);
    eprintln!("{:<12} {:>10} {:>14} {:>10}", "solver", "avg iter", "avg time (s)", "failures");
    for avg in &report.averages {
        let it = avg.avg_iterations.map_or("-".into(), |v| format!("{v:.2}"));
        let t = avg.avg_wall_time.map_or("-".into(), |v| format!("{v:.6}"));
        eprintln!("{:<12} {:>10} {:>14} {:>10}", avg.solver.as_str(), it, t, avg.failed_runs);
    }
    emit(&report, a.out.as_deref())?;
    Ok(())
}

#[derive(Serialize)]
struct ClassifyOutput {
    classification: Classification,
    residual_norm: f64,
    gradient_norm: f64,
    positive_definite: bool,
    tolerance: f64,
}

fn cmd_classify(a: ClassifyArgs) -> Outcome {
    if !(a.tol > 0.0) {
        return Err(Failure::Input(anyhow!("--tol must be positive")));
    }
    let loaded = load_system(&a.system)?;
    let sys = loaded.system();
    let x = to_vector(parse_point(&a.x0)?, sys.dim(), "--x0")?;
    let q = QgsSystem::new(sys);
    let report = verify_qgs_sep(&q, &x, a.tol)?;
    let field = qgs_field(&q, &x)?;
    let out = ClassifyOutput {
        classification: classify_solution(sys, &x, a.tol),
        residual_norm: report.residual_norm,
        gradient_norm: field.norm(),
        positive_definite: report.positive_definite,
        tolerance: a.tol,
    };
    emit(&out, a.out.as_deref())?;
    Ok(())
}
