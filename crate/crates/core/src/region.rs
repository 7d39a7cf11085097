//! Convergence-region maps: which grid starts lead a solver to a given root.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{solve, SolverConfig, SolverKind};
use crate::system::NonlinearSystem;

pub const DEFAULT_MATCH_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    /// Nodes per axis; odd so the center is a node.
    pub resolution: Vec<usize>,
    /// State coordinates that vary, one per axis.
    pub swept_dims: Vec<usize>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.center.len();
        if d == 0 || self.half_widths.len() != d || self.resolution.len() != d || self.swept_dims.len() != d {
            return Err(Error::InvalidConfig(
                "grid center, half-widths, resolution and swept dims must have equal non-zero length".into(),
            ));
        }
        if let Some(r) = self.resolution.iter().find(|&&r| r < 3 || r % 2 == 0) {
            return Err(Error::InvalidConfig(format!("grid resolution must be odd and at least 3, got {r}")));
        }
        if self.half_widths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidConfig("grid half-widths must be positive and finite".into()));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("grid center must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis_value(&self, axis: usize, i: usize) -> f64 {
        let r = self.resolution[axis];
        let t = i as f64 / (r - 1) as f64;
        self.center[axis] - self.half_widths[axis] + 2.0 * self.half_widths[axis] * t
    }

    /// Multi-index of a flat node index, first axis slowest.
    fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.resolution.len()];
        for (a, &r) in self.resolution.iter().enumerate().rev() {
            out[a] = idx % r;
            idx /= r;
        }
        out
    }

    fn flatten(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.resolution).fold(0, |acc, (&i, &r)| acc * r + i)
    }
}

/// All grid nodes, row-major with the first axis slowest.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    Ok((0..spec.len())
        .map(|k| spec.unflatten(k).iter().enumerate().map(|(a, &i)| spec.axis_value(a, i)).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Target,
    OtherSolution,
    Diverged,
    Unresolvable,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Target => "target",
            Outcome::OtherSolution => "other-solution",
            Outcome::Diverged => "diverged",
            Outcome::Unresolvable => "unresolvable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub coords: Vec<f64>,
    pub outcome: Outcome,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Runs `kind` from `x0` and compares the result with `target`. A missing
/// start is unresolvable.
pub fn classify_point(
    kind: SolverKind,
    sys: &dyn NonlinearSystem,
    x0: Option<&DVector<f64>>,
    target: &DVector<f64>,
    tol: f64,
    cfg: &SolverConfig,
) -> (Outcome, usize, f64) {
    let Some(x0) = x0 else {
        return (Outcome::Unresolvable, 0, f64::NAN);
    };
    match solve(kind, sys, x0, cfg) {
        Ok(r) if r.converged() => {
            let outcome =
                if (r.solution_vector() - target).norm() <= tol { Outcome::Target } else { Outcome::OtherSolution };
            (outcome, r.iterations, r.residual_norm)
        }
        Ok(r) => (Outcome::Diverged, r.iterations, r.residual_norm),
        Err(_) => (Outcome::Diverged, 0, f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub solver: SolverKind,
    pub spec: GridSpec,
    pub target: Vec<f64>,
    pub match_tolerance: f64,
    pub config: SolverConfig,
    pub points: Vec<PointRecord>,
}

impl RegionMap {
    pub fn count(&self, outcome: Outcome) -> usize {
        self.points.iter().filter(|p| p.outcome == outcome).count()
    }
}

/// Start that copies `base` and overwrites the swept coordinates.
pub fn embed(base: &DVector<f64>, swept_dims: &[usize], coords: &[f64]) -> DVector<f64> {
    let mut x = base.clone();
    for (&d, &c) in swept_dims.iter().zip(coords) {
        x[d] = c;
    }
    x
}

/// Classifies every grid node. `start` turns swept coordinates into a full
/// state, or `None` when no consistent state exists. Nodes are evaluated in
/// parallel and stored in grid order.
pub fn map_region<S>(
    kind: SolverKind,
    sys: &dyn NonlinearSystem,
    spec: &GridSpec,
    target: &DVector<f64>,
    tol: f64,
    cfg: &SolverConfig,
    start: S,
) -> Result<RegionMap>
where
    S: Fn(&[f64]) -> Option<DVector<f64>> + Sync,
{
    cfg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("match tolerance must be positive, got {tol}")));
    }
    if target.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: target.len() });
    }
    if let Some(&d) = spec.swept_dims.iter().find(|&&d| d >= sys.dim()) {
        return Err(Error::InvalidConfig(format!(
            "swept dimension {d} is out of range for a {}-dimensional system",
            sys.dim()
        )));
    }
    let grid = generate_grid(spec)?;
    let points = grid
        .into_par_iter()
        .map(|coords| {
            let x0 = start(&coords);
            let (outcome, iterations, residual_norm) = classify_point(kind, sys, x0.as_ref(), target, tol, cfg);
            PointRecord { coords, outcome, iterations, residual_norm }
        })
        .collect();
    Ok(RegionMap {
        solver: kind,
        spec: spec.clone(),
        target: target.iter().copied().collect(),
        match_tolerance: tol,
        config: cfg.clone(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionStats {
    pub total_target_points: usize,
    pub inside_connected: usize,
    pub outside_connected: usize,
    pub unresolvable: usize,
    /// Set when no node reached the target.
    pub empty: bool,
}

impl RegionStats {
    pub fn outside_fraction(&self) -> f64 {
        if self.total_target_points == 0 {
            0.0
        } else {
            self.outside_connected as f64 / self.total_target_points as f64
        }
    }
}

/// Size of the orthogonally connected target component containing the node
/// nearest the target, and the count of target nodes outside it.
pub fn connected_stats(map: &RegionMap) -> RegionStats {
    let spec = &map.spec;
    let total = map.count(Outcome::Target);
    let unresolvable = map.count(Outcome::Unresolvable);
    if total == 0 {
        log::warn!("{} region map has no target nodes", map.solver);
        return RegionStats { unresolvable, empty: true, ..Default::default() };
    }
    let seed: Vec<usize> = (0..spec.resolution.len())
        .map(|a| {
            let r = spec.resolution[a];
            let t = map.target[spec.swept_dims[a]];
            let lo = spec.center[a] - spec.half_widths[a];
            let step = 2.0 * spec.half_widths[a] / (r - 1) as f64;
            ((t - lo) / step).round().clamp(0.0, (r - 1) as f64) as usize
        })
        .collect();
    let is_target = |k: usize| map.points[k].outcome == Outcome::Target;
    let start = spec.flatten(&seed);
    let mut inside = 0;
    if is_target(start) {
        let mut seen = vec![false; map.points.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(k) = queue.pop_front() {
            inside += 1;
            let multi = spec.unflatten(k);
            for a in 0..multi.len() {
                for up in [false, true] {
                    let mut nb = multi.clone();
                    match (up, nb[a]) {
                        (false, 0) => continue,
                        (false, i) => nb[a] = i - 1,
                        (true, i) if i + 1 == spec.resolution[a] => continue,
                        (true, i) => nb[a] = i + 1,
                    }
                    let j = spec.flatten(&nb);
                    if !seen[j] && is_target(j) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    RegionStats {
        total_target_points: total,
        inside_connected: inside,
        outside_connected: total - inside,
        unresolvable,
        empty: false,
    }
}

/// One row per node: swept coordinates, outcome, iterations, residual.
pub fn write_region_csv<W: Write>(map: &RegionMap, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = map.spec.swept_dims.iter().map(|d| format!("x{d}")).collect();
    header.extend(["outcome", "iterations", "residual_norm"].map(String::from));
    w.write_record(&header)?;
    for p in &map.points {
        let mut row: Vec<String> = p.coords.iter().map(|c| format!("{c:?}")).collect();
        row.push(p.outcome.as_str().into());
        row.push(p.iterations.to_string());
        row.push(format!("{:?}", p.residual_norm));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub solver: SolverKind,
    pub stats: RegionStats,
    pub counts: Vec<(Outcome, usize)>,
    pub spec: GridSpec,
    pub target: Vec<f64>,
    pub match_tolerance: f64,
    pub config: SolverConfig,
}

impl RegionSummary {
    pub fn new(map: &RegionMap) -> Self {
        let counts = [Outcome::Target, Outcome::OtherSolution, Outcome::Diverged, Outcome::Unresolvable]
            .into_iter()
            .map(|o| (o, map.count(o)))
            .collect();
        Self {
            solver: map.solver,
            stats: connected_stats(map),
            counts,
            spec: map.spec.clone(),
            target: map.target.clone(),
            match_tolerance: map.match_tolerance,
            config: map.config.clone(),
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn export_region(map: &RegionMap, stem: impl AsRef<Path>) -> Result<RegionSummary> {
    let stem = stem.as_ref();
    write_region_csv(map, std::fs::File::create(stem.with_extension("csv"))?)?;
    let summary = RegionSummary::new(map);
    std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
