//! Run orchestration: configuration, the output-time loop, CSV snapshots,
//! the step-report stream, the JSON manifest, ε sweeps and scheme comparison.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ap::{ApConfig, ApSolver};
use crate::cases::{preset, CasePreset};
use crate::classical::{collocated_divergence, ClassicalConfig, ClassicalSolver, CollocatedState};
use crate::diagnostics::{energy_growth, entropy_monitor, ActiveBound, ReportRow, StepReport, ENTROPY_TOL};
use crate::error::{Error, Result};
use crate::limit::{LimitSolver, KINETIC_TOL};
use crate::mesh::{GridSpec, Mesh};
use crate::operators::div;

pub const PROVENANCE: &str = concat!("epmac ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Ap,
    Classical,
    Limit,
}

impl SchemeKind {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "ap" => Ok(Self::Ap),
            "classical" => Ok(Self::Classical),
            "limit" => Ok(Self::Limit),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme '{other}' (expected ap, classical or limit)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ap => "ap",
            Self::Classical => "classical",
            Self::Limit => "limit",
        }
    }
}

/// A complete run description. Every CLI flag overrides one of these keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    pub scheme: SchemeKind,
    /// Cells per axis, overriding the preset.
    pub cells: Option<usize>,
    pub eps: Option<f64>,
    /// Perturbation amplitude, overriding the `ε`-power rule of the preset.
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    /// Explicit grid; the case then only supplies initial data.
    pub grid: Option<GridSpec>,
    pub output_times: Option<Vec<f64>>,
    /// Final time; output times beyond it are dropped and it becomes the last one.
    pub t_end: Option<f64>,
    pub ap: ApConfig,
    pub classical: ClassicalConfig,
    pub out: Option<PathBuf>,
    pub write_snapshots: bool,
    pub write_reports: bool,
    pub write_manifest: bool,
    /// Write the first assembled potential system as `matrix.txt` (ap only).
    pub dump_matrix: bool,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: "qn1d".into(),
            scheme: SchemeKind::Ap,
            cells: None,
            eps: None,
            delta: None,
            kappa: None,
            gamma: None,
            grid: None,
            output_times: None,
            t_end: None,
            ap: ApConfig::default(),
            classical: ClassicalConfig::default(),
            out: None,
            write_snapshots: true,
            write_reports: true,
            write_manifest: true,
            dump_matrix: false,
            max_steps: 2_000_000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// The case preset with all overrides applied.
    pub fn resolve_case(&self) -> Result<CasePreset> {
        let mut case = preset(&self.case)?;
        if let Some(n) = self.cells {
            if n == 0 {
                return Err(Error::InvalidConfig("cell count must be positive".into()));
            }
            case = case.with_cells(n);
        }
        if let Some(eps) = self.eps {
            case = case.with_eps(eps);
        }
        if let Some(delta) = self.delta {
            case.delta = Some(delta);
        }
        if let Some(kappa) = self.kappa {
            case.kappa = kappa;
        }
        if let Some(gamma) = self.gamma {
            if !(gamma >= 1.0 && gamma.is_finite()) {
                return Err(Error::InvalidConfig(format!("gamma must be >= 1, got {gamma}")));
            }
            case.gamma = gamma;
        }
        if let Some(times) = &self.output_times {
            case.output_times = Some(times.clone());
        }
        if let Some(t_end) = self.t_end {
            if !(t_end > 0.0 && t_end.is_finite()) {
                return Err(Error::InvalidConfig(format!("t_end must be positive, got {t_end}")));
            }
            let mut times: Vec<f64> = case.outputs().into_iter().filter(|&t| t < t_end).collect();
            times.push(t_end);
            case.output_times = Some(times);
        }
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<CasePreset> {
        let case = self.resolve_case()?;
        self.ap.validate()?;
        self.classical.validate()?;
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if self.dump_matrix && self.scheme != SchemeKind::Ap {
            return Err(Error::InvalidConfig(
                "dump_matrix is only available for the ap scheme".into(),
            ));
        }
        if let Some(grid) = &self.grid {
            grid.validate()?;
            if grid.axes.len() != case.dim() {
                return Err(Error::InvalidConfig(format!(
                    "grid has {} axes but case {} is {}D",
                    grid.axes.len(),
                    case.name(),
                    case.dim()
                )));
            }
        }
        Ok(case)
    }

    fn mesh(&self, case: &CasePreset) -> Result<Mesh> {
        match &self.grid {
            Some(grid) => Mesh::new(grid),
            None => case.mesh(),
        }
    }
}

/// Cell-centred fields at one instant, the content of a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub centers: Vec<[f64; 2]>,
    pub rho: Vec<f64>,
    /// Velocity components at cell centres, one vector per direction.
    pub u: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub div_u: Vec<f64>,
}

impl Snapshot {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn header(dim: usize) -> &'static [&'static str] {
        if dim == 1 {
            &["x", "rho", "u", "phi"]
        } else {
            &["x", "y", "rho", "u", "v", "phi", "div_u"]
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.dim();
        w.write_record(Self::header(dim))?;
        for k in 0..self.rho.len() {
            let mut row = vec![self.centers[k][0]];
            if dim == 2 {
                row.push(self.centers[k][1]);
            }
            row.push(self.rho[k]);
            row.extend(self.u.iter().map(|c| c[k]));
            row.push(self.phi[k]);
            if dim == 2 {
                row.push(self.div_u[k]);
            }
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, so files are bit-exact and diffable.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

enum Runner {
    Ap(ApSolver),
    Classical(ClassicalSolver),
    Limit(LimitSolver),
}

impl Runner {
    fn mesh(&self) -> &Mesh {
        match self {
            Runner::Ap(s) => &s.mesh,
            Runner::Classical(s) => &s.mesh,
            Runner::Limit(s) => &s.mesh,
        }
    }

    fn t(&self) -> f64 {
        match self {
            Runner::Ap(s) => s.state.t,
            Runner::Classical(s) => s.state.t,
            Runner::Limit(s) => s.state.t,
        }
    }

    fn set_t(&mut self, t: f64) {
        match self {
            Runner::Ap(s) => s.state.t = t,
            Runner::Classical(s) => s.state.t = t,
            Runner::Limit(s) => s.state.t = t,
        }
    }

    fn max_u(&self) -> f64 {
        match self {
            Runner::Ap(s) => s.state.u.max_abs(),
            Runner::Classical(s) => s.state.u.iter().map(|c| c.max_abs()).fold(0.0, f64::max),
            Runner::Limit(s) => s.state.u.max_abs(),
        }
    }

    fn snapshot(&self) -> Snapshot {
        let mesh = self.mesh();
        let centers = (0..mesh.num_cells()).map(|k| mesh.center(k)).collect();
        let staggered = |u: &crate::fields::FaceField| -> Vec<Vec<f64>> {
            (0..mesh.dim())
                .map(|d| {
                    (0..mesh.num_cells())
                        .map(|k| {
                            let [lo, hi] = mesh.cell_faces(k, d);
                            0.5 * (u[d][lo] + u[d][hi])
                        })
                        .collect()
                })
                .collect()
        };
        match self {
            Runner::Ap(s) => Snapshot {
                t: s.state.t,
                centers,
                rho: s.state.rho.0.clone(),
                u: staggered(&s.state.u),
                phi: s.state.phi.0.clone(),
                div_u: div(mesh, &s.state.u).0,
            },
            Runner::Classical(s) => Snapshot {
                t: s.state.t,
                centers,
                rho: s.state.rho.0.clone(),
                u: s.state.u.iter().map(|c| c.0.clone()).collect(),
                phi: s.state.phi.0.clone(),
                div_u: collocated_divergence(mesh, &s.state).0,
            },
            Runner::Limit(s) => Snapshot {
                t: s.state.t,
                centers,
                rho: vec![1.0; mesh.num_cells()],
                u: staggered(&s.state.u),
                phi: s.state.phi.0.clone(),
                div_u: div(mesh, &s.state.u).0,
            },
        }
    }

    fn step(&mut self, dt_cap: f64, detail: Option<&mut Option<crate::ap::StepDetail>>) -> Result<StepReport> {
        match self {
            Runner::Ap(s) => match detail {
                Some(slot) => {
                    let (report, d) = s.step_detailed(dt_cap)?;
                    *slot = Some(d);
                    Ok(report)
                }
                None => s.step(dt_cap),
            },
            Runner::Classical(s) => s.step(dt_cap),
            Runner::Limit(s) => s.step(dt_cap),
        }
    }
}

/// Outcome of one runtime invariant over the whole run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tol: f64,
    /// Advisory checks are logged but do not fail the run.
    pub advisory: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub scheme: SchemeKind,
    pub case: CasePreset,
    pub reports: Vec<StepReport>,
    pub snapshots: Vec<Snapshot>,
    pub invariants: Vec<InvariantCheck>,
    pub initial_energy: f64,
    pub initial_mass: f64,
    /// Numerical failure that ended the run early.
    pub error: Option<Error>,
    pub wall_time_s: f64,
    pub dir: Option<PathBuf>,
}

impl RunOutcome {
    /// No numerical failure and every enforced invariant held.
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.invariants.iter().all(|c| c.passed || c.advisory)
    }

    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn totals(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.reports.iter().map(|r| r.energies.total))
            .collect()
    }

    pub fn invariant(&self, name: &str) -> Option<&InvariantCheck> {
        self.invariants.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    worst: f64,
    tol: f64,
    passed: bool,
    advisory: bool,
}

impl Tracker {
    fn new(name: &'static str, tol: f64, advisory: bool) -> Self {
        Self {
            name,
            worst: 0.0,
            tol,
            passed: true,
            advisory,
        }
    }

    /// Records `value` against `limit` (defaulting to the fixed tolerance).
    fn record(&mut self, value: f64, limit: Option<f64>) {
        let limit = limit.unwrap_or(self.tol);
        self.worst = self.worst.max(value);
        if !(value <= limit) {
            self.passed = false;
        }
    }

    fn finish(self) -> InvariantCheck {
        InvariantCheck {
            name: self.name,
            passed: self.passed,
            worst: self.worst,
            tol: self.tol,
            advisory: self.advisory,
        }
    }
}

/// Runs a simulation. Configuration problems are returned as errors before
/// anything is written; numerical failures end the run early and are
/// recorded in the outcome and the manifest.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let case = config.validate()?;
    let mesh = config.mesh(&case)?;
    let start = Instant::now();
    let state = case.init_state(&mesh, &config.ap.solver)?;
    let mut runner = match config.scheme {
        SchemeKind::Ap => Runner::Ap(ApSolver::new(mesh, state, config.ap)?),
        SchemeKind::Classical => {
            let col = CollocatedState::from_staggered(&mesh, &state);
            Runner::Classical(ClassicalSolver::new(mesh, col, config.classical)?)
        }
        SchemeKind::Limit => Runner::Limit(LimitSolver::new(mesh, state, config.ap)?),
    };
    let dir = match &config.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(dir.clone())
        }
        None => None,
    };

    let initial_energy = match &runner {
        Runner::Ap(s) => s.e0,
        Runner::Classical(s) => s.e0,
        Runner::Limit(s) => crate::diagnostics::kinetic_energy(&s.mesh, &s.state.rho, &s.state.u),
    };
    let initial_mass = match &runner {
        Runner::Ap(s) => s.state.rho.integral(&s.mesh),
        Runner::Classical(s) => s.state.rho.integral(&s.mesh),
        Runner::Limit(s) => s.mesh.measure(),
    };
    let h = runner.mesh().h_min();
    let tol = config.ap.solver.tol;

    let mut mass = Tracker::new("mass_conservation", 1e-12, false);
    let mut entropy = Tracker::new("entropy_stability", ENTROPY_TOL, config.scheme == SchemeKind::Classical);
    let mut poisson = Tracker::new("poisson_residual", 10.0 * tol, config.scheme == SchemeKind::Classical);
    let mut dual = Tracker::new("dual_density_ratio", 1.25, config.scheme != SchemeKind::Ap);
    let mut eta = Tracker::new("eta_lower_bound", 0.0, true);

    let mut reports = Vec::new();
    let mut snapshots = vec![runner.snapshot()];
    let mut error = None;
    let mut detail = None;
    let mut e_prev = initial_energy;

    'outer: for &target in case.outputs().iter().filter(|&&t| t > 0.0) {
        while target - runner.t() > 1e-14 * target.max(1.0) {
            if reports.len() >= config.max_steps {
                error = Some(Error::StepLimit(config.max_steps));
                break 'outer;
            }
            let u_scale = runner.max_u();
            let want_detail = config.dump_matrix && reports.is_empty();
            let result = runner.step(target - runner.t(), want_detail.then_some(&mut detail));
            let report = match result {
                Ok(r) => r,
                Err(e) => {
                    error = Some(e);
                    break 'outer;
                }
            };
            if (runner.t() - target).abs() <= 1e-12 * target.max(1.0) {
                runner.set_t(target);
            }
            mass.record((report.mass - initial_mass).abs() / initial_mass, None);
            let de = (report.energies.total - e_prev) / initial_energy.abs().max(f64::MIN_POSITIVE);
            let entropy_tol = if config.scheme == SchemeKind::Limit { KINETIC_TOL } else { ENTROPY_TOL };
            entropy.record(de, Some(entropy_tol));
            e_prev = report.energies.total;
            match config.scheme {
                SchemeKind::Limit => {
                    poisson.record(report.poisson_residual, Some(10.0 * tol * u_scale.max(1e-300) / h))
                }
                _ => poisson.record(report.poisson_residual, Some(10.0 * tol * report.max_rho_dev.max(1.0))),
            }
            dual.record(report.max_dual_ratio, None);
            eta.record(if report.eta_ok { 0.0 } else { 1.0 }, None);
            reports.push(report);
        }
        snapshots.push(runner.snapshot());
    }
    let mut invariants = vec![mass.finish(), entropy.finish()];
    if config.scheme != SchemeKind::Classical {
        invariants.push(poisson.finish());
    }
    if config.scheme == SchemeKind::Ap {
        invariants.push(dual.finish());
        invariants.push(eta.finish());
    }

    let outcome = RunOutcome {
        scheme: config.scheme,
        case,
        reports,
        snapshots,
        invariants,
        initial_energy,
        initial_mass,
        error,
        wall_time_s: start.elapsed().as_secs_f64(),
        dir: dir.clone(),
    };
    if let Some(dir) = &dir {
        write_artifacts(config, &outcome, runner.mesh(), dir, detail.as_ref())?;
    }
    Ok(outcome)
}

fn snapshot_name(i: usize) -> String {
    format!("snapshot_{i:04}.csv")
}

fn write_artifacts(
    config: &RunConfig,
    outcome: &RunOutcome,
    mesh: &Mesh,
    dir: &Path,
    detail: Option<&crate::ap::StepDetail>,
) -> Result<()> {
    if config.write_snapshots {
        for (i, snap) in outcome.snapshots.iter().enumerate() {
            snap.write_csv(&dir.join(snapshot_name(i)))?;
        }
    }
    if config.write_reports {
        write_reports(&dir.join("reports.csv"), &outcome.reports)?;
    }
    if let Some(d) = detail {
        let mut f = fs::File::create(dir.join("matrix.txt"))?;
        d.system.matrix.write_coordinate(&mut f)?;
        f.flush()?;
    }
    if config.write_manifest {
        let text = serde_json::to_string_pretty(&manifest(config, outcome, mesh))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
    }
    Ok(())
}

pub fn write_reports(path: &Path, reports: &[StepReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if reports.is_empty() {
        // Keep the header so consumers can rely on the schema.
        w.write_record(REPORT_COLUMNS)?;
    }
    for r in reports {
        w.serialize(ReportRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub const REPORT_COLUMNS: [&str; 18] = [
    "step",
    "t",
    "dt",
    "active_bound",
    "halvings",
    "solver_iterations",
    "solver_residual",
    "internal",
    "kinetic",
    "potential",
    "total",
    "mass",
    "max_rho_dev",
    "max_div_u",
    "poisson_residual",
    "max_dual_ratio",
    "eta_ok",
    "entropy_ok",
];

fn error_record(e: &Error, step: usize) -> Value {
    let kind = match e {
        Error::NonPositiveDensity { .. } => "non_positive_density",
        Error::NonPositiveDualDensity { .. } => "non_positive_dual_density",
        Error::SolverDiverged { .. } => "solver_diverged",
        Error::IncompatibleRhs { .. } => "incompatible_rhs",
        Error::CflExhausted { .. } => "cfl_exhausted",
        Error::NonPositiveTimeStep(_) => "non_positive_time_step",
        Error::StepLimit(_) => "step_limit",
        _ => "other",
    };
    json!({ "kind": kind, "message": e.to_string(), "step": step })
}

fn manifest(config: &RunConfig, outcome: &RunOutcome, mesh: &Mesh) -> Value {
    let totals = outcome.totals();
    let verdict = entropy_monitor(&totals, ENTROPY_TOL);
    let max_total = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_total = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let snapshots: Vec<Value> = outcome
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| json!({ "file": snapshot_name(i), "t": s.t }))
        .collect();
    json!({
        "provenance": PROVENANCE,
        "scheme": outcome.scheme.as_str(),
        "config": config,
        "case": outcome.case,
        "mesh": {
            "dim": mesh.dim(),
            "cells": &mesh.shape()[..mesh.dim()],
            "num_cells": mesh.num_cells(),
            "h_min": mesh.h_min(),
            "measure": mesh.measure(),
        },
        "steps": outcome.reports.len(),
        "final_time": outcome.snapshots.last().map(|s| s.t),
        "snapshots": snapshots,
        "energy": {
            "initial": outcome.initial_energy,
            "final": totals.last(),
            "max": max_total,
            "min": min_total,
            "monotone": verdict.ok,
            "first_increase": verdict.first_violation,
            "doubling_step": energy_growth(&totals, 2.0),
        },
        "invariants": outcome.invariants,
        "ok": outcome.ok(),
        "error": outcome.error.as_ref().map(|e| error_record(e, outcome.reports.len() + 1)),
        "wall_time_s": outcome.wall_time_s,
    })
}

/// Parameters of an ε sweep on top of a base configuration.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub eps: Vec<f64>,
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub scheme: String,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_mean: f64,
    pub final_rho_dev: f64,
    pub energy_ok: bool,
    pub wall_time_s: f64,
    pub error: String,
}

impl SweepRow {
    fn from_outcome(eps: f64, outcome: &RunOutcome) -> Self {
        // Steps shortened to land on an output time say nothing about the
        // stability bound, so they are left out of the statistics.
        let free: Vec<f64> = outcome
            .reports
            .iter()
            .filter(|r| r.active_bound != ActiveBound::OutputTime)
            .map(|r| r.dt)
            .collect();
        let dts = if free.is_empty() {
            outcome.reports.iter().map(|r| r.dt).collect()
        } else {
            free
        };
        let (dt_min, dt_max, dt_mean) = if dts.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (
                dts.iter().copied().fold(f64::INFINITY, f64::min),
                dts.iter().copied().fold(0.0, f64::max),
                dts.iter().sum::<f64>() / dts.len() as f64,
            )
        };
        let final_rho_dev = outcome
            .final_snapshot()
            .map(|s| s.rho.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max))
            .unwrap_or(f64::NAN);
        Self {
            eps,
            scheme: outcome.scheme.as_str().into(),
            steps: outcome.reports.len(),
            dt_min,
            dt_max,
            dt_mean,
            final_rho_dev,
            energy_ok: entropy_monitor(&outcome.totals(), ENTROPY_TOL).ok,
            wall_time_s: outcome.wall_time_s,
            error: outcome.error.as_ref().map(|e| e.to_string()).unwrap_or_default(),
        }
    }

    fn failed(eps: f64, scheme: SchemeKind, e: &Error) -> Self {
        Self {
            eps,
            scheme: scheme.as_str().into(),
            steps: 0,
            dt_min: f64::NAN,
            dt_max: f64::NAN,
            dt_mean: f64::NAN,
            final_rho_dev: f64::NAN,
            energy_ok: false,
            wall_time_s: 0.0,
            error: e.to_string(),
        }
    }
}

/// Runs the base configuration once per `ε`, concurrently. Per-run artifacts
/// go to `eps_<ε>/` below the output directory, the table to `sweep.csv`.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.eps.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "a sweep needs at least two values of eps, got {}",
            config.eps.len()
        )));
    }
    if config.workers == Some(0) {
        return Err(Error::InvalidConfig("workers must be positive".into()));
    }
    // Fail fast on configuration errors shared by every run.
    for &eps in &config.eps {
        RunConfig {
            eps: Some(eps),
            ..config.base.clone()
        }
        .validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        config
            .eps
            .par_iter()
            .map(|&eps| {
                let cfg = RunConfig {
                    eps: Some(eps),
                    out: config.base.out.as_ref().map(|d| d.join(format!("eps_{eps:e}"))),
                    ..config.base.clone()
                };
                match run(&cfg) {
                    Ok(outcome) => SweepRow::from_outcome(eps, &outcome),
                    Err(e) => SweepRow::failed(eps, cfg.scheme, &e),
                }
            })
            .collect()
    });
    if let Some(dir) = &config.base.out {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormRow {
    pub field: String,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug)]
pub struct Comparison {
    pub schemes: [SchemeKind; 2],
    pub t: [f64; 2],
    pub norms: Vec<NormRow>,
    pub outcomes: [RunOutcome; 2],
}

/// Volume-weighted L¹, L² and max norms of `a − b`.
pub fn difference_norms(volumes: &[f64], a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for ((v, x), y) in volumes.iter().zip(a).zip(b) {
        let d = (x - y).abs();
        l1 += v * d;
        l2 += v * d * d;
        linf = linf.max(d);
    }
    (l1, l2.sqrt(), linf)
}

/// Runs the same configuration with two schemes and compares the final fields.
pub fn compare(config: &RunConfig, schemes: [SchemeKind; 2]) -> Result<Comparison> {
    let run_one = |scheme: SchemeKind, tag: usize| {
        run(&RunConfig {
            scheme,
            out: config.out.as_ref().map(|d| d.join(format!("{}_{}", tag, scheme.as_str()))),
            dump_matrix: config.dump_matrix && scheme == SchemeKind::Ap,
            ..config.clone()
        })
    };
    let a = run_one(schemes[0], 0)?;
    let b = run_one(schemes[1], 1)?;
    let mesh = config.mesh(&a.case)?;
    let (sa, sb) = match (a.final_snapshot(), b.final_snapshot()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::InvalidConfig("comparison needs snapshots".into())),
    };
    let mut fields: Vec<(String, &[f64], &[f64])> = vec![("rho".into(), &sa.rho, &sb.rho)];
    for (d, name) in ["u", "v"].iter().enumerate().take(sa.dim()) {
        fields.push((name.to_string(), &sa.u[d], &sb.u[d]));
    }
    fields.push(("phi".into(), &sa.phi, &sb.phi));
    let norms: Vec<NormRow> = fields
        .into_iter()
        .map(|(field, x, y)| {
            let (l1, l2, linf) = difference_norms(mesh.volumes(), x, y);
            NormRow { field, l1, l2, linf }
        })
        .collect();
    if let Some(dir) = &config.out {
        let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
        for row in &norms {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(Comparison {
        schemes,
        t: [sa.t, sb.t],
        norms,
        outcomes: [a, b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = RunConfig {
            scheme: SchemeKind::Classical,
            eps: Some(1e-3),
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let partial = RunConfig::from_json(r#"{"case": "column2d", "ap": {"eta": 2.0}}"#).unwrap();
        assert_eq!(partial.case, "column2d");
        assert_eq!(partial.ap.eta, 2.0);
        assert_eq!(partial.ap.alpha, 2.0);
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn t_end_truncates_outputs() {
        let cfg = RunConfig {
            t_end: Some(0.05),
            ..RunConfig::default()
        };
        assert_eq!(cfg.resolve_case().unwrap().outputs(), vec![0.01, 0.05]);
    }

    #[test]
    fn usage_errors_are_rejected_before_running() {
        let bad_case = RunConfig {
            case: "nope".into(),
            ..RunConfig::default()
        };
        assert!(matches!(run(&bad_case), Err(Error::UnknownCase(_))));
        let bad_dump = RunConfig {
            scheme: SchemeKind::Limit,
            dump_matrix: true,
            ..RunConfig::default()
        };
        assert!(matches!(run(&bad_dump), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn short_run_lands_on_output_times() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            cells: Some(20),
            output_times: Some(vec![0.004, 0.01]),
            out: Some(dir.path().to_path_buf()),
            ..RunConfig::default()
        };
        let out = run(&cfg).unwrap();
        assert!(out.ok(), "{:?}", out.invariants);
        let times: Vec<f64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.004, 0.01]);
        for i in 0..3 {
            assert!(dir.path().join(snapshot_name(i)).exists());
        }
        let text = fs::read_to_string(dir.path().join("snapshot_0000.csv")).unwrap();
        assert_eq!(text.lines().next(), Some("x,rho,u,phi"));
        assert_eq!(text.lines().count(), 21);
        let reports = fs::read_to_string(dir.path().join("reports.csv")).unwrap();
        assert_eq!(reports.lines().next().unwrap(), REPORT_COLUMNS.join(","));
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["scheme"], "ap");
        assert_eq!(manifest["ok"], true);
        assert_eq!(manifest["provenance"], PROVENANCE);
    }

    #[test]
    fn difference_norms_by_hand() {
        let (l1, l2, linf) = difference_norms(&[0.5, 0.5], &[1.0, 2.0], &[0.0, 0.0]);
        assert_eq!(l1, 1.5);
        assert!((l2 - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(linf, 2.0);
    }
}
