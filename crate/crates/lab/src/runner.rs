//! Task dispatch. Every task computes its artifacts in memory first; nothing
//! is written unless the whole task succeeded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use geodesic_reeb::birkhoff::{build_annulus_with, write_portrait, SectionOptions};
use geodesic_reeb::contact::{pullback_residual_f, pullback_residual_h};
use geodesic_reeb::flows::{
    conjugacy_residual, integrate_geodesic, integrate_reeb, linearized_flow, unit_state,
    FlowOptions,
};
use geodesic_reeb::ode::Output;
use geodesic_reeb::orbits::{find_closed, Classification, ClosedOrbitRecord, FindOptions};
use geodesic_reeb::winding::{cz_index, parity_matches, winding_interval};
use geodesic_reeb::{ConformalMetric, ContactForm, Quaternion, TangentVector, UnitTangent};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Start, Task};
use crate::error::LabError;
use crate::scan::{elliptic_scan, ScanOptions};

pub const METADATA_FILE: &str = "run-metadata.toml";

/// A file produced by a task, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub contents: Vec<u8>,
}

impl Artifact {
    fn new(path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) -> Self {
        Self {
            path: path.into(),
            contents: contents.into(),
        }
    }

    fn toml(path: &str, value: &impl Serialize) -> Result<Self, LabError> {
        let text = toml::to_string(value)
            .map_err(|e| LabError::Config(format!("serializing {path}: {e}")))?;
        Ok(Self::new(path, text))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub task: Task,
    pub artifacts: Vec<Artifact>,
    /// One-line human summary.
    pub summary: String,
}

fn find_options(cfg: &ExperimentConfig, self_linking: bool) -> FindOptions {
    FindOptions {
        tol: cfg.closure,
        t_max: cfg.t_max,
        integrator: cfg.tol,
        self_linking,
        ..FindOptions::default()
    }
}

fn descriptor(metric: &ConformalMetric) -> String {
    metric.to_descriptor()
}

/// Computes the artifacts of `task` without touching the filesystem.
pub fn execute(task: Task, cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    if let Some(declared) = cfg.task {
        if declared != task {
            return Err(LabError::Config(format!(
                "configuration declares task `{}` but `{}` was requested",
                declared.name(),
                task.name()
            )));
        }
    }
    let (artifacts, summary) = match task {
        Task::Identities => identities(cfg)?,
        Task::Integrate => integrate(cfg)?,
        Task::FindOrbit => find_orbit(cfg)?,
        Task::Cz => cz(cfg)?,
        Task::Birkhoff => birkhoff(cfg)?,
        Task::Scan => scan(cfg)?,
    };
    Ok(Outcome {
        task,
        artifacts,
        summary,
    })
}

fn unit_quaternion(rng: &mut ChaCha8Rng) -> Quaternion {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q.scale(1.0 / n);
        }
    }
}

fn uniform_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

#[derive(Serialize)]
struct IdentitiesReport {
    metric: String,
    samples: usize,
    seed: u64,
    max_f_pullback: f64,
    max_h_pullback: f64,
    max_reeb_equation: f64,
    max_reeb_kernel: f64,
    conjugacy_duration: f64,
    conjugacy: f64,
}

fn identities(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String), LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.identities.samples;
    let form = ContactForm::lifted(cfg.metric.clone());
    let (mut f_max, mut h_max, mut eq_max, mut ker_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let q = unit_quaternion(&mut rng);
        let zeta = unit_quaternion(&mut rng);
        f_max = f_max.max(pullback_residual_f(q, zeta));

        let t = UnitTangent::projected(uniform_vector(&mut rng), uniform_vector(&mut rng));
        let (a, b, c) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        h_max = h_max.max(pullback_residual_h(
            &cfg.metric,
            &t,
            &TangentVector::on_unit_bundle(&t, a, b, c),
        ));

        let y = form.reeb_field(q)?;
        let (eq, ker) = form.reeb_residuals(q, y);
        eq_max = eq_max.max(eq);
        ker_max = ker_max.max(ker);
    }
    let q0 = unit_quaternion(&mut rng);
    let duration = cfg.identities.duration;
    let conjugacy = conjugacy_residual(&cfg.metric, q0, duration, &cfg.tol)?;
    let report = IdentitiesReport {
        metric: descriptor(&cfg.metric),
        samples: n,
        seed: cfg.seed,
        max_f_pullback: f_max,
        max_h_pullback: h_max,
        max_reeb_equation: eq_max,
        max_reeb_kernel: ker_max,
        conjugacy_duration: duration,
        conjugacy,
    };
    let summary = format!(
        "F pullback {f_max:.3e}, H pullback {h_max:.3e}, Reeb {:.3e}, conjugacy {conjugacy:.3e}",
        eq_max.max(ker_max)
    );
    Ok((vec![Artifact::toml("identities.toml", &report)?], summary))
}

#[derive(Serialize)]
struct IntegrateReport {
    metric: String,
    chart: String,
    duration: f64,
    samples: usize,
    accepted_steps: usize,
    rejected_steps: usize,
    max_residual: f64,
    closure_gap: f64,
}

fn integrate(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String), LabError> {
    let params = &cfg.integrate;
    let opts = FlowOptions {
        tol: cfg.tol,
        output: Output::Uniform(params.samples),
    };
    let traj = match &params.start {
        Start::Tangent(s) => integrate_geodesic(
            &cfg.metric,
            &unit_state(&cfg.metric, s.x, s.v),
            params.duration,
            &opts,
        )?,
        Start::Sphere(q) => integrate_reeb(
            &ContactForm::lifted(cfg.metric.clone()),
            *q,
            params.duration,
            &opts,
        )?,
    };
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)
        .map_err(|e| LabError::io("trajectory.csv", e))?;
    let report = IntegrateReport {
        metric: descriptor(&cfg.metric),
        chart: traj.first().chart().to_string(),
        duration: params.duration,
        samples: traj.points.len(),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
        max_residual: traj.max_residual(),
        closure_gap: traj.closure_gap(),
    };
    let summary = format!(
        "{} points, max residual {:.3e}",
        traj.points.len(),
        traj.max_residual()
    );
    Ok((
        vec![
            Artifact::new("trajectory.csv", csv),
            Artifact::toml("integrate.toml", &report)?,
        ],
        summary,
    ))
}

fn orbit_summary(r: &ClosedOrbitRecord) -> String {
    format!(
        "period {:.12}, {}, trace {:.9}",
        r.period, r.classification, r.traces.linearized
    )
}

fn find_orbit(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String), LabError> {
    let record = find_closed(
        &cfg.metric,
        &cfg.orbit.guess,
        &find_options(cfg, cfg.orbit.self_linking),
    )?;
    record.validate()?;
    let summary = orbit_summary(&record);
    Ok((
        vec![Artifact::new("orbit.toml", record.to_toml()?)],
        summary,
    ))
}

#[derive(Serialize)]
struct CzReport {
    metric: String,
    period: f64,
    lift_period: f64,
    classification: Classification,
    lift_classification: Classification,
    winding_lo: f64,
    winding_hi: f64,
    cz_index: i64,
    parity: bool,
}

fn cz(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String), LabError> {
    let record = find_closed(&cfg.metric, &cfg.orbit.guess, &find_options(cfg, false))?;
    record.validate()?;
    let form = ContactForm::lifted(cfg.metric.clone());
    let sheets = record.lift.sheets as f64;
    let flow = linearized_flow(
        &form,
        record.lift_q0(),
        record.lift.period,
        &[1.0 / sheets],
        &cfg.tol,
    )?;
    let interval = winding_interval(&flow.arc)?;
    let index = cz_index(&flow.arc)?;
    let parity = parity_matches(record.lift.classification, index)?;
    let report = CzReport {
        metric: descriptor(&cfg.metric),
        period: record.period,
        lift_period: record.lift.period,
        classification: record.classification,
        lift_classification: record.lift.classification,
        winding_lo: interval.lo,
        winding_hi: interval.hi,
        cz_index: index,
        parity,
    };
    let summary = format!(
        "winding interval [{:.9}, {:.9}], CZ index {index}, parity {}",
        interval.lo,
        interval.hi,
        if parity { "ok" } else { "MISMATCH" }
    );
    Ok((
        vec![
            Artifact::new("orbit.toml", record.to_toml()?),
            Artifact::toml("cz.toml", &report)?,
        ],
        summary,
    ))
}

#[derive(Serialize)]
struct BirkhoffReport {
    metric: String,
    orbit_period: f64,
    length: f64,
    area: f64,
    grid: usize,
    min_return_time: f64,
    max_return_time: f64,
    max_area_defect: f64,
}

fn birkhoff(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String), LabError> {
    let record = find_closed(&cfg.metric, &cfg.birkhoff.guess, &find_options(cfg, false))?;
    let section = build_annulus_with(
        &cfg.metric,
        &record,
        SectionOptions {
            t_max: 1e3,
            tol: cfg.tol,
        },
    )?;
    let n = cfg.birkhoff.grid;
    let grid = section.grid(n, n);
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&p| {
            let r = section.return_map(p)?;
            let jac = section.area_jacobian(p)?;
            Ok((p, r, jac))
        })
        .collect::<geodesic_reeb::Result<_>>()?;
    let (mut tmin, mut tmax, mut defect) = (f64::INFINITY, 0.0f64, 0.0f64);
    for (_, r, j) in &rows {
        tmin = tmin.min(r.time);
        tmax = tmax.max(r.time);
        defect = defect.max((j - 1.0).abs());
    }
    let portrait: Vec<_> = rows.iter().map(|(p, r, _)| (*p, *r)).collect();
    let mut csv = Vec::new();
    write_portrait(&mut csv, &portrait).map_err(|e| LabError::io("portrait.csv", e))?;
    let report = BirkhoffReport {
        metric: descriptor(&cfg.metric),
        orbit_period: record.period,
        length: section.length(),
        area: section.area(256),
        grid: n,
        min_return_time: tmin,
        max_return_time: tmax,
        max_area_defect: defect,
    };
    let summary = format!("return times in [{tmin:.6}, {tmax:.6}], area defect {defect:.3e}");
    Ok((
        vec![
            Artifact::new("portrait.csv", csv),
            Artifact::toml("birkhoff.toml", &report)?,
        ],
        summary,
    ))
}

#[derive(Serialize)]
struct ScanSummary {
    epsilons: Vec<f64>,
    guesses: usize,
    jitter: f64,
    seed: u64,
    cells: usize,
    failed: usize,
    non_degenerate: usize,
    parity_failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_elliptic: Option<f64>,
}

fn scan(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String), LabError> {
    let params = &cfg.scan;
    let opts = ScanOptions {
        find: find_options(cfg, false),
        seed: cfg.seed,
        jitter: params.jitter,
    };
    let report = elliptic_scan(&params.family, &params.guesses, &params.epsilons, &opts)?;
    let mut csv = Vec::new();
    report
        .write_csv(&mut csv)
        .map_err(|e| LabError::io("scan.csv", e))?;
    let mut artifacts = vec![Artifact::new("scan.csv", csv)];
    for (row, cell) in report.cells() {
        if let Some(r) = cell.record() {
            artifacts.push(Artifact::new(
                format!("records/cell-{:03}-{:02}.toml", row.index, cell.guess),
                r.to_toml()?,
            ));
        }
    }
    let cells: Vec<_> = report.cells().collect();
    let summary = ScanSummary {
        epsilons: report.rows.iter().map(|r| r.epsilon).collect(),
        guesses: params.guesses.len(),
        jitter: params.jitter,
        seed: cfg.seed,
        cells: cells.len(),
        failed: cells.iter().filter(|(_, c)| c.outcome.is_err()).count(),
        non_degenerate: cells.iter().filter(|(_, c)| c.parity.is_some()).count(),
        parity_failures: report.parity_failures(),
        first_elliptic: report.first_elliptic,
    };
    let mut line = format!(
        "{} cells, {} failed, {} parity failures",
        summary.cells, summary.failed, summary.parity_failures
    );
    match report.first_elliptic {
        Some(e) => write!(line, ", first elliptic at epsilon = {e}").unwrap(),
        None => line.push_str(", no elliptic orbit"),
    }
    artifacts.insert(1, Artifact::toml("scan.toml", &summary)?);
    Ok((artifacts, line))
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), LabError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("output");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| LabError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        LabError::io(path, e)
    })
}

#[derive(Serialize)]
struct Metadata<'a> {
    task: &'a str,
    seed: u64,
    unix_time: u64,
    version: &'a str,
    files: Vec<String>,
}

/// Writes every artifact below `dir`, followed by the run metadata; returns
/// the files written.
pub fn write_outcome(dir: &Path, outcome: &Outcome, seed: u64) -> Result<Vec<PathBuf>, LabError> {
    let for_all: Vec<(PathBuf, &[u8])> = outcome
        .artifacts
        .iter()
        .map(|a| (dir.join(&a.path), a.contents.as_slice()))
        .collect();
    let mut written = Vec::with_capacity(for_all.len() + 1);
    for (path, contents) in for_all {
        write_atomic(&path, contents)?;
        written.push(path);
    }
    let meta = Metadata {
        task: outcome.task.name(),
        seed,
        unix_time: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        version: env!("CARGO_PKG_VERSION"),
        files: outcome
            .artifacts
            .iter()
            .map(|a| a.path.display().to_string())
            .collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| LabError::Config(e.to_string()))?;
    let path = dir.join(METADATA_FILE);
    write_atomic(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}

/// Executes `task` and writes its outputs to `dir`.
pub fn run(
    task: Task,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(Outcome, Vec<PathBuf>), LabError> {
    let outcome = execute(task, cfg)?;
    let files = write_outcome(dir, &outcome, cfg.seed)?;
    Ok((outcome, files))
}
