//! Experiment configuration: a TOML document with one optional section per
//! task.
//!
//! ```toml
//! task = "find-orbit"
//! seed = 7
//!
//! [metric]
//! coefficients = [[2, 0, 0.05], [2, 2, 0.015]]   # (l, m, value)
//! # or a family: u = epsilon · Σ weight·Y_{l,m}
//! # terms = [[2, 0, 1.0], [2, 2, 0.3]]
//! # epsilon = 0.05
//!
//! [tolerances]
//! rtol = 1e-12
//! atol = 1e-13
//! closure = 1e-9
//! t_max = 100.0
//!
//! [output]
//! dir = "out"
//!
//! [integrate]
//! chart = "tangent"          # or "sphere" with q0 = [w, x, y, z]
//! x = [1.0, 0.0, 0.0]
//! v = [0.0, 1.0, 0.0]
//! duration = 10.0
//! samples = 200
//!
//! [orbit]
//! x = [1.0, 0.0, 0.0]
//! v = [0.0, 1.0, 0.0]
//! self_linking = true
//!
//! [birkhoff]
//! grid = 16
//!
//! [scan]
//! terms = [[2, 0, 1.0], [2, 2, 0.3]]
//! range = { start = 0.01, stop = 0.1, count = 10 }
//! # epsilons = [0.0, 0.02, 0.05]
//! # guesses = [{ x = [1.0, 0.0, 0.0], v = [0.0, 1.0, 0.0] }]
//! jitter = 0.0
//!
//! [identities]
//! samples = 10000
//! duration = 10.0
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use geodesic_reeb::ode::Tolerances;
use geodesic_reeb::{ConformalMetric, Quaternion, TangentState};
use nalgebra::Vector3;
use serde::Deserialize;
use toml::Spanned;

use crate::error::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Identities,
    Integrate,
    FindOrbit,
    Cz,
    Birkhoff,
    Scan,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Identities,
        Task::Integrate,
        Task::FindOrbit,
        Task::Cz,
        Task::Birkhoff,
        Task::Scan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Identities => "identities",
            Task::Integrate => "integrate",
            Task::FindOrbit => "find-orbit",
            Task::Cz => "cz",
            Task::Birkhoff => "birkhoff",
            Task::Scan => "scan",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

type Triple = (u32, i32, f64);

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: Option<Spanned<String>>,
    seed: Option<u64>,
    metric: Option<RawMetric>,
    tolerances: Option<RawTolerances>,
    output: Option<RawOutput>,
    integrate: Option<RawIntegrate>,
    orbit: Option<RawOrbit>,
    birkhoff: Option<RawBirkhoff>,
    scan: Option<RawScan>,
    identities: Option<RawIdentities>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    coefficients: Option<Spanned<Vec<Triple>>>,
    terms: Option<Spanned<Vec<Triple>>>,
    epsilon: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    rtol: Option<Spanned<f64>>,
    atol: Option<Spanned<f64>>,
    closure: Option<Spanned<f64>>,
    t_max: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrate {
    chart: Option<Spanned<String>>,
    x: Option<[f64; 3]>,
    v: Option<[f64; 3]>,
    q0: Option<[f64; 4]>,
    duration: Option<Spanned<f64>>,
    samples: Option<Spanned<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrbit {
    x: Option<[f64; 3]>,
    v: Option<[f64; 3]>,
    self_linking: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBirkhoff {
    grid: Option<Spanned<usize>>,
    x: Option<[f64; 3]>,
    v: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    start: f64,
    stop: f64,
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGuess {
    x: [f64; 3],
    v: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    terms: Option<Spanned<Vec<Triple>>>,
    epsilons: Option<Spanned<Vec<f64>>>,
    range: Option<Spanned<RawRange>>,
    guesses: Option<Spanned<Vec<RawGuess>>>,
    jitter: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIdentities {
    samples: Option<Spanned<usize>>,
    duration: Option<Spanned<f64>>,
}

/// `u = ε · Σ wₖ Y_{lₖ,mₖ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub terms: Vec<((u32, i32), f64)>,
}

impl Family {
    pub fn metric(&self, epsilon: f64) -> geodesic_reeb::Result<ConformalMetric> {
        ConformalMetric::from_coefficients(self.terms.iter().map(|&(k, w)| (k, epsilon * w)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Tangent(TangentState),
    Sphere(Quaternion),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateParams {
    pub start: Start,
    pub duration: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitParams {
    pub guess: TangentState,
    pub self_linking: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffParams {
    pub grid: usize,
    pub guess: TangentState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanParams {
    pub family: Family,
    pub epsilons: Vec<f64>,
    pub guesses: Vec<TangentState>,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentitiesParams {
    pub samples: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub seed: u64,
    pub metric: ConformalMetric,
    pub tol: Tolerances,
    pub closure: f64,
    pub t_max: f64,
    pub out_dir: Option<PathBuf>,
    pub integrate: IntegrateParams,
    pub orbit: OrbitParams,
    pub birkhoff: BirkhoffParams,
    pub scan: ScanParams,
    pub identities: IdentitiesParams,
}

fn equator() -> TangentState {
    TangentState {
        x: Vector3::x(),
        v: Vector3::y(),
    }
}

/// The coordinate great circles, both directions.
pub fn coordinate_circles() -> Vec<TangentState> {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    [(x, y), (x, -y), (y, z), (y, -z), (z, x), (z, -x)]
        .into_iter()
        .map(|(x, v)| TangentState { x, v })
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse("").expect("the empty configuration is valid")
    }
}

struct Lines<'a> {
    text: &'a str,
}

impl Lines<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn err<T>(&self, span: &Spanned<T>, msg: impl std::fmt::Display) -> LabError {
        LabError::Config(format!("line {}: {msg}", self.line(span.span().start)))
    }

    fn positive(
        &self,
        v: &Option<Spanned<f64>>,
        name: &str,
        default: f64,
    ) -> Result<f64, LabError> {
        match v {
            None => Ok(default),
            Some(s) if *s.get_ref() > 0.0 && s.get_ref().is_finite() => Ok(*s.get_ref()),
            Some(s) => Err(self.err(s, format!("`{name}` must be positive, got {}", s.get_ref()))),
        }
    }
}

fn state(x: [f64; 3], v: [f64; 3]) -> Result<TangentState, String> {
    let (x, v) = (Vector3::from(x), Vector3::from(v));
    if !(x.norm() > 0.0) || !(x.cross(&v).norm() > 1e-12 * x.norm() * v.norm().max(1.0)) {
        return Err("guess needs a nonzero base point and a velocity transverse to it".into());
    }
    Ok(TangentState { x, v })
}

fn terms_of(
    l: &Lines,
    spanned: &Spanned<Vec<Triple>>,
    scale: f64,
) -> Result<ConformalMetric, LabError> {
    ConformalMetric::from_coefficients(
        spanned
            .get_ref()
            .iter()
            .map(|&(l, m, v)| ((l, m), scale * v)),
    )
    .map_err(|e| l.err(spanned, e))
}

/// Parses and validates a configuration document.
pub fn parse(text: &str) -> Result<ExperimentConfig, LabError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        match line {
            Some(n) => LabError::Config(format!("line {n}: {}", e.message())),
            None => LabError::Config(e.message().to_string()),
        }
    })?;
    let l = Lines { text };

    let task = match &raw.task {
        None => None,
        Some(s) => Some(Task::from_str(s.get_ref()).map_err(|e| l.err(s, e))?),
    };

    let metric = match &raw.metric {
        None => ConformalMetric::round(),
        Some(m) => match (&m.coefficients, &m.terms) {
            (Some(_), Some(t)) => {
                return Err(l.err(t, "give either `coefficients` or `terms`, not both"))
            }
            (Some(c), None) => {
                if let Some(e) = &m.epsilon {
                    return Err(l.err(e, "`epsilon` only applies to `terms`"));
                }
                terms_of(&l, c, 1.0)?
            }
            (None, Some(t)) => {
                let eps = m
                    .epsilon
                    .as_ref()
                    .ok_or_else(|| l.err(t, "`terms` needs an `epsilon`"))?;
                if !eps.get_ref().is_finite() {
                    return Err(l.err(eps, "`epsilon` must be finite"));
                }
                terms_of(&l, t, *eps.get_ref())?
            }
            (None, None) => ConformalMetric::round(),
        },
    };

    let defaults = Tolerances::precise();
    let (tol, closure, t_max) = match &raw.tolerances {
        None => (defaults, 1e-9, 100.0),
        Some(t) => {
            let rtol = l.positive(&t.rtol, "rtol", defaults.rtol)?;
            let atol = l.positive(&t.atol, "atol", defaults.atol)?;
            (
                Tolerances {
                    rtol,
                    atol,
                    ..defaults
                },
                l.positive(&t.closure, "closure", 1e-9)?,
                l.positive(&t.t_max, "t_max", 100.0)?,
            )
        }
    };

    let integrate = match &raw.integrate {
        None => IntegrateParams {
            start: Start::Tangent(equator()),
            duration: 10.0,
            samples: 200,
        },
        Some(s) => {
            let chart = s
                .chart
                .as_ref()
                .map(|c| c.get_ref().as_str())
                .unwrap_or("tangent");
            let start = match chart {
                "tangent" => {
                    let x = s.x.unwrap_or([1.0, 0.0, 0.0]);
                    let v = s.v.unwrap_or([0.0, 1.0, 0.0]);
                    Start::Tangent(state(x, v).map_err(LabError::Config)?)
                }
                "sphere" => {
                    let q = Quaternion::from_array(s.q0.unwrap_or([1.0, 0.0, 0.0, 0.0]));
                    if !(q.norm() > 0.0) {
                        return Err(LabError::Config("`q0` must be nonzero".into()));
                    }
                    Start::Sphere(q.normalize())
                }
                other => {
                    let c = s.chart.as_ref().unwrap();
                    return Err(l.err(
                        c,
                        format!("unknown chart `{other}` (expected `tangent` or `sphere`)"),
                    ));
                }
            };
            let duration = l.positive(&s.duration, "duration", 10.0)?;
            let samples = match &s.samples {
                None => 200,
                Some(n) if *n.get_ref() > 0 => *n.get_ref(),
                Some(n) => return Err(l.err(n, "`samples` must be at least 1")),
            };
            IntegrateParams {
                start,
                duration,
                samples,
            }
        }
    };

    let orbit = match &raw.orbit {
        None => OrbitParams {
            guess: equator(),
            self_linking: true,
        },
        Some(o) => OrbitParams {
            guess: state(
                o.x.unwrap_or([1.0, 0.0, 0.0]),
                o.v.unwrap_or([0.0, 1.0, 0.0]),
            )
            .map_err(LabError::Config)?,
            self_linking: o.self_linking.unwrap_or(true),
        },
    };

    let birkhoff = match &raw.birkhoff {
        None => BirkhoffParams {
            grid: 16,
            guess: equator(),
        },
        Some(b) => {
            let grid = match &b.grid {
                None => 16,
                Some(g) if *g.get_ref() >= 2 => *g.get_ref(),
                Some(g) => return Err(l.err(g, "`grid` must be at least 2")),
            };
            let guess = state(
                b.x.unwrap_or([1.0, 0.0, 0.0]),
                b.v.unwrap_or([0.0, 1.0, 0.0]),
            )
            .map_err(LabError::Config)?;
            BirkhoffParams { grid, guess }
        }
    };

    let default_family = Family {
        terms: vec![((2, 0), 1.0), ((2, 2), 0.3)],
    };
    let default_grid: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
    let scan = match &raw.scan {
        None => ScanParams {
            family: default_family,
            epsilons: default_grid,
            guesses: coordinate_circles(),
            jitter: 0.0,
        },
        Some(s) => {
            let family = match &s.terms {
                None => default_family,
                Some(t) => {
                    terms_of(&l, t, 1.0)?;
                    Family {
                        terms: t.get_ref().iter().map(|&(l, m, w)| ((l, m), w)).collect(),
                    }
                }
            };
            let mut epsilons = match (&s.epsilons, &s.range) {
                (Some(_), Some(r)) => {
                    return Err(l.err(r, "give either `epsilons` or `range`, not both"))
                }
                (Some(e), None) => {
                    if e.get_ref().is_empty() {
                        return Err(l.err(e, "`epsilons` must not be empty"));
                    }
                    if e.get_ref().iter().any(|v| !v.is_finite()) {
                        return Err(l.err(e, "`epsilons` must be finite"));
                    }
                    e.get_ref().clone()
                }
                (None, Some(r)) => {
                    let RawRange { start, stop, count } = *r.get_ref();
                    if !(start.is_finite() && stop.is_finite()) || count == 0 {
                        return Err(l.err(r, "`range` needs finite bounds and count >= 1"));
                    }
                    if count == 1 && start != stop || !(start < stop) && count > 1 {
                        return Err(l.err(
                            r,
                            format!("`range` is not well-ordered: start {start}, stop {stop}"),
                        ));
                    }
                    if count == 1 {
                        vec![start]
                    } else {
                        (0..count)
                            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
                            .collect()
                    }
                }
                (None, None) => default_grid,
            };
            epsilons.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let guesses = match &s.guesses {
                None => coordinate_circles(),
                Some(g) => {
                    if g.get_ref().is_empty() {
                        return Err(l.err(g, "`guesses` must not be empty"));
                    }
                    g.get_ref()
                        .iter()
                        .map(|r| state(r.x, r.v))
                        .collect::<Result<_, _>>()
                        .map_err(|e| l.err(g, e))?
                }
            };
            let jitter = match &s.jitter {
                None => 0.0,
                Some(j) if *j.get_ref() >= 0.0 && j.get_ref().is_finite() => *j.get_ref(),
                Some(j) => return Err(l.err(j, "`jitter` must be non-negative")),
            };
            ScanParams {
                family,
                epsilons,
                guesses,
                jitter,
            }
        }
    };

    let identities = match &raw.identities {
        None => IdentitiesParams {
            samples: 10_000,
            duration: 10.0,
        },
        Some(i) => IdentitiesParams {
            samples: match &i.samples {
                None => 10_000,
                Some(n) if *n.get_ref() > 0 => *n.get_ref(),
                Some(n) => return Err(l.err(n, "`samples` must be at least 1")),
            },
            duration: l.positive(&i.duration, "duration", 10.0)?,
        },
    };

    Ok(ExperimentConfig {
        task,
        seed: raw.seed.unwrap_or(0),
        metric,
        tol,
        closure,
        t_max,
        out_dir: raw.output.and_then(|o| o.dir).map(PathBuf::from),
        integrate,
        orbit,
        birkhoff,
        scan,
        identities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse("").unwrap();
        assert!(c.metric.is_round());
        assert_eq!(c.scan.guesses.len(), 6);
        assert_eq!(c.scan.epsilons.len(), 10);
        assert_eq!(c.task, None);
    }

    #[test]
    fn family_metric_and_range() {
        let c = parse(
            "task = \"scan\"\n[metric]\nterms = [[2, 0, 1.0]]\nepsilon = 0.1\n[scan]\nrange = { start = 0.0, stop = 0.1, count = 3 }\n",
        )
        .unwrap();
        assert_eq!(c.task, Some(Task::Scan));
        assert_eq!(c.metric.coefficients()[&(2, 0)], 0.1);
        assert_eq!(c.scan.epsilons, vec![0.0, 0.05, 0.1]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("seed = 1\n\n[tolerances]\nrtol = -1e-3\n").unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
        let e = parse("[scan]\nrange = { start = 0.2, stop = 0.1, count = 4 }\n").unwrap_err();
        assert!(
            e.to_string().contains("line 2") && e.to_string().contains("well-ordered"),
            "{e}"
        );
        let e = parse("[metric]\ncoefficients = [[9, 0, 0.1]]\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse("seed = 1\nbogus = 3\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse("task = \"dance\"\n").unwrap_err();
        assert!(e.to_string().contains("unknown task"), "{e}");
    }
}
