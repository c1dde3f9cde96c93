//! Closed geodesics by Newton shooting, their Reeb lifts to S³, monodromy by
//! three independent routes, and linear stability classification.
//!
//! # Record schema
//!
//! [`ClosedOrbitRecord`] serializes to TOML (`schema_version = 1`):
//!
//! ```toml
//! schema_version = 1
//! period = 6.283185307179586          # minimal geodesic period
//! found_period = 6.283185307179586    # period at which Newton converged
//! period_multiple = 1                 # found_period / period
//! classification = "degenerate"       # elliptic | hyp-plus | hyp-minus | degenerate
//! monodromy = [[1.0, 0.0], [0.0, 1.0]]
//! shooting_monodromy = [[1.0, 0.0], [0.0, 1.0]]
//! cz_index = 3                        # optional, Reeb orbit
//! self_linking = -1                   # optional, Reeb orbit
//!
//! [[metric]]                          # one table per nonzero coefficient
//! l = 2
//! m = 0
//! value = 0.05
//!
//! [initial]
//! x = [1.0, 0.0, 0.0]
//! v = [0.0, 1.0, 0.0]
//!
//! [eigenvalues]
//! re = [1.0, 1.0]
//! im = [0.0, 0.0]
//!
//! [traces]
//! jacobi = 2.0
//! linearized = 2.0
//! shooting = 2.0
//!
//! [residuals]
//! closure_gap = 1e-12
//! det_gap = 1e-12
//! iterations = 0
//!
//! [lift]
//! q0 = [0.5, 0.5, 0.5, 0.5]
//! period = 12.566370614359172
//! sheets = 2
//! closure_gap = 1e-12
//! classification = "degenerate"
//! monodromy = [[1.0, 0.0], [0.0, 1.0]]
//! ```
//!
//! Matrices are stored row by row. `monodromy` is the linearized Poincaré map
//! of the geodesic in the frame pushed forward from the contact frame of the
//! lift; `lift.monodromy` is `Φ(1)` of the Reeb orbit, which covers the
//! geodesic `sheets` times.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{lift_map, lift_map_differential, ContactForm, TangentState};
use crate::error::{Error, Result};
use crate::flows::{
    geodesic_acceleration, integrate_geodesic, integrate_reeb, jacobi_over, linearized_flow,
    pack_state, state_distance, unit_state, unpack_state, FlowOptions, GeodesicSystem,
};
use crate::linking;
use crate::metric::ConformalMetric;
use crate::ode::{self, Output, Tolerances};
use crate::quat::{lift, Quaternion, UnitTangent};
use crate::winding::{cz_index, DEGENERACY_TOL, DET_TOL};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Elliptic,
    HypPlus,
    HypMinus,
    Degenerate,
}

impl Classification {
    pub fn from_trace(trace: f64) -> Self {
        if (trace.abs() - 2.0).abs() <= DEGENERACY_TOL {
            Classification::Degenerate
        } else if trace.abs() < 2.0 {
            Classification::Elliptic
        } else if trace > 0.0 {
            Classification::HypPlus
        } else {
            Classification::HypMinus
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Elliptic => "elliptic",
            Classification::HypPlus => "hyp-plus",
            Classification::HypMinus => "hyp-minus",
            Classification::Degenerate => "degenerate",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Eigenvalue pair `re[k] + i·im[k]`: `(μ, 1/μ)` or `e^{±iθ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalues {
    pub re: [f64; 2],
    pub im: [f64; 2],
}

impl Eigenvalues {
    pub fn product(&self) -> (f64, f64) {
        let (a, b) = (self.re[0], self.im[0]);
        let (c, d) = (self.re[1], self.im[1]);
        (a * c - b * d, a * d + b * c)
    }
}

pub fn eigenvalues(m: &Matrix2<f64>) -> Eigenvalues {
    let half = 0.5 * m.trace();
    let disc = half * half - m.determinant();
    if disc >= 0.0 {
        let r = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = half + half.signum() * r;
        let small = if big != 0.0 {
            m.determinant() / big
        } else {
            half - r
        };
        Eigenvalues {
            re: [big, small],
            im: [0.0, 0.0],
        }
    } else {
        let r = (-disc).sqrt();
        Eigenvalues {
            re: [half, half],
            im: [r, -r],
        }
    }
}

/// Classification and eigenvalues of a determinant-one 2×2 matrix.
pub fn classify(m: &Matrix2<f64>) -> Result<(Classification, Eigenvalues)> {
    let gap = m.determinant() - 1.0;
    if !(gap.abs() <= 1e-6) {
        return Err(Error::DeterminantGap { gap });
    }
    Ok((Classification::from_trace(m.trace()), eigenvalues(m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub l: u32,
    pub m: i32,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialPoint {
    pub x: [f64; 3],
    pub v: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub jacobi: f64,
    pub linearized: f64,
    pub shooting: f64,
}

impl Traces {
    pub fn max_disagreement(&self) -> f64 {
        let Traces {
            jacobi: a,
            linearized: b,
            shooting: c,
        } = *self;
        (a - b).abs().max((a - c).abs()).max((b - c).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub closure_gap: f64,
    pub det_gap: f64,
    pub iterations: u32,
}

/// The closed Reeb orbit on S³ over a closed geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReebLift {
    pub q0: [f64; 4],
    pub period: f64,
    pub sheets: u32,
    pub closure_gap: f64,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cz_index: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_linking: Option<i64>,
    pub monodromy: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedOrbitRecord {
    pub schema_version: u32,
    pub period: f64,
    pub found_period: f64,
    pub period_multiple: u32,
    pub classification: Classification,
    pub monodromy: [[f64; 2]; 2],
    pub shooting_monodromy: [[f64; 2]; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cz_index: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_linking: Option<i64>,
    pub metric: Vec<Coefficient>,
    pub initial: InitialPoint,
    pub eigenvalues: Eigenvalues,
    pub traces: Traces,
    pub residuals: Residuals,
    pub lift: ReebLift,
}

pub fn to_rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

pub fn from_rows(r: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn check_matrix(name: &str, m: &Matrix2<f64>, class: Classification) -> Result<()> {
    let gap = m.determinant() - 1.0;
    if !(gap.abs() <= DET_TOL) {
        return Err(Error::Record(format!(
            "{name}: determinant gap {gap:e} exceeds {DET_TOL:e}"
        )));
    }
    let want = Classification::from_trace(m.trace());
    if want != class {
        return Err(Error::Record(format!(
            "{name}: classification {class} inconsistent with trace {} ({want})",
            m.trace()
        )));
    }
    Ok(())
}

impl ClosedOrbitRecord {
    pub fn metric(&self) -> Result<ConformalMetric> {
        ConformalMetric::from_coefficients(self.metric.iter().map(|c| ((c.l, c.m), c.value)))
    }

    pub fn initial_state(&self) -> TangentState {
        TangentState {
            x: Vector3::from(self.initial.x),
            v: Vector3::from(self.initial.v),
        }
    }

    pub fn lift_q0(&self) -> Quaternion {
        Quaternion::from_array(self.lift.q0)
    }

    pub fn monodromy_matrix(&self) -> Matrix2<f64> {
        from_rows(&self.monodromy)
    }

    /// Record invariants: determinant gaps, trace-consistent classes and
    /// eigenvalue reciprocity.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Record(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Record(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if self.period_multiple == 0 {
            return Err(Error::Record("period_multiple must be at least 1".into()));
        }
        check_matrix("monodromy", &self.monodromy_matrix(), self.classification)?;
        check_matrix(
            "lift.monodromy",
            &from_rows(&self.lift.monodromy),
            self.lift.classification,
        )?;
        let (re, im) = self.eigenvalues.product();
        if !((re - 1.0).abs() <= DET_TOL && im.abs() <= DET_TOL) {
            return Err(Error::Record(format!(
                "eigenvalue product {re} + {im}i is not 1"
            )));
        }
        if self.lift.sheets == 0 || self.lift.sheets > 2 {
            return Err(Error::Record(format!(
                "lift.sheets must be 1 or 2, got {}",
                self.lift.sheets
            )));
        }
        self.metric()
            .map_err(|e| Error::Record(format!("metric: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Record(e.to_string()))
    }

    /// Parses and validates a record.
    pub fn from_toml(text: &str) -> Result<Self> {
        let record: Self = toml::from_str(text).map_err(|e| Error::Record(e.to_string()))?;
        record.validate()?;
        Ok(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FindOptions {
    /// Closure gap at which Newton stops.
    pub tol: f64,
    pub max_iterations: u32,
    /// Time cap for one section return.
    pub t_max: f64,
    pub integrator: Tolerances,
    pub self_linking: bool,
}

impl Default for FindOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 50,
            t_max: 100.0,
            integrator: Tolerances::precise(),
            self_linking: false,
        }
    }
}

const NEWTON_STEP: f64 = 1e-6;
const SHOOTING_STEP: f64 = 1e-6;

/// Local section through a guess: points `(a, b)` map to the unit vector at
/// `cos a·x₀ + sin a·n₀` in direction `cos b·v₀ + sin b·(x × v₀)`.
struct Section<'a> {
    metric: &'a ConformalMetric,
    x0: Vector3<f64>,
    v0: Vector3<f64>,
    n0: Vector3<f64>,
}

impl<'a> Section<'a> {
    fn new(metric: &'a ConformalMetric, guess: &TangentState) -> Self {
        let x0 = guess.x.normalize();
        let v0 = (guess.v - x0 * x0.dot(&guess.v)).normalize();
        Self {
            metric,
            x0,
            v0,
            n0: x0.cross(&v0),
        }
    }

    fn point(&self, z: [f64; 2]) -> TangentState {
        let x = self.x0 * z[0].cos() + self.n0 * z[0].sin();
        let dir = self.v0 * z[1].cos() + x.cross(&self.v0) * z[1].sin();
        unit_state(self.metric, x, dir)
    }

    fn coords(&self, s: &TangentState) -> [f64; 2] {
        let a = s.x.dot(&self.n0).atan2(s.x.dot(&self.x0));
        let v = s.v.normalize();
        let b = v.dot(&s.x.cross(&self.v0)).atan2(v.dot(&self.v0));
        [a, b]
    }

    fn first_return(
        &self,
        start: &TangentState,
        opts: &FindOptions,
    ) -> Result<(TangentState, f64)> {
        let sys = GeodesicSystem {
            metric: self.metric,
        };
        let (x0, v0) = (self.x0, self.v0);
        let event = move |y: &[f64; 6]| Vector3::new(y[0], y[1], y[2]).dot(&v0);
        let accept = move |t: f64, y: &[f64; 6]| {
            let s = unpack_state(y);
            t > 1e-3 && s.x.dot(&x0) > 0.0 && s.v.dot(&v0) > 0.0
        };
        match ode::integrate_to_event(
            &sys,
            0.0,
            &pack_state(start),
            opts.t_max,
            &opts.integrator,
            event,
            accept,
        )? {
            Some(c) => Ok((unpack_state(&c.y), c.t)),
            None => Err(Error::NoReturn { t_max: opts.t_max }),
        }
    }

    /// Section coordinates after one return, the return time and the gap.
    fn evaluate(&self, z: [f64; 2], opts: &FindOptions) -> Result<([f64; 2], f64, f64)> {
        let start = self.point(z);
        let (end, t) = self.first_return(&start, opts)?;
        Ok((self.coords(&end), t, state_distance(&start, &end)))
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

/// Newton shooting for a closed geodesic near `guess`, followed by the
/// full orbit analysis.
pub fn find_closed(
    metric: &ConformalMetric,
    guess: &TangentState,
    opts: &FindOptions,
) -> Result<ClosedOrbitRecord> {
    let (p0, found_period, iterations) = shoot(metric, guess, opts)?;
    analyze(metric, &p0, found_period, iterations, opts)
}

fn shoot(
    metric: &ConformalMetric,
    guess: &TangentState,
    opts: &FindOptions,
) -> Result<(TangentState, f64, u32)> {
    if !(guess.x.norm() > 0.0 && guess.v.cross(&guess.x).norm() > 0.0) {
        return Err(Error::InvalidTangent(
            "guess needs a nonzero base point and a transverse velocity".into(),
        ));
    }
    let section = Section::new(metric, guess);
    let mut z = [0.0, 0.0];
    let (mut image, mut period, mut gap) = section.evaluate(z, opts)?;
    for iteration in 0..opts.max_iterations {
        if gap < opts.tol {
            return Ok((section.point(z), period, iteration));
        }
        let residual =
            nalgebra::Vector2::new(angle_diff(image[0], z[0]), angle_diff(image[1], z[1]));
        let mut jac = Matrix2::zeros();
        for i in 0..2 {
            let (mut zp, mut zm) = (z, z);
            zp[i] += NEWTON_STEP;
            zm[i] -= NEWTON_STEP;
            let (ip, _, _) = section.evaluate(zp, opts)?;
            let (im, _, _) = section.evaluate(zm, opts)?;
            for r in 0..2 {
                jac[(r, i)] = angle_diff(ip[r], im[r]) / (2.0 * NEWTON_STEP);
            }
        }
        jac -= Matrix2::identity();
        let step = jac
            .pseudo_inverse(1e-12)
            .map_err(|_| Error::NoConvergence {
                iterations: iteration as usize,
                residual: gap,
            })
            .map(|pinv| -(pinv * residual))?;
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let trial = [z[0] + scale * step[0], z[1] + scale * step[1]];
            if let Ok((ti, tp, tg)) = section.evaluate(trial, opts) {
                if tg < gap {
                    z = trial;
                    image = ti;
                    period = tp;
                    gap = tg;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::NoConvergence {
                iterations: iteration as usize + 1,
                residual: gap,
            });
        }
    }
    if gap < opts.tol {
        return Ok((section.point(z), period, opts.max_iterations));
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations as usize,
        residual: gap,
    })
}

/// Unit quaternion over a g-unit tangent vector: the preimage under `F∘H`.
pub fn lift_state(
    metric: &ConformalMetric,
    p: &TangentState,
    near: Option<Quaternion>,
) -> Result<Quaternion> {
    let t = UnitTangent::projected(p.x, p.v * metric.u(&p.x).exp());
    lift(&t, near)
}

/// Smallest period `T/k`, `k ≤ 8`, at which the orbit of `p0` closes.
fn minimal_period(
    metric: &ConformalMetric,
    p0: &TangentState,
    period: f64,
    opts: &FindOptions,
) -> Result<u32> {
    let flow = FlowOptions {
        tol: opts.integrator,
        output: Output::EveryStep,
    };
    let mut best = 1;
    for k in 2..=8u32 {
        let traj = integrate_geodesic(metric, p0, period / k as f64, &flow)?;
        if traj.closure_gap() < 1e-6 {
            best = k;
        }
    }
    Ok(best)
}

/// Central-difference derivative of the time-`T` geodesic flow along the
/// pushed contact frame, reduced modulo the flow direction.
pub fn shooting_monodromy(
    metric: &ConformalMetric,
    q0: Quaternion,
    period: f64,
    tol: &Tolerances,
) -> Result<Matrix2<f64>> {
    let form = ContactForm::lifted(metric.clone());
    let p0 = lift_map(metric, q0);
    let sys = GeodesicSystem { metric };
    let base = ode::integrate(&sys, 0.0, &pack_state(&p0), period, tol, Output::EveryStep)?;
    let frame = form.xi_frame(q0);

    let basis: Vec<[f64; 6]> = frame
        .iter()
        .map(|&e| {
            let d = lift_map_differential(metric, q0, e);
            [d.dx.x, d.dx.y, d.dx.z, d.dv.x, d.dv.y, d.dv.z]
        })
        .chain(std::iter::once({
            let a = geodesic_acceleration(metric, &p0.x, &p0.v);
            [p0.v.x, p0.v.y, p0.v.z, a.x, a.y, a.z]
        }))
        .collect();
    let gram = Matrix3::from_fn(|i, j| dot6(&basis[i], &basis[j]));
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("degenerate shooting frame".into()))?;

    let mut out = Matrix2::zeros();
    for (col, &e) in frame.iter().enumerate() {
        let plus = pack_state(&lift_map(metric, (q0 + e.scale(SHOOTING_STEP)).normalize()));
        let minus = pack_state(&lift_map(metric, (q0 - e.scale(SHOOTING_STEP)).normalize()));
        let yp = ode::replay(&sys, &base.steps, &plus)?;
        let ym = ode::replay(&sys, &base.steps, &minus)?;
        let mut d = [0.0; 6];
        for k in 0..6 {
            d[k] = (yp[k] - ym[k]) / (2.0 * SHOOTING_STEP);
        }
        let rhs = Vector3::new(
            dot6(&basis[0], &d),
            dot6(&basis[1], &d),
            dot6(&basis[2], &d),
        );
        let c = gram_inv * rhs;
        out[(0, col)] = c[0];
        out[(1, col)] = c[1];
    }
    Ok(out)
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full analysis of a closed geodesic through `p0` closing at `found_period`.
pub fn analyze(
    metric: &ConformalMetric,
    p0: &TangentState,
    found_period: f64,
    iterations: u32,
    opts: &FindOptions,
) -> Result<ClosedOrbitRecord> {
    let tol = opts.integrator;
    let multiple = minimal_period(metric, p0, found_period, opts)?;
    let period = found_period / multiple as f64;

    let flow = FlowOptions {
        tol,
        output: Output::EveryStep,
    };
    let geodesic = integrate_geodesic(metric, p0, period, &flow)?;
    let closure_gap = geodesic.closure_gap();

    let jacobi = jacobi_over(metric, p0, period, &tol)?;
    let q0 = lift_state(metric, p0, None)?;
    let shooting = shooting_monodromy(metric, q0, period, &tol)?;

    let form = ContactForm::lifted(metric.clone());
    let half = integrate_reeb(&form, q0, period, &flow)?;
    let q_end = half.last().quaternion().unwrap();
    let sheets = if (q_end + q0).norm() < 1e-6 {
        2
    } else if (q_end - q0).norm() < 1e-6 {
        1
    } else {
        return Err(Error::OpenOrbit {
            gap: (q_end + q0).norm().min((q_end - q0).norm()),
        });
    };
    let lift_period = sheets as f64 * period;
    let reeb = integrate_reeb(&form, q0, lift_period, &flow)?;
    let lift_gap = reeb.closure_gap();
    let linear = linearized_flow(&form, q0, lift_period, &[1.0 / sheets as f64], &tol)?;
    let monodromy = linear.arc.at(1.0 / sheets as f64);
    let lift_monodromy = linear.arc.end();

    let (classification, eigen) = classify(&monodromy)?;
    let (lift_class, _) = classify(&lift_monodromy)?;
    let lift_cz = if lift_class == Classification::Degenerate {
        None
    } else {
        Some(cz_index(&linear.arc)?)
    };
    let lift_sl = if opts.self_linking {
        Some(linking::self_linking_of(&form, q0, lift_period)?)
    } else {
        None
    };

    let det_gap = [monodromy, lift_monodromy, jacobi, shooting]
        .iter()
        .map(|m| (m.determinant() - 1.0).abs())
        .fold(linear.arc.max_det_gap(), f64::max);

    Ok(ClosedOrbitRecord {
        schema_version: SCHEMA_VERSION,
        period,
        found_period,
        period_multiple: multiple,
        classification,
        monodromy: to_rows(&monodromy),
        shooting_monodromy: to_rows(&shooting),
        cz_index: lift_cz,
        self_linking: lift_sl,
        metric: metric
            .coefficients()
            .iter()
            .map(|(&(l, m), &value)| Coefficient { l, m, value })
            .collect(),
        initial: InitialPoint {
            x: p0.x.into(),
            v: p0.v.into(),
        },
        eigenvalues: eigen,
        traces: Traces {
            jacobi: jacobi.trace(),
            linearized: monodromy.trace(),
            shooting: shooting.trace(),
        },
        residuals: Residuals {
            closure_gap,
            det_gap,
            iterations,
        },
        lift: ReebLift {
            q0: q0.to_array(),
            period: lift_period,
            sheets,
            closure_gap: lift_gap,
            classification: lift_class,
            cz_index: lift_cz,
            self_linking: lift_sl,
            monodromy: to_rows(&lift_monodromy),
        },
    })
}
