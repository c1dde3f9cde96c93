//! Gauss linking integrals in ℝ³ and, through stereographic projection, in
//! S³; self-linking of closed Reeb orbits.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::contact::ContactForm;
use crate::error::{Error, Result};
use crate::flows::{integrate_reeb, FlowOptions};
use crate::ode::{Output, Tolerances};
use crate::quat::Quaternion;

/// Push-off distance along the contact frame.
pub const PUSH_OFF: f64 = 1e-3;
/// Largest admissible distance of the linking integral from an integer.
pub const LINKING_RESIDUAL: f64 = 0.05;

const START_SAMPLES: usize = 2048;
const MAX_SAMPLES: usize = 32768;

/// A closed curve sampled uniformly in its parameter `s ∈ [0, 1)`, with
/// derivatives `dγ/ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop<P> {
    pub points: Vec<P>,
    pub tangents: Vec<P>,
}

pub type LoopR3 = Loop<Vector3<f64>>;
pub type LoopS3 = Loop<Quaternion>;

impl<P: Copy> Loop<P> {
    pub fn from_fn(n: usize, f: impl Fn(f64) -> (P, P)) -> Self {
        let (points, tangents) = (0..n).map(|k| f(k as f64 / n as f64)).unzip();
        Self { points, tangents }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Product trapezoid rule for
/// `(1/4π) ∮∮ (a − b)·(da × db) / |a − b|³`.
pub fn gauss_integral(a: &LoopR3, b: &LoopR3) -> f64 {
    let mut total = 0.0;
    for (pa, ta) in a.points.iter().zip(&a.tangents) {
        let mut row = 0.0;
        for (pb, tb) in b.points.iter().zip(&b.tangents) {
            let d = pa - pb;
            let r2 = d.norm_squared();
            row += d.dot(&ta.cross(tb)) / (r2 * r2.sqrt());
        }
        total += row;
    }
    total / (4.0 * PI * a.len() as f64 * b.len() as f64)
}

/// Oriented stereographic projection of S³ from `pole` onto ℝ³.
#[derive(Debug, Clone, Copy)]
pub struct Stereographic {
    pole: Quaternion,
}

impl Stereographic {
    pub fn new(pole: Quaternion) -> Result<Self> {
        Ok(Self {
            pole: pole.checked_unit()?,
        })
    }

    pub fn pole(&self) -> Quaternion {
        self.pole
    }

    /// Image of `q` and the differential applied to `dq`.
    pub fn project(&self, q: Quaternion, dq: Quaternion) -> (Vector3<f64>, Vector3<f64>) {
        // w = −p̄q moves the pole to −1; projection from −1 preserves orientation.
        let pc = -self.pole.conj();
        let (w, dw) = (pc * q, pc * dq);
        let s = 1.0 + w.w;
        let point = w.vector() / s;
        let tangent = dw.vector() / s - w.vector() * (dw.w / (s * s));
        (point, tangent)
    }

    pub fn project_loop(&self, c: &LoopS3) -> LoopR3 {
        let (points, tangents) = c
            .points
            .iter()
            .zip(&c.tangents)
            .map(|(&q, &dq)| self.project(q, dq))
            .unzip();
        Loop { points, tangents }
    }
}

/// Pole far from every sample of the given loops.
fn choose_pole(loops: &[&LoopS3]) -> Quaternion {
    let mut candidates = Vec::new();
    for sign in [1.0, -1.0] {
        for q in [Quaternion::ONE, Quaternion::I, Quaternion::J, Quaternion::K] {
            candidates.push(q.scale(sign));
        }
    }
    for a in [1.0, -1.0] {
        for b in [1.0, -1.0] {
            for c in [1.0, -1.0] {
                candidates.push(Quaternion::new(0.5, 0.5 * a, 0.5 * b, 0.5 * c));
                candidates.push(Quaternion::new(-0.5, 0.5 * a, 0.5 * b, 0.5 * c));
            }
        }
    }
    let clearance = |p: Quaternion| {
        loops
            .iter()
            .flat_map(|l| l.points.iter())
            .map(|&q| (q - p).norm())
            .fold(f64::INFINITY, f64::min)
    };
    candidates
        .into_iter()
        .map(|p| (clearance(p), p))
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|(_, p)| p)
        .unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkingEstimate {
    pub value: f64,
    pub rounded: i64,
    pub residual: f64,
    pub samples: usize,
}

fn estimate(mut integral: impl FnMut(usize) -> Result<f64>) -> Result<LinkingEstimate> {
    let mut n = START_SAMPLES;
    let mut prev = integral(n)?;
    loop {
        let residual = (prev - prev.round()).abs();
        let next_n = 2 * n;
        if next_n > MAX_SAMPLES {
            if residual < LINKING_RESIDUAL {
                return Ok(LinkingEstimate {
                    value: prev,
                    rounded: prev.round() as i64,
                    residual,
                    samples: n,
                });
            }
            return Err(Error::LinkingResidual {
                value: prev,
                residual,
            });
        }
        let value = integral(next_n)?;
        let res = (value - value.round()).abs();
        // Successive refinements must agree on the rounded value.
        if res < LINKING_RESIDUAL
            && (value - prev).abs() < LINKING_RESIDUAL
            && value.round() == prev.round()
        {
            return Ok(LinkingEstimate {
                value,
                rounded: value.round() as i64,
                residual: res,
                samples: next_n,
            });
        }
        prev = value;
        n = next_n;
    }
}

/// Linking number of two disjoint loops in ℝ³, refining the sample count.
pub fn linking_r3(
    a: impl Fn(usize) -> LoopR3,
    b: impl Fn(usize) -> LoopR3,
) -> Result<LinkingEstimate> {
    estimate(|n| Ok(gauss_integral(&a(n), &b(n))))
}

/// Linking number of two disjoint loops in S³.
pub fn linking_s3(
    a: impl Fn(usize) -> Result<LoopS3>,
    b: impl Fn(usize) -> Result<LoopS3>,
) -> Result<LinkingEstimate> {
    let (a0, b0) = (a(256)?, b(256)?);
    let proj = Stereographic::new(choose_pole(&[&a0, &b0]))?;
    estimate(|n| {
        Ok(gauss_integral(
            &proj.project_loop(&a(n)?),
            &proj.project_loop(&b(n)?),
        ))
    })
}

/// Samples the closed Reeb orbit of `q0` with period `period`.
pub fn reeb_loop(form: &ContactForm, q0: Quaternion, period: f64, n: usize) -> Result<LoopS3> {
    let opts = FlowOptions {
        tol: Tolerances::precise(),
        output: Output::Uniform(n),
    };
    let traj = integrate_reeb(form, q0, period, &opts)?;
    let gap = traj.closure_gap();
    if !(gap < 1e-8) {
        return Err(Error::OpenOrbit { gap });
    }
    let mut points = Vec::with_capacity(n);
    let mut tangents = Vec::with_capacity(n);
    for p in &traj.points[..n] {
        let q = p.quaternion().unwrap();
        points.push(q);
        tangents.push(form.reeb_field_unchecked(q)?.scale(period));
    }
    Ok(Loop { points, tangents })
}

/// `q ↦ (q + δ·kq)/√(1+δ²)`, moving each point along the contact frame leg.
pub fn push_off(c: &LoopS3, delta: f64) -> LoopS3 {
    let s = 1.0 / (1.0 + delta * delta).sqrt();
    let lift = |q: Quaternion| (q + (Quaternion::K * q).scale(delta)).scale(s);
    Loop {
        points: c.points.iter().map(|&q| lift(q)).collect(),
        tangents: c.tangents.iter().map(|&t| lift(t)).collect(),
    }
}

/// Self-linking estimate of the closed Reeb orbit through `q0`.
pub fn self_linking_estimate(
    form: &ContactForm,
    q0: Quaternion,
    period: f64,
) -> Result<LinkingEstimate> {
    let q0 = q0.checked_unit()?;
    linking_s3(
        |n| reeb_loop(form, q0, period, n),
        |n| reeb_loop(form, q0, period, n).map(|c| push_off(&c, PUSH_OFF)),
    )
}

pub fn self_linking_of(form: &ContactForm, q0: Quaternion, period: f64) -> Result<i64> {
    Ok(self_linking_estimate(form, q0, period)?.rounded)
}

/// Self-linking number of a closed Reeb orbit trajectory.
pub fn self_linking(form: &ContactForm, orbit: &crate::flows::Trajectory) -> Result<i64> {
    let q0 = orbit
        .first()
        .quaternion()
        .ok_or_else(|| Error::InvalidArgument("orbit must lie on S3".into()))?;
    let gap = orbit.closure_gap();
    if !(gap < crate::flows::CLOSURE_TOL) {
        return Err(Error::OpenOrbit { gap });
    }
    self_linking_of(form, q0, orbit.duration())
}
