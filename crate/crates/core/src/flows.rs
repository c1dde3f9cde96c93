//! Geodesic flow on the unit tangent bundle, Reeb flow on S³, their
//! linearizations, and the conjugacy `F∘H` between them.
//!
//! # Trajectory CSV
//!
//! [`Trajectory::write_csv`] emits one header line and one row per sample.
//! Unit-tangent trajectories use the columns
//! `t,chart,x1,x2,x3,v1,v2,v3,res_base,res_speed,res_tangency`, where the
//! residuals are `|x| − 1`, `g(v,v) − 1` and `⟨x, v⟩`. S³ trajectories use
//! `t,chart,q0,q1,q2,q3,res_norm,res_reeb` with `|q| − 1` and `λ(q̇) − 1`.
//! The `chart` column is `T1S2` or `S3`. Floats are written with the
//! shortest round-trip representation.

use std::io::{self, Write};

use nalgebra::{Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{lift_map, ContactForm, TangentState};
use crate::error::{Error, Result};
use crate::metric::ConformalMetric;
use crate::ode::{self, OdeSystem, Output, Tolerances};
use crate::quat::Quaternion;
use crate::winding::SymplecticArc;

/// Tolerance on the endpoint gap of a closed orbit.
pub const CLOSURE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhasePoint {
    /// `(x, v)` in the unit tangent bundle of `(S², g)`.
    Tangent(TangentState),
    /// A unit quaternion.
    Sphere(Quaternion),
}

impl PhasePoint {
    pub fn chart(&self) -> &'static str {
        match self {
            PhasePoint::Tangent(_) => "T1S2",
            PhasePoint::Sphere(_) => "S3",
        }
    }

    pub fn tangent(&self) -> Option<&TangentState> {
        match self {
            PhasePoint::Tangent(t) => Some(t),
            PhasePoint::Sphere(_) => None,
        }
    }

    pub fn quaternion(&self) -> Option<Quaternion> {
        match self {
            PhasePoint::Sphere(q) => Some(*q),
            PhasePoint::Tangent(_) => None,
        }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        match (self, other) {
            (PhasePoint::Tangent(a), PhasePoint::Tangent(b)) => state_distance(a, b),
            (PhasePoint::Sphere(a), PhasePoint::Sphere(b)) => (*a - *b).norm(),
            _ => f64::INFINITY,
        }
    }
}

/// Euclidean distance in `ℝ³ × ℝ³`.
pub fn state_distance(a: &TangentState, b: &TangentState) -> f64 {
    ((a.x - b.x).norm_squared() + (a.v - b.v).norm_squared()).sqrt()
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// Constraint residuals per sample (see the CSV layout).
    pub residuals: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn first(&self) -> &PhasePoint {
        &self.points[0]
    }

    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("trajectories are non-empty")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().unwrap() - self.times[0]
    }

    pub fn closure_gap(&self) -> f64 {
        self.first().distance(self.last())
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        match self.points.first() {
            Some(PhasePoint::Tangent(_)) | None => writeln!(
                w,
                "t,chart,x1,x2,x3,v1,v2,v3,res_base,res_speed,res_tangency"
            )?,
            Some(PhasePoint::Sphere(_)) => writeln!(w, "t,chart,q0,q1,q2,q3,res_norm,res_reeb")?,
        }
        for ((t, p), r) in self.times.iter().zip(&self.points).zip(&self.residuals) {
            write!(w, "{t:?},{}", p.chart())?;
            match p {
                PhasePoint::Tangent(s) => {
                    for c in s.x.iter().chain(s.v.iter()) {
                        write!(w, ",{c:?}")?;
                    }
                }
                PhasePoint::Sphere(q) => {
                    for c in q.to_array() {
                        write!(w, ",{c:?}")?;
                    }
                }
            }
            for c in r {
                write!(w, ",{c:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[inline]
fn v3(y: &[f64], at: usize) -> Vector3<f64> {
    Vector3::new(y[at], y[at + 1], y[at + 2])
}

#[inline]
fn put3(y: &mut [f64], at: usize, v: &Vector3<f64>) {
    y[at..at + 3].copy_from_slice(v.as_slice());
}

fn q4(y: &[f64], at: usize) -> Quaternion {
    Quaternion::new(y[at], y[at + 1], y[at + 2], y[at + 3])
}

fn put4(y: &mut [f64], at: usize, q: Quaternion) {
    y[at..at + 4].copy_from_slice(&q.to_array());
}

/// Geodesic acceleration of `e^{2u}g₀` in ambient coordinates:
/// `ẍ = −|v|²x − 2⟨∇u, v⟩v + |v|²∇u`.
pub fn geodesic_acceleration(
    metric: &ConformalMetric,
    x: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Vector3<f64> {
    let grad = metric.grad_u(x);
    let speed2 = v.norm_squared();
    -x * speed2 - v * (2.0 * grad.dot(v)) + grad * speed2
}

/// Projects `(x, v)` onto the g-unit tangent bundle.
pub fn project_state(metric: &ConformalMetric, x: &mut Vector3<f64>, v: &mut Vector3<f64>) {
    *x = x.normalize();
    *v -= *x * x.dot(v);
    let scale = (-metric.u(x)).exp() / v.norm();
    *v *= scale;
}

fn state_residuals(metric: &ConformalMetric, s: &TangentState) -> Vec<f64> {
    vec![
        s.x.norm() - 1.0,
        metric.inner(&s.x, &s.v, &s.v) - 1.0,
        s.x.dot(&s.v),
    ]
}

pub(crate) struct GeodesicSystem<'a> {
    pub metric: &'a ConformalMetric,
}

impl OdeSystem<6> for GeodesicSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 6]) -> Result<[f64; 6]> {
        let (x, v) = (v3(y, 0), v3(y, 3));
        let a = geodesic_acceleration(self.metric, &x, &v);
        let mut out = [0.0; 6];
        put3(&mut out, 0, &v);
        put3(&mut out, 3, &a);
        Ok(out)
    }

    fn project(&self, y: &mut [f64; 6]) {
        let (mut x, mut v) = (v3(y, 0), v3(y, 3));
        project_state(self.metric, &mut x, &mut v);
        put3(y, 0, &x);
        put3(y, 3, &v);
    }
}

pub(crate) fn pack_state(s: &TangentState) -> [f64; 6] {
    let mut y = [0.0; 6];
    put3(&mut y, 0, &s.x);
    put3(&mut y, 3, &s.v);
    y
}

pub(crate) fn unpack_state(y: &[f64]) -> TangentState {
    TangentState {
        x: v3(y, 0),
        v: v3(y, 3),
    }
}

/// Validates g-unit constraints within `1e−8` and projects exactly.
pub fn checked_state(metric: &ConformalMetric, s: &TangentState) -> Result<TangentState> {
    let r = state_residuals(metric, s);
    if r.iter().any(|r| !(r.abs() <= 1e-8)) {
        return Err(Error::InvalidTangent(format!(
            "|x|-1 = {:e}, g(v,v)-1 = {:e}, <x,v> = {:e}",
            r[0], r[1], r[2]
        )));
    }
    let (mut x, mut v) = (s.x, s.v);
    project_state(metric, &mut x, &mut v);
    Ok(TangentState { x, v })
}

/// Unit tangent vector of `g` at `x` in the g₀-direction of `v`.
pub fn unit_state(metric: &ConformalMetric, x: Vector3<f64>, v: Vector3<f64>) -> TangentState {
    let (mut x, mut v) = (x, v);
    project_state(metric, &mut x, &mut v);
    TangentState { x, v }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub tol: Tolerances,
    pub output: Output,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            output: Output::EveryStep,
        }
    }
}

fn check_duration(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "integration time must be non-negative, got {t}"
        )));
    }
    Ok(())
}

/// Unit-speed geodesic of `metric` from `p0` over `[0, T]`.
pub fn integrate_geodesic(
    metric: &ConformalMetric,
    p0: &TangentState,
    duration: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    check_duration(duration)?;
    geodesic_between(metric, p0, 0.0, duration, opts)
}

/// Geodesic from `p0` at time `t0` to time `t1`; `t1 < t0` integrates backward.
pub fn geodesic_between(
    metric: &ConformalMetric,
    p0: &TangentState,
    t0: f64,
    t1: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let p0 = checked_state(metric, p0)?;
    let sys = GeodesicSystem { metric };
    let sol = ode::integrate(&sys, t0, &pack_state(&p0), t1, &opts.tol, opts.output)?;
    let points: Vec<_> = sol.y.iter().map(|y| unpack_state(y)).collect();
    Ok(Trajectory {
        times: sol.t,
        residuals: points.iter().map(|s| state_residuals(metric, s)).collect(),
        points: points.into_iter().map(PhasePoint::Tangent).collect(),
        accepted_steps: sol.accepted,
        rejected_steps: sol.rejected,
    })
}

pub(crate) struct ReebSystem<'a> {
    pub form: &'a ContactForm,
}

impl OdeSystem<4> for ReebSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        let q = Quaternion::from_array(*y).normalize();
        Ok(self.form.reeb_field_unchecked(q)?.to_array())
    }

    fn project(&self, y: &mut [f64; 4]) {
        *y = Quaternion::from_array(*y).normalize().to_array();
    }
}

fn reeb_residuals(form: &ContactForm, q: Quaternion) -> Vec<f64> {
    let speed = form
        .reeb_field_unchecked(q.normalize())
        .map(|y| form.eval(q, y) - 1.0)
        .unwrap_or(f64::NAN);
    vec![q.norm() - 1.0, speed]
}

/// Integral curve of the Reeb field of `form` from `q0` over `[0, T]`.
pub fn integrate_reeb(
    form: &ContactForm,
    q0: Quaternion,
    duration: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    check_duration(duration)?;
    reeb_between(form, q0, 0.0, duration, opts)
}

pub fn reeb_between(
    form: &ContactForm,
    q0: Quaternion,
    t0: f64,
    t1: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let q0 = q0.checked_unit()?;
    let sys = ReebSystem { form };
    let sol = ode::integrate(&sys, t0, &q0.to_array(), t1, &opts.tol, opts.output)?;
    let points: Vec<_> = sol.y.iter().map(|y| Quaternion::from_array(*y)).collect();
    Ok(Trajectory {
        times: sol.t,
        residuals: points.iter().map(|&q| reeb_residuals(form, q)).collect(),
        points: points.into_iter().map(PhasePoint::Sphere).collect(),
        accepted_steps: sol.accepted,
        rejected_steps: sol.rejected,
    })
}

/// Maximum distance between `(F∘H)(φᵗ_Reeb(q0))` and `φᵗ_geo((F∘H)(q0))` on a
/// uniform grid of spacing at most 0.05 over `[0, T]`.
pub fn conjugacy_residual(
    metric: &ConformalMetric,
    q0: Quaternion,
    duration: f64,
    tol: &Tolerances,
) -> Result<f64> {
    check_duration(duration)?;
    if duration == 0.0 {
        return Ok(0.0);
    }
    let q0 = q0.checked_unit()?;
    let n = ((duration / 0.05).ceil() as usize).max(10);
    let opts = FlowOptions {
        tol: *tol,
        output: Output::Uniform(n),
    };
    let form = ContactForm::lifted(metric.clone());
    let reeb = integrate_reeb(&form, q0, duration, &opts)?;
    let geo = integrate_geodesic(metric, &lift_map(metric, q0), duration, &opts)?;
    let mut worst = 0.0f64;
    for (a, b) in reeb.points.iter().zip(&geo.points) {
        let mapped = lift_map(metric, a.quaternion().expect("Reeb trajectory"));
        worst = worst.max(state_distance(
            &mapped,
            b.tangent().expect("geodesic trajectory"),
        ));
    }
    Ok(worst)
}

/// Reeb flow together with two solutions of the variational equation.
/// `DY·δ` is taken by central differences of the Reeb field along `δ`.
pub(crate) struct LinearizedReeb<'a> {
    pub form: &'a ContactForm,
}

const DIRECTIONAL_STEP: f64 = 1e-6;

impl LinearizedReeb<'_> {
    fn directional(&self, q: Quaternion, d: Quaternion) -> Result<Quaternion> {
        let n = d.norm();
        if n == 0.0 {
            return Ok(Quaternion::ZERO);
        }
        let e = d.scale(DIRECTIONAL_STEP / n);
        let plus = self.form.reeb_field_unchecked((q + e).normalize())?;
        let minus = self.form.reeb_field_unchecked((q - e).normalize())?;
        Ok((plus - minus).scale(n / (2.0 * DIRECTIONAL_STEP)))
    }
}

impl OdeSystem<12> for LinearizedReeb<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 12]) -> Result<[f64; 12]> {
        let q = q4(y, 0).normalize();
        let mut out = [0.0; 12];
        put4(&mut out, 0, self.form.reeb_field_unchecked(q)?);
        put4(&mut out, 4, self.directional(q, q4(y, 4))?);
        put4(&mut out, 8, self.directional(q, q4(y, 8))?);
        Ok(out)
    }

    fn project(&self, y: &mut [f64; 12]) {
        let q = q4(y, 0).normalize();
        put4(y, 0, q);
        let (d1, d2) = (q4(y, 4).reject(q), q4(y, 8).reject(q));
        put4(y, 4, d1);
        put4(y, 8, d2);
    }
}

/// Coordinates of `δ ∈ T_qS³` modulo the Reeb direction in the dλ-normalized
/// frame `(e₁, e₂)` of ξ: `(dλ(δ, e₂), dλ(e₁, δ))`.
pub fn xi_coordinates(form: &ContactForm, q: Quaternion, delta: Quaternion) -> (f64, f64) {
    let [e1, e2] = form.xi_frame(q);
    (form.d(q, delta, e2), form.d(q, e1, delta))
}

/// Output of [`linearized_flow`].
#[derive(Debug, Clone)]
pub struct LinearizedFlow {
    pub arc: SymplecticArc,
    /// Orbit samples matching the arc samples.
    pub orbit: Vec<Quaternion>,
    /// Largest `|λ(δ)|/|δ|` of the transported frame vectors.
    pub max_lambda_component: f64,
    /// Distance between the orbit endpoint and its start.
    pub endpoint: Quaternion,
}

/// Variational flow along the Reeb orbit of `q0` over `[0, T]`, in the global
/// frame of ξ. The interval is split at each fraction in `marks` so those
/// parameters appear exactly on the sample grid.
pub fn linearized_flow(
    form: &ContactForm,
    q0: Quaternion,
    duration: f64,
    marks: &[f64],
    tol: &Tolerances,
) -> Result<LinearizedFlow> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(
            "linearization needs a positive duration".into(),
        ));
    }
    let q0 = q0.checked_unit()?;
    let sys = LinearizedReeb { form };
    let [e1, e2] = form.xi_frame(q0);
    let mut y = [0.0; 12];
    put4(&mut y, 0, q0);
    put4(&mut y, 4, e1);
    put4(&mut y, 8, e2);

    let mut cuts: Vec<f64> = marks
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < 1.0)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.push(1.0);

    // Keep per-step frame rotation small enough for unambiguous winding.
    let tol = tol.with_h_max(tol.h_max.min(0.05));
    let mut params = vec![0.0];
    let mut states = vec![y];
    let mut start = 0.0;
    for &cut in &cuts {
        let sol = ode::integrate(
            &sys,
            start * duration,
            states.last().unwrap(),
            cut * duration,
            &tol,
            Output::EveryStep,
        )?;
        for (t, s) in sol.t.iter().zip(&sol.y).skip(1) {
            params.push(if *t == cut * duration {
                cut
            } else {
                t / duration
            });
            states.push(*s);
        }
        start = cut;
    }

    let mut matrices = Vec::with_capacity(states.len());
    let mut orbit = Vec::with_capacity(states.len());
    let mut max_lambda = 0.0f64;
    for s in &states {
        let q = q4(s, 0);
        let (d1, d2) = (q4(s, 4), q4(s, 8));
        let (a1, b1) = xi_coordinates(form, q, d1);
        let (a2, b2) = xi_coordinates(form, q, d2);
        let (h, _) = form.multiplier_jet(q);
        for d in [d1, d2] {
            max_lambda = max_lambda.max((form.eval(q, d) / h).abs() / d.norm());
        }
        matrices.push(Matrix2::new(a1, a2, b1, b2));
        orbit.push(q);
    }
    let endpoint = *orbit.last().unwrap();
    Ok(LinearizedFlow {
        arc: SymplecticArc::from_samples(params, matrices)?,
        orbit,
        max_lambda_component: max_lambda,
        endpoint,
    })
}

/// Linearized Reeb flow along a closed orbit, as a symplectic arc.
pub fn integrate_linearized(
    form: &ContactForm,
    orbit: &Trajectory,
    tol: &Tolerances,
) -> Result<SymplecticArc> {
    let q0 = orbit
        .first()
        .quaternion()
        .ok_or_else(|| Error::InvalidArgument("orbit must lie on S3".into()))?;
    let gap = orbit.closure_gap();
    if !(gap < CLOSURE_TOL) {
        return Err(Error::OpenOrbit { gap });
    }
    Ok(linearized_flow(form, q0, orbit.duration(), &[], tol)?.arc)
}

struct JacobiSystem<'a> {
    metric: &'a ConformalMetric,
}

impl OdeSystem<10> for JacobiSystem<'_> {
    fn rhs(&self, t: f64, y: &[f64; 10]) -> Result<[f64; 10]> {
        let mut geo = [0.0; 6];
        geo.copy_from_slice(&y[..6]);
        let g = GeodesicSystem {
            metric: self.metric,
        }
        .rhs(t, &geo)?;
        let k = self.metric.curvature(&v3(y, 0));
        let mut out = [0.0; 10];
        out[..6].copy_from_slice(&g);
        out[6] = y[7];
        out[7] = -k * y[6];
        out[8] = y[9];
        out[9] = -k * y[8];
        Ok(out)
    }

    fn project(&self, y: &mut [f64; 10]) {
        let (mut x, mut v) = (v3(y, 0), v3(y, 3));
        project_state(self.metric, &mut x, &mut v);
        put3(y, 0, &x);
        put3(y, 3, &v);
    }
}

/// Monodromy of `J'' + K(γ(t)) J = 0` over one period of a closed geodesic,
/// acting on `(J, J')`.
pub fn jacobi_monodromy(
    metric: &ConformalMetric,
    geodesic: &Trajectory,
    tol: &Tolerances,
) -> Result<Matrix2<f64>> {
    let p0 = geodesic
        .first()
        .tangent()
        .ok_or_else(|| Error::InvalidArgument("geodesic must lie in T1S2".into()))?;
    let gap = geodesic.closure_gap();
    if !(gap < CLOSURE_TOL) {
        return Err(Error::OpenOrbit { gap });
    }
    jacobi_over(metric, p0, geodesic.duration(), tol)
}

pub(crate) fn jacobi_over(
    metric: &ConformalMetric,
    p0: &TangentState,
    period: f64,
    tol: &Tolerances,
) -> Result<Matrix2<f64>> {
    let mut y = [0.0; 10];
    y[..6].copy_from_slice(&pack_state(p0));
    y[6] = 1.0;
    y[9] = 1.0;
    let sol = ode::integrate(
        &JacobiSystem { metric },
        0.0,
        &y,
        period,
        tol,
        Output::EveryStep,
    )?;
    let e = sol.last();
    Ok(Matrix2::new(e[6], e[8], e[7], e[9]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{liouville, TangentVector};
    use std::f64::consts::PI;

    fn equator() -> TangentState {
        TangentState {
            x: Vector3::x(),
            v: Vector3::y(),
        }
    }

    #[test]
    fn round_great_circle_closes() {
        let round = ConformalMetric::round();
        let traj =
            integrate_geodesic(&round, &equator(), 2.0 * PI, &FlowOptions::default()).unwrap();
        assert!(traj.closure_gap() < 1e-8, "{}", traj.closure_gap());
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn energy_is_conserved_after_projection() {
        let metric = ConformalMetric::from_coefficients([((2, 2), 0.1), ((3, 1), 0.05)]).unwrap();
        let p0 = unit_state(
            &metric,
            Vector3::new(0.3, 0.1, 0.9),
            Vector3::new(1.0, 0.2, -0.3),
        );
        let traj = integrate_geodesic(&metric, &p0, 100.0, &FlowOptions::default()).unwrap();
        for r in &traj.residuals {
            assert!(r[1].abs() < 1e-9 && r[0].abs() < 1e-12 && r[2].abs() < 1e-12);
        }
    }

    #[test]
    fn endpoint_matches_tighter_reference() {
        let metric = ConformalMetric::single(2, 2, 0.1).unwrap();
        let p0 = unit_state(
            &metric,
            Vector3::new(0.2, -0.5, 0.8),
            Vector3::new(0.4, 1.0, 0.3),
        );
        let base = integrate_geodesic(&metric, &p0, 10.0, &FlowOptions::default()).unwrap();
        let fine_opts = FlowOptions {
            tol: Tolerances::default().with_rtol(1e-10 / 32.0),
            ..Default::default()
        };
        let fine = integrate_geodesic(&metric, &p0, 10.0, &fine_opts).unwrap();
        assert!(base.last().distance(fine.last()) < 1e-7);
    }

    #[test]
    fn reversibility() {
        let metric = ConformalMetric::single(3, -2, 0.15).unwrap();
        let p0 = unit_state(
            &metric,
            Vector3::new(-0.2, 0.6, 0.5),
            Vector3::new(0.1, 0.3, -0.4),
        );
        let fwd = integrate_geodesic(&metric, &p0, 20.0, &FlowOptions::default()).unwrap();
        let back = geodesic_between(
            &metric,
            fwd.last().tangent().unwrap(),
            20.0,
            0.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert!(state_distance(back.last().tangent().unwrap(), &p0) < 1e-7);
    }

    #[test]
    fn geodesic_field_has_unit_liouville_value() {
        let metric = ConformalMetric::single(2, 1, 0.3).unwrap();
        let s = unit_state(
            &metric,
            Vector3::new(0.1, 0.2, 0.9),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let spray = TangentVector {
            dx: s.v,
            dv: geodesic_acceleration(&metric, &s.x, &s.v),
        };
        assert!((liouville(&metric, &s, &spray).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lifted_round_reeb_flow_is_hopf_rotation() {
        let form = ContactForm::lifted(ConformalMetric::round());
        let opts = FlowOptions {
            output: Output::Uniform(40),
            ..Default::default()
        };
        let traj = integrate_reeb(&form, Quaternion::ONE, 4.0 * PI, &opts).unwrap();
        for (t, p) in traj.times.iter().zip(&traj.points) {
            let want = Quaternion::exp_i(-t / 2.0);
            assert!(p.quaternion().unwrap().max_abs_diff(want) < 1e-9);
        }
        assert!(traj.closure_gap() < 1e-8);
        assert!(traj.max_residual() < 1e-8);
        let zero = integrate_reeb(&form, Quaternion::ONE, 0.0, &opts).unwrap();
        assert_eq!(zero.points.len(), 1);
    }

    #[test]
    fn conjugacy_round_and_perturbed() {
        let round = ConformalMetric::round();
        let q0 = Quaternion::new(0.3, -0.2, 0.9, 0.1).normalize();
        assert!(conjugacy_residual(&round, q0, 2.0 * PI, &Tolerances::default()).unwrap() < 1e-6);
        assert_eq!(
            conjugacy_residual(&round, q0, 0.0, &Tolerances::default()).unwrap(),
            0.0
        );
        let metric = ConformalMetric::single(3, 1, 0.05).unwrap();
        let r = conjugacy_residual(&metric, q0, 10.0, &Tolerances::default()).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn round_linearization_is_identity_over_hopf_period() {
        let form = ContactForm::lifted(ConformalMetric::round());
        let opts = FlowOptions::default();
        let orbit = integrate_reeb(&form, Quaternion::ONE, 4.0 * PI, &opts).unwrap();
        let arc = integrate_linearized(&form, &orbit, &Tolerances::default()).unwrap();
        assert!((arc.end() - Matrix2::identity()).abs().max() < 1e-6);
        assert!(arc.max_det_gap() < 1e-7);
        // Half the period is not closed on S³.
        let half = integrate_reeb(&form, Quaternion::ONE, 2.0 * PI, &opts).unwrap();
        assert!(matches!(
            integrate_linearized(&form, &half, &Tolerances::default()),
            Err(Error::OpenOrbit { .. })
        ));
    }

    #[test]
    fn linearized_flow_preserves_xi_and_dlambda() {
        let metric = ConformalMetric::from_coefficients([((2, 0), 0.1), ((3, 2), 0.05)]).unwrap();
        let form = ContactForm::lifted(metric);
        let q0 = Quaternion::new(0.5, 0.1, -0.3, 0.8).normalize();
        let flow = linearized_flow(&form, q0, 8.0, &[0.5], &Tolerances::default()).unwrap();
        assert!(
            flow.max_lambda_component < 1e-7,
            "{}",
            flow.max_lambda_component
        );
        assert!(flow.arc.max_det_gap() < 1e-7);
        assert!(flow.arc.params().contains(&0.5));
        let j = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        let c = ContactForm::constant(2.0).unwrap();
        let flow = linearized_flow(&c, q0, 5.0, &[], &Tolerances::default()).unwrap();
        for m in flow.arc.matrices() {
            assert!((m.transpose() * j * m - j).abs().max() < 1e-7);
        }
    }

    #[test]
    fn jacobi_round_identity_and_open_rejection() {
        let round = ConformalMetric::round();
        let traj =
            integrate_geodesic(&round, &equator(), 2.0 * PI, &FlowOptions::default()).unwrap();
        let m = jacobi_monodromy(&round, &traj, &Tolerances::default()).unwrap();
        assert!((m - Matrix2::identity()).abs().max() < 1e-6);
        assert!((m.determinant() - 1.0).abs() < 1e-8);
        let half = integrate_geodesic(&round, &equator(), PI, &FlowOptions::default()).unwrap();
        assert!(matches!(
            jacobi_monodromy(&round, &half, &Tolerances::default()),
            Err(Error::OpenOrbit { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let round = ConformalMetric::round();
        let opts = FlowOptions {
            output: Output::Uniform(4),
            ..Default::default()
        };
        let traj = integrate_geodesic(&round, &equator(), 1.0, &opts).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,chart,x1,x2,x3,v1,v2,v3,res_base,res_speed,res_tangency"
        );
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0.0,T1S2,1.0,0.0,0.0,0.0,1.0,0.0,"));
        assert_eq!(lines[1].split(',').count(), 11);
    }
}
