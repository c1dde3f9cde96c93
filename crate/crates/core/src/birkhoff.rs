//! Birkhoff annulus sections over great-circle geodesics and their return
//! maps.
//!
//! The chart is `(s, θ)` with `s ∈ [0, L)` the g-arclength along γ and
//! `θ ∈ (0, π)` the angle from the direction of γ towards the co-orientation
//! normal `n` of its plane. The Liouville form restricts to `cos θ ds`, so
//! the invariant area density is `sin θ` and the total area is `2L`.
//!
//! # Portrait CSV
//!
//! [`write_portrait`] emits the header `s,theta,s_next,theta_next,return_time`
//! followed by one row per evaluated point.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::Vector3;

use crate::contact::TangentState;
use crate::error::{Error, Result};
use crate::flows::{integrate_geodesic, pack_state, unpack_state, FlowOptions, GeodesicSystem};
use crate::metric::{fibonacci_sphere, ConformalMetric};
use crate::ode::{self, Output, Tolerances};
use crate::orbits::ClosedOrbitRecord;

/// Distance of admissible θ from `{0, π}`.
pub const BAND: f64 = 1e-4;
/// Finite-difference step of [`AnnulusSection::area_jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-5;

const FOURIER_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub s: f64,
    pub theta: f64,
}

impl ChartPoint {
    pub fn new(s: f64, theta: f64) -> Self {
        Self { s, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Return {
    pub point: ChartPoint,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionOptions {
    pub t_max: f64,
    pub tol: Tolerances,
}

impl Default for SectionOptions {
    fn default() -> Self {
        Self {
            t_max: 1e3,
            tol: Tolerances::precise(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnulusSection {
    metric: ConformalMetric,
    record: ClosedOrbitRecord,
    x0: Vector3<f64>,
    t0: Vector3<f64>,
    normal: Vector3<f64>,
    /// `e^{u}` on γ as `a₀ + Σ aₖ cos kφ + bₖ sin kφ`.
    cos: Vec<f64>,
    sin: Vec<f64>,
    length: f64,
    opts: SectionOptions,
}

/// Builds the annulus section over the closed geodesic of `record`.
pub fn build_annulus(
    metric: &ConformalMetric,
    record: &ClosedOrbitRecord,
) -> Result<AnnulusSection> {
    build_annulus_with(metric, record, SectionOptions::default())
}

pub fn build_annulus_with(
    metric: &ConformalMetric,
    record: &ClosedOrbitRecord,
    opts: SectionOptions,
) -> Result<AnnulusSection> {
    for x in fibonacci_sphere(256) {
        let k = metric.curvature(&x);
        if !(k > 0.0) {
            return Err(Error::NonPositiveCurvature {
                curvature: k,
                point: x.into(),
            });
        }
    }
    let p0 = record.initial_state();
    let flow = FlowOptions {
        tol: opts.tol,
        output: Output::Uniform(2048),
    };
    let traj = integrate_geodesic(metric, &p0, record.period, &flow)?;
    let samples: Vec<Vector3<f64>> = traj.points.iter().map(|p| p.tangent().unwrap().x).collect();
    check_simple(&samples)?;

    let x0 = p0.x.normalize();
    let t0 = (p0.v - x0 * x0.dot(&p0.v)).normalize();
    let normal = x0.cross(&t0);
    let off_plane = samples
        .iter()
        .map(|x| x.dot(&normal).abs())
        .fold(0.0, f64::max);
    if off_plane > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "annulus sections need a great-circle geodesic; orbit leaves its plane by {off_plane:e}"
        )));
    }

    let n = FOURIER_SAMPLES;
    let values: Vec<f64> = (0..n)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n as f64;
            metric
                .conformal_factor(&(x0 * phi.cos() + t0 * phi.sin()))
                .sqrt()
        })
        .collect();
    let harmonics = n / 2 - 1;
    let mut cos = vec![0.0; harmonics + 1];
    let mut sin = vec![0.0; harmonics + 1];
    for k in 0..=harmonics {
        for (j, v) in values.iter().enumerate() {
            let a = 2.0 * PI * (k * j) as f64 / n as f64;
            cos[k] += v * a.cos();
            sin[k] += v * a.sin();
        }
        let w = if k == 0 { 1.0 } else { 2.0 } / n as f64;
        cos[k] *= w;
        sin[k] *= w;
    }
    let length = 2.0 * PI * cos[0];
    Ok(AnnulusSection {
        metric: metric.clone(),
        record: record.clone(),
        x0,
        t0,
        normal,
        cos,
        sin,
        length,
        opts,
    })
}

/// Rejects sampled curves that come within `1e−6` of themselves away from
/// neighbouring samples.
fn check_simple(samples: &[Vector3<f64>]) -> Result<()> {
    let n = samples.len() - 1;
    let spacing = (1..=n)
        .map(|i| (samples[i] - samples[i - 1]).norm())
        .fold(0.0, f64::max);
    let window = 4;
    for i in 0..n {
        for j in (i + window)..n {
            if n - j + i < window {
                continue;
            }
            let d = (samples[i] - samples[j]).norm();
            if d < 1e-6 {
                return Err(Error::NotSimple(format!(
                    "samples {i} and {j} coincide (distance {d:e})"
                )));
            }
            if d < 0.5 * spacing {
                return Err(Error::NotSimple(format!(
                    "samples {i} and {j} are {d:e} apart"
                )));
            }
        }
    }
    Ok(())
}

impl AnnulusSection {
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn record(&self) -> &ClosedOrbitRecord {
        &self.record
    }

    pub fn metric(&self) -> &ConformalMetric {
        &self.metric
    }

    pub fn options(&self) -> &SectionOptions {
        &self.opts
    }

    /// Arclength `s(φ)` and `ds/dφ = e^{u}` at angle `φ` along γ.
    fn arclength(&self, phi: f64) -> (f64, f64) {
        let mut s = self.cos[0] * phi;
        let mut ds = self.cos[0];
        for k in 1..self.cos.len() {
            let kf = k as f64;
            let (sn, cs) = (kf * phi).sin_cos();
            s += (self.cos[k] * sn - self.sin[k] * (cs - 1.0)) / kf;
            ds += self.cos[k] * cs + self.sin[k] * sn;
        }
        (s, ds)
    }

    fn angle_of(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.length);
        let mut phi = 2.0 * PI * s / self.length;
        for _ in 0..50 {
            let (f, df) = self.arclength(phi);
            let dphi = (f - s) / df;
            phi -= dphi;
            if dphi.abs() < 1e-15 {
                break;
            }
        }
        phi
    }

    fn check_band(&self, theta: f64) -> Result<()> {
        if !(theta > BAND && theta < PI - BAND) {
            return Err(Error::OutsideAnnulus { theta });
        }
        Ok(())
    }

    /// The g-unit vector at chart point `p`.
    pub fn decode(&self, p: ChartPoint) -> Result<TangentState> {
        if !(p.theta > 0.0 && p.theta < PI) || !p.s.is_finite() {
            return Err(Error::OutsideAnnulus { theta: p.theta });
        }
        let phi = self.angle_of(p.s);
        let (sn, cs) = phi.sin_cos();
        let x = self.x0 * cs + self.t0 * sn;
        let tangent = self.t0 * cs - self.x0 * sn;
        let v =
            (tangent * p.theta.cos() + self.normal * p.theta.sin()) * (-self.metric.u(&x)).exp();
        Ok(TangentState { x, v })
    }

    /// Chart coordinates of a unit vector based on γ pointing to the chosen side.
    pub fn encode(&self, state: &TangentState) -> Result<ChartPoint> {
        let off = state.x.dot(&self.normal);
        if !(off.abs() <= 1e-8) {
            return Err(Error::InvalidArgument(format!(
                "base point is {off:e} off the section geodesic"
            )));
        }
        let phi = state
            .x
            .dot(&self.t0)
            .atan2(state.x.dot(&self.x0))
            .rem_euclid(2.0 * PI);
        let (sn, cs) = phi.sin_cos();
        let tangent = self.t0 * cs - self.x0 * sn;
        let v = state.v.normalize();
        let theta = v.dot(&self.normal).atan2(v.dot(&tangent));
        if !(theta > 0.0 && theta < PI) {
            return Err(Error::OutsideAnnulus { theta });
        }
        let s = self.arclength(phi).0.rem_euclid(self.length);
        Ok(ChartPoint { s, theta })
    }

    fn flow_to_section(&self, p: ChartPoint, forward: bool) -> Result<Return> {
        self.check_band(p.theta)?;
        let start = self.decode(p)?;
        let sys = GeodesicSystem {
            metric: &self.metric,
        };
        let normal = self.normal;
        let sign = if forward { 1.0 } else { -1.0 };
        let event = move |y: &[f64; 6]| sign * Vector3::new(y[0], y[1], y[2]).dot(&normal);
        let accept = |t: f64, _: &[f64; 6]| t.abs() > 1e-6;
        let t_max = sign * self.opts.t_max;
        let hit = ode::integrate_to_event(
            &sys,
            0.0,
            &pack_state(&start),
            t_max,
            &self.opts.tol,
            event,
            accept,
        )?
        .ok_or(Error::NoReturn {
            t_max: self.opts.t_max,
        })?;
        let mut end = unpack_state(&hit.y);
        // Remove the residual offset from the section plane.
        end.x -= normal * end.x.dot(&normal);
        end.x = end.x.normalize();
        Ok(Return {
            point: self.encode(&end)?,
            time: hit.t.abs(),
        })
    }

    /// First return to the annulus.
    pub fn return_map(&self, p: ChartPoint) -> Result<Return> {
        self.flow_to_section(p, true)
    }

    /// Previous passage through the annulus: the inverse return map.
    pub fn inverse_return_map(&self, p: ChartPoint) -> Result<Return> {
        self.flow_to_section(p, false)
    }

    /// Density of the invariant area form in the chart.
    pub fn density(&self, p: ChartPoint) -> f64 {
        p.theta.sin()
    }

    /// `det D(return) · sin θ′ / sin θ`, with central differences.
    pub fn area_jacobian(&self, p: ChartPoint) -> Result<f64> {
        let h = JACOBIAN_STEP;
        if !(p.theta - h > BAND && p.theta + h < PI - BAND) {
            return Err(Error::OutsideAnnulus { theta: p.theta });
        }
        let image = self.return_map(p)?.point;
        let l = self.length;
        let ds = |a: f64, b: f64| (a - b + 0.5 * l).rem_euclid(l) - 0.5 * l;
        let sp = self.return_map(ChartPoint::new(p.s + h, p.theta))?.point;
        let sm = self.return_map(ChartPoint::new(p.s - h, p.theta))?.point;
        let tp = self.return_map(ChartPoint::new(p.s, p.theta + h))?.point;
        let tm = self.return_map(ChartPoint::new(p.s, p.theta - h))?.point;
        let a = ds(sp.s, sm.s) / (2.0 * h);
        let b = ds(tp.s, tm.s) / (2.0 * h);
        let c = (sp.theta - sm.theta) / (2.0 * h);
        let d = (tp.theta - tm.theta) / (2.0 * h);
        Ok((a * d - b * c) * self.density(image) / self.density(p))
    }

    /// Midpoint-rule area of the annulus on an `n × n` grid.
    pub fn area(&self, n: usize) -> f64 {
        let (hs, ht) = (self.length / n as f64, PI / n as f64);
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = ChartPoint::new((i as f64 + 0.5) * hs, (j as f64 + 0.5) * ht);
                total += self.density(p);
            }
        }
        total * hs * ht
    }

    /// Uniform interior grid of `ns × nt` points with θ inside the band.
    pub fn grid(&self, ns: usize, nt: usize) -> Vec<ChartPoint> {
        let margin = 1e-2;
        let mut out = Vec::with_capacity(ns * nt);
        for i in 0..ns {
            for j in 0..nt {
                let s = self.length * i as f64 / ns as f64;
                let theta = margin + (PI - 2.0 * margin) * (j as f64 + 0.5) / nt as f64;
                out.push(ChartPoint::new(s, theta));
            }
        }
        out
    }
}

/// Portrait rows `(p, return(p))`.
pub fn write_portrait<W: Write>(mut w: W, rows: &[(ChartPoint, Return)]) -> io::Result<()> {
    writeln!(w, "s,theta,s_next,theta_next,return_time")?;
    for (p, r) in rows {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?}",
            p.s, p.theta, r.point.s, r.point.theta, r.time
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{find_closed, FindOptions};

    fn equator_section(metric: &ConformalMetric) -> AnnulusSection {
        let guess = TangentState {
            x: Vector3::x(),
            v: Vector3::y(),
        };
        let rec = find_closed(metric, &guess, &FindOptions::default()).unwrap();
        build_annulus(metric, &rec).unwrap()
    }

    #[test]
    fn round_decode_and_identity_return() {
        let round = ConformalMetric::round();
        let sec = equator_section(&round);
        assert!((sec.length() - 2.0 * PI).abs() < 1e-12);
        let p = sec.decode(ChartPoint::new(1.0, PI / 2.0)).unwrap();
        assert!((p.x - Vector3::new(1f64.cos(), 1f64.sin(), 0.0)).norm() < 1e-12);
        assert!((p.v - Vector3::z()).norm() < 1e-12);
        for q in [ChartPoint::new(0.3, 0.4), ChartPoint::new(4.0, 2.5)] {
            let r = sec.return_map(q).unwrap();
            assert!((r.time - 2.0 * PI).abs() < 1e-6);
            assert!((r.point.s - q.s).abs() < 1e-8 && (r.point.theta - q.theta).abs() < 1e-8);
        }
        assert!((sec.area(64) - 4.0 * PI).abs() < 1e-2);
    }

    #[test]
    fn band_is_enforced() {
        let sec = equator_section(&ConformalMetric::round());
        assert!(matches!(
            sec.return_map(ChartPoint::new(0.0, 1e-5)),
            Err(Error::OutsideAnnulus { .. })
        ));
        assert!(matches!(
            sec.area_jacobian(ChartPoint::new(0.0, 1.05e-4)),
            Err(Error::OutsideAnnulus { .. })
        ));
        assert!(sec.decode(ChartPoint::new(0.0, -0.1)).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let metric = ConformalMetric::single(2, 0, 0.05).unwrap();
        let sec = equator_section(&metric);
        for k in 0..50 {
            let p = ChartPoint::new(
                sec.length() * (k as f64 * 0.618).fract(),
                0.05 + 3.0 * (k as f64 * 0.37).fract(),
            );
            let back = sec.encode(&sec.decode(p).unwrap()).unwrap();
            assert!(
                (back.s - p.s).abs() < 1e-10 && (back.theta - p.theta).abs() < 1e-10,
                "{p:?} {back:?}"
            );
        }
    }

    #[test]
    fn doubled_great_circle_is_not_simple() {
        let round = ConformalMetric::round();
        let guess = TangentState {
            x: Vector3::x(),
            v: Vector3::y(),
        };
        let mut rec = find_closed(&round, &guess, &FindOptions::default()).unwrap();
        rec.period *= 2.0;
        assert!(matches!(
            build_annulus(&round, &rec),
            Err(Error::NotSimple(_))
        ));
    }

    #[test]
    fn negative_curvature_rejected() {
        let metric = ConformalMetric::single(2, 0, 1.5).unwrap();
        let rec = equator_section(&ConformalMetric::round()).record().clone();
        assert!(matches!(
            build_annulus(&metric, &rec),
            Err(Error::NonPositiveCurvature { .. })
        ));
    }
}
