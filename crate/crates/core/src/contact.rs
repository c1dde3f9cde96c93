//! The standard contact form on S³, Liouville forms on the unit tangent
//! bundle, the maps `F` and `H`, tight contact forms `h·λ₀` and their Reeb
//! vector fields.
//!
//! Normalization: `λ₀(q)·ζ = Re[−ζ̄ i q] = ⟨−iq, ζ⟩`. With this sign the
//! identity `F*Θ₀ = 2λ₀` holds exactly, `λ₀(iq) = −1`, the Reeb field of
//! `λ₀` is `−iq`, and `dλ₀(a, b) = 2⟨−ia, b⟩`. The classical textbook
//! normalizations `½(p dq − q dp)` and `½Σ(q dp − p dq)` differ from this
//! one by a factor ½ and, for the second, a sign.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::ConformalMetric;
use crate::quat::{frame_unchecked, Quaternion, UnitTangent, UNIT_TOL};

/// A point of the tangent bundle `TS² ⊂ ℝ³ × ℝ³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentState {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
}

/// A tangent vector `ζ = (δx, δv)` to `TS²` at some point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub dx: Vector3<f64>,
    pub dv: Vector3<f64>,
}

impl TangentVector {
    pub fn zero() -> Self {
        Self {
            dx: Vector3::zeros(),
            dv: Vector3::zeros(),
        }
    }

    /// `a·(v, −x) + b·(n, 0) + c·(0, n)` with `n = x × v`: the general tangent
    /// vector to the g₀-unit tangent bundle at `(x, v)`.
    pub fn on_unit_bundle(t: &UnitTangent, a: f64, b: f64, c: f64) -> Self {
        let n = t.axis();
        Self {
            dx: t.v * a + n * b,
            dv: -t.x * a + n * c,
        }
    }
}

impl From<UnitTangent> for TangentState {
    fn from(t: UnitTangent) -> Self {
        Self { x: t.x, v: t.v }
    }
}

fn check_tangent(q: Quaternion, zeta: Quaternion) -> Result<()> {
    let residual = q.dot(zeta);
    if residual.abs() > UNIT_TOL * zeta.norm().max(1.0) {
        return Err(Error::NotTangent { residual });
    }
    Ok(())
}

#[inline]
pub(crate) fn lambda0_unchecked(q: Quaternion, zeta: Quaternion) -> f64 {
    -(zeta.conj() * Quaternion::I * q).w
}

/// `λ₀(q)·ζ = Re[−ζ̄ i q]`.
pub fn lambda0(q: Quaternion, zeta: Quaternion) -> Result<f64> {
    let q = q.checked_unit()?;
    check_tangent(q, zeta)?;
    Ok(lambda0_unchecked(q, zeta))
}

/// `dλ₀(a, b) = 2⟨−ia, b⟩`.
#[inline]
pub fn dlambda0(a: Quaternion, b: Quaternion) -> f64 {
    2.0 * (-(Quaternion::I * a)).dot(b)
}

/// Liouville form `Θ_{(x,v)}ζ = g_x(v, dπ ζ)` of `metric`.
pub fn liouville(metric: &ConformalMetric, t: &TangentState, zeta: &TangentVector) -> Result<f64> {
    let residual = metric.inner(&t.x, &t.v, &t.v) - 1.0;
    if residual.abs() > UNIT_TOL {
        return Err(Error::NonUnitVelocity { residual });
    }
    Ok(metric.inner(&t.x, &t.v, &zeta.dx))
}

/// `d_qF(ζ) = (ζ̄ j q + q̄ j ζ, ζ̄ k q + q̄ k ζ)` as ambient vectors.
pub fn frame_differential(q: Quaternion, zeta: Quaternion) -> TangentVector {
    let d = |e: Quaternion| (zeta.conj() * e * q + q.conj() * e * zeta).vector();
    TangentVector {
        dx: d(Quaternion::J),
        dv: d(Quaternion::K),
    }
}

/// `|Θ₀(dF ζ) − 2λ₀(q)ζ|` with the analytic differential of `F`. Both sides are
/// linear in ζ and vanish on the radial direction, so any ζ ∈ ℝ⁴ is accepted.
pub fn pullback_residual_f(q: Quaternion, zeta: Quaternion) -> f64 {
    let q = q.normalize();
    let t = frame_unchecked(q);
    let df = frame_differential(q, zeta);
    (t.v.dot(&df.dx) - 2.0 * lambda0_unchecked(q, zeta)).abs()
}

/// `H(x, v) = (x, v/√f(x))`, from g₀-unit to g-unit vectors.
pub fn h_map(metric: &ConformalMetric, t: &UnitTangent) -> TangentState {
    TangentState {
        x: t.x,
        v: t.v * (-metric.u(&t.x)).exp(),
    }
}

/// `F∘H`: S³ → g-unit tangent bundle.
pub fn lift_map(metric: &ConformalMetric, q: Quaternion) -> TangentState {
    h_map(metric, &frame_unchecked(q.normalize()))
}

/// Analytic differential of `F∘H` at `q`.
pub fn lift_map_differential(
    metric: &ConformalMetric,
    q: Quaternion,
    zeta: Quaternion,
) -> TangentVector {
    let t = frame_unchecked(q);
    let (u, grad) = metric.jet(&t.x);
    let s = (-u).exp();
    let df = frame_differential(q, zeta);
    TangentVector {
        dx: df.dx,
        dv: (df.dv - t.v * grad.dot(&df.dx)) * s,
    }
}

/// `|Θ(dH ζ) − √f(x) Θ₀(ζ)|`, with `dH` by a fourth-order central difference
/// (step 1e−3) along a curve of g₀-unit vectors tangent to ζ.
pub fn pullback_residual_h(metric: &ConformalMetric, t: &UnitTangent, zeta: &TangentVector) -> f64 {
    let h = 1e-3;
    let curve = |s: f64| {
        let c = UnitTangent::projected(t.x + zeta.dx * s, t.v + zeta.dv * s);
        h_map(metric, &c).x
    };
    let dpi = ((curve(h) - curve(-h)) * 8.0 - (curve(2.0 * h) - curve(-2.0 * h))) / (12.0 * h);
    let image = h_map(metric, t);
    let lhs = metric.inner(&image.x, &image.v, &dpi);
    let rhs = metric.u(&t.x).exp() * t.v.dot(&zeta.dx);
    (lhs - rhs).abs()
}

/// Positive function `h` on S³ defining the tight contact form `h·λ₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Constant(f64),
    /// `2√(f∘π∘F) = 2 e^{u(R_q(j))}`.
    LiftedMetric(ConformalMetric),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactForm {
    multiplier: Multiplier,
}

impl ContactForm {
    /// `λ₀` itself.
    pub fn standard() -> Self {
        Self {
            multiplier: Multiplier::Constant(1.0),
        }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "contact multiplier must be positive, got {c}"
            )));
        }
        Ok(Self {
            multiplier: Multiplier::Constant(c),
        })
    }

    /// `2√(f∘π∘F)·λ₀`, the pull-back of the Liouville form of `metric` by `F∘H`.
    pub fn lifted(metric: ConformalMetric) -> Self {
        Self {
            multiplier: Multiplier::LiftedMetric(metric),
        }
    }

    pub fn multiplier(&self) -> &Multiplier {
        &self.multiplier
    }

    pub fn metric(&self) -> Option<&ConformalMetric> {
        match &self.multiplier {
            Multiplier::LiftedMetric(m) => Some(m),
            Multiplier::Constant(_) => None,
        }
    }

    /// `h(q)` and the quaternion `∇h` with `dh(ζ) = ⟨∇h, ζ⟩` on tangent ζ.
    pub fn multiplier_jet(&self, q: Quaternion) -> (f64, Quaternion) {
        match &self.multiplier {
            Multiplier::Constant(c) => (*c, Quaternion::ZERO),
            Multiplier::LiftedMetric(metric) => {
                let x = frame_unchecked(q).x;
                let (u, grad) = metric.jet(&x);
                let h = 2.0 * u.exp();
                // ⟨n, ζ̄ j q + q̄ j ζ⟩ = ⟨−2 j q n, ζ⟩ for pure n.
                let n = Quaternion::pure(&grad);
                (h, (Quaternion::J * q * n).scale(-2.0 * h))
            }
        }
    }

    /// `λ(q)·ζ`.
    pub fn eval(&self, q: Quaternion, zeta: Quaternion) -> f64 {
        self.multiplier_jet(q).0 * lambda0_unchecked(q, zeta)
    }

    /// `dλ = dh ∧ λ₀ + h dλ₀` evaluated on `(a, b)`.
    pub fn d(&self, q: Quaternion, a: Quaternion, b: Quaternion) -> f64 {
        let (h, grad) = self.multiplier_jet(q);
        Self::d_with(q, h, grad, a, b)
    }

    fn d_with(q: Quaternion, h: f64, grad: Quaternion, a: Quaternion, b: Quaternion) -> f64 {
        grad.dot(a) * lambda0_unchecked(q, b) - grad.dot(b) * lambda0_unchecked(q, a)
            + h * dlambda0(a, b)
    }

    /// Reeb vector field: `λ(Y) = 1`, `dλ(Y, ·) = 0` on `T_qS³`, solved in the
    /// orthonormal tangent basis `{iq, jq, kq}`.
    pub fn reeb_field(&self, q: Quaternion) -> Result<Quaternion> {
        let q = q.checked_unit()?;
        self.reeb_field_unchecked(q)
    }

    pub(crate) fn reeb_field_unchecked(&self, q: Quaternion) -> Result<Quaternion> {
        let (h, grad) = self.multiplier_jet(q);
        let basis = [Quaternion::I * q, Quaternion::J * q, Quaternion::K * q];
        let dl = |a: usize, b: usize| Self::d_with(q, h, grad, basis[a], basis[b]);
        let lam = |a: usize| h * lambda0_unchecked(q, basis[a]);
        let m = Matrix3::new(
            lam(0),
            lam(1),
            lam(2),
            dl(0, 1),
            dl(1, 1),
            dl(2, 1),
            dl(0, 2),
            dl(1, 2),
            dl(2, 2),
        );
        let det = m.determinant();
        let scale = h * h * h;
        if !(det.abs() > 1e-12 * scale) {
            return Err(Error::SingularReebSystem { det });
        }
        let y = m
            .lu()
            .solve(&Vector3::new(1.0, 0.0, 0.0))
            .ok_or(Error::SingularReebSystem { det })?;
        Ok(basis[0].scale(y[0]) + basis[1].scale(y[1]) + basis[2].scale(y[2]))
    }

    /// Residuals of the defining equations at `(q, Y)`: `|λ(Y) − 1|` and
    /// `max_a |dλ(Y, e_a)|` over the basis `{iq, jq, kq}`.
    pub fn reeb_residuals(&self, q: Quaternion, y: Quaternion) -> (f64, f64) {
        let basis = [Quaternion::I * q, Quaternion::J * q, Quaternion::K * q];
        let eq = (self.eval(q, y) - 1.0).abs();
        let kernel = basis
            .iter()
            .map(|&e| self.d(q, y, e).abs())
            .fold(0.0, f64::max);
        (eq, kernel)
    }

    /// Frame `(e₁, e₂)` of `ξ_q = span{jq, kq}` with `dλ(e₁, e₂) = 1`.
    pub fn xi_frame(&self, q: Quaternion) -> [Quaternion; 2] {
        let (h, grad) = self.multiplier_jet(q);
        let (a, b) = (Quaternion::J * q, Quaternion::K * q);
        let omega = Self::d_with(q, h, grad, a, b);
        let s = 1.0 / omega.abs().sqrt();
        if omega > 0.0 {
            [a.scale(s), b.scale(s)]
        } else {
            [b.scale(s), a.scale(s)]
        }
    }
}
