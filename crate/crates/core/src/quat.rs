//! Quaternions, the rotation representation `R_q(x) = q̄ x q`, and the frame
//! map identifying S³ with the double cover of the unit tangent bundle of S².
//!
//! Conventions: a quaternion `w + x i + y j + z k` is stored as `(w, x, y, z)`.
//! Points of ℝ³ are identified with pure quaternions via `(a, b, c) ↦ a i + b j + c k`.
//! The frame of a unit quaternion is `[R_q(j), R_q(k), R_q(i)] = [x, v, x × v]`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for unit-norm and purity preconditions.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ONE: Self = Self::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Self = Self::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Self = Self::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Self = Self::new(0.0, 0.0, 0.0, 1.0);
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// The pure quaternion `a i + b j + c k` of a vector of ℝ³.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    /// Imaginary part as a vector of ℝ³.
    pub fn vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// `e^{iθ} = cos θ + i sin θ`.
    pub fn exp_i(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin(), 0.0, 0.0)
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Euclidean inner product of ℝ⁴, `⟨a, b⟩ = Re(a b̄)`.
    pub fn dot(self, other: Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn normalize(self) -> Self {
        self.scale(1.0 / self.norm())
    }

    /// Component of `self` orthogonal to the unit quaternion `q`.
    pub fn reject(self, q: Self) -> Self {
        self - q.scale(self.dot(q))
    }

    /// Rejects non-unit input beyond [`UNIT_TOL`] and renormalizes otherwise.
    pub fn checked_unit(self) -> Result<Self> {
        let norm = self.norm();
        if (norm - 1.0).abs() > UNIT_TOL || !norm.is_finite() {
            return Err(Error::NonUnitQuaternion { norm });
        }
        Ok(self.scale(1.0 / norm))
    }

    pub fn max_abs_diff(self, other: Self) -> f64 {
        let d = self - other;
        d.w.abs().max(d.x.abs()).max(d.y.abs()).max(d.z.abs())
    }
}

impl Add for Quaternion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for Quaternion {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product: `i² = j² = k² = −1`, `ij = k`, `jk = i`, `ki = j`.
impl Mul for Quaternion {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

pub fn qmul(a: Quaternion, b: Quaternion) -> Quaternion {
    a * b
}

/// `R_q(x) = q̄ x q` without precondition checks.
#[inline]
pub(crate) fn rotate_unchecked(q: Quaternion, x: Quaternion) -> Quaternion {
    q.conj() * x * q
}

/// `R_q(x) = q̄ x q` for unit `q` and pure `x`.
pub fn rotate(q: Quaternion, x: Quaternion) -> Result<Quaternion> {
    let q = q.checked_unit()?;
    if x.w.abs() > UNIT_TOL * x.norm().max(1.0) {
        return Err(Error::NotPure { real: x.w });
    }
    let mut r = rotate_unchecked(q, Quaternion::new(0.0, x.x, x.y, x.z));
    r.w = 0.0;
    Ok(r)
}

/// A g₀-unit tangent vector of S²: base point `x`, velocity `v`, axis `x × v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitTangent {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl UnitTangent {
    /// Validates within [`UNIT_TOL`] and re-orthonormalizes.
    pub fn new(x: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        let res = Self::residuals_of(&x, &v);
        if res.iter().any(|r| !(r.abs() <= UNIT_TOL)) {
            return Err(Error::InvalidTangent(format!(
                "|x|-1 = {:e}, |v|-1 = {:e}, <x,v> = {:e}",
                res[0], res[1], res[2]
            )));
        }
        Ok(Self::projected(x, v))
    }

    /// Closest orthonormal pair: normalize `x`, remove the `x` component of `v`, normalize.
    pub fn projected(x: Vector3<f64>, v: Vector3<f64>) -> Self {
        let x = x.normalize();
        let v = (v - x * x.dot(&v)).normalize();
        Self { x, v }
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.x.cross(&self.v)
    }

    /// `(|x| − 1, |v| − 1, ⟨x, v⟩)`.
    pub fn residuals(&self) -> [f64; 3] {
        Self::residuals_of(&self.x, &self.v)
    }

    fn residuals_of(x: &Vector3<f64>, v: &Vector3<f64>) -> [f64; 3] {
        [x.norm() - 1.0, v.norm() - 1.0, x.dot(v)]
    }

    /// Rotation matrix with columns `[x, v, x × v]`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.x, self.v, self.axis()])
    }
}

/// `F(q) = [R_q(j), R_q(k), R_q(i)]`.
pub fn frame(q: Quaternion) -> Result<UnitTangent> {
    let q = q.checked_unit()?;
    Ok(frame_unchecked(q))
}

#[inline]
pub(crate) fn frame_unchecked(q: Quaternion) -> UnitTangent {
    let x = rotate_unchecked(q, Quaternion::J).vector();
    let v = rotate_unchecked(q, Quaternion::K).vector();
    UnitTangent { x, v }
}

/// Local inverse of [`frame`]: a unit quaternion `q` with `frame(q) = t`.
///
/// Of the two preimages `±q` the one closer to `near` is returned; without
/// `near` the representative with non-negative real part is returned.
pub fn lift(t: &UnitTangent, near: Option<Quaternion>) -> Result<Quaternion> {
    // Columns are the images of i, j, k under R_q.
    let m = Matrix3::from_columns(&[t.axis(), t.x, t.v]);
    let gap = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if gap > 1e-6 || det < 0.5 {
        return Err(Error::DegenerateRotation { det, gap });
    }
    // R_q(y) = p y p̄ with p = q̄, and m is the classical rotation matrix of p.
    let p = rotation_to_quaternion(&m);
    let mut q = p.conj();
    match near {
        Some(n) if q.dot(n) < 0.0 => q = -q,
        None if q.w < 0.0 => q = -q,
        _ => {}
    }
    Ok(q)
}

/// Unit quaternion `p` whose conjugation `y ↦ p y p̄` has matrix `m`,
/// selecting the branch with the largest diagonal pivot (Shepperd).
fn rotation_to_quaternion(m: &Matrix3<f64>) -> Quaternion {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let pivots = [tr, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (best, _) = pivots
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
        );
    let p = match best {
        0 => {
            let s = 2.0 * (1.0 + tr).sqrt();
            Quaternion::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        }
        1 => {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Quaternion::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        }
        2 => {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Quaternion::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        }
        _ => {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Quaternion::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        }
    };
    p.normalize()
}
