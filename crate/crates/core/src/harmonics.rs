//! Real spherical harmonics as homogeneous harmonic polynomials in `(x, y, z)`.
//!
//! `Y_{l,m}` is orthonormal on the round unit sphere, without the
//! Condon–Shortley phase: `m > 0` carries `cos(mφ)`, `m < 0` carries
//! `sin(|m|φ)`. Restricted to `|x| = 1` the polynomial `H_{l,m}` equals
//! `Y_{l,m}`, and its ambient gradient gives the spherical gradient after
//! removing the radial part.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;

/// Default cap on the harmonic degree.
pub const MAX_DEGREE: u32 = 8;

/// Sparse polynomial in three variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    terms: Vec<([u8; 3], f64)>,
}

impl Poly {
    fn from_map(map: BTreeMap<[u8; 3], f64>) -> Self {
        assert!(
            map.keys()
                .all(|e| e.iter().all(|&k| k as u32 <= 2 * MAX_DEGREE)),
            "polynomial degree exceeds the supported range"
        );
        Self {
            terms: map.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        }
    }

    pub fn terms(&self) -> &[([u8; 3], f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, p: &Vector3<f64>) -> f64 {
        const N: usize = 2 * MAX_DEGREE as usize + 1;
        let powers = |v: f64| {
            let mut out = [1.0; N];
            for k in 1..N {
                out[k] = out[k - 1] * v;
            }
            out
        };
        let (px, py, pz) = (powers(p.x), powers(p.y), powers(p.z));
        self.terms
            .iter()
            .map(|(e, c)| c * px[e[0] as usize] * py[e[1] as usize] * pz[e[2] as usize])
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let mut map = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut d = *e;
            d[axis] -= 1;
            *map.entry(d).or_insert(0.0) += c * e[axis] as f64;
        }
        Poly::from_map(map)
    }

    pub fn gradient(&self) -> [Poly; 3] {
        [self.derivative(0), self.derivative(1), self.derivative(2)]
    }

    /// Euclidean Laplacian in ℝ³.
    pub fn laplacian(&self) -> Poly {
        let mut map = BTreeMap::new();
        for axis in 0..3 {
            for (e, c) in self.derivative(axis).derivative(axis).terms {
                *map.entry(e).or_insert(0.0) += c;
            }
        }
        Poly::from_map(map)
    }

    /// `Σ wᵢ Pᵢ`.
    pub fn linear_combination<'a>(parts: impl IntoIterator<Item = (f64, &'a Poly)>) -> Poly {
        let mut map = BTreeMap::new();
        for (w, p) in parts {
            for (e, c) in &p.terms {
                *map.entry(*e).or_insert(0.0) += w * c;
            }
        }
        Poly::from_map(map)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// The homogeneous harmonic polynomial of degree `l` restricting to `Y_{l,m}`.
pub fn harmonic_polynomial(l: u32, m: i32) -> Poly {
    assert!(m.unsigned_abs() <= l, "|m| must not exceed l");
    let am = m.unsigned_abs();

    // ρ^m cos(mφ) = Re (x + iy)^m, ρ^m sin(mφ) = Im (x + iy)^m.
    let mut azimuthal: BTreeMap<[u8; 2], f64> = BTreeMap::new();
    for p in 0..=am {
        // i^p: real for even p, imaginary for odd p.
        let (re, im) = match p % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        let part = if m >= 0 { re } else { im };
        if part != 0.0 {
            *azimuthal.entry([(am - p) as u8, p as u8]).or_insert(0.0) += part * binomial(am, p);
        }
    }

    // r^{l-m} (d^m P_l)(z/r) = Σ_k a_k z^{l-2k-m} r^{2k}.
    let mut polar: BTreeMap<[u8; 3], f64> = BTreeMap::new();
    let mut k = 0;
    while 2 * k + am <= l {
        let a_k = (-1.0f64).powi(k as i32) * binomial(l, k) * binomial(2 * l - 2 * k, l)
            / 2f64.powi(l as i32)
            * factorial(l - 2 * k)
            / factorial(l - 2 * k - am);
        let zpow = l - 2 * k - am;
        // (x² + y² + z²)^k
        for a in 0..=k {
            for b in 0..=(k - a) {
                let c = k - a - b;
                let multinomial = factorial(k) / (factorial(a) * factorial(b) * factorial(c));
                let e = [(2 * a) as u8, (2 * b) as u8, (2 * c + zpow) as u8];
                *polar.entry(e).or_insert(0.0) += a_k * multinomial;
            }
        }
        k += 1;
    }

    let mut norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt();
    if m != 0 {
        norm *= 2f64.sqrt();
    }

    let mut map = BTreeMap::new();
    for (ea, ca) in &azimuthal {
        for (ep, cp) in &polar {
            let e = [ea[0] + ep[0], ea[1] + ep[1], ep[2]];
            *map.entry(e).or_insert(0.0) += norm * ca * cp;
        }
    }
    Poly::from_map(map)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        out.push((t, 2.0 / ((1.0 - t * t) * dp * dp)));
    }
    out
}

/// Quadrature over the round unit sphere: Gauss–Legendre in `z` times the
/// trapezoid rule in `φ`. Exact for polynomials of degree `< 2n`.
pub fn sphere_quadrature(n: usize, mut f: impl FnMut(&Vector3<f64>) -> f64) -> f64 {
    let nphi = 2 * n;
    let dphi = 2.0 * PI / nphi as f64;
    let mut total = 0.0;
    for (z, w) in gauss_legendre(n) {
        let rho = (1.0 - z * z).sqrt();
        let mut ring = 0.0;
        for k in 0..nphi {
            let phi = k as f64 * dphi;
            ring += f(&Vector3::new(rho * phi.cos(), rho * phi.sin(), z));
        }
        total += w * ring * dphi;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_closed_forms() {
        let p = Vector3::new(0.3, -0.5, 0.6).normalize();
        let y00 = harmonic_polynomial(0, 0).eval(&p);
        assert!((y00 - 0.5 / PI.sqrt()).abs() < 1e-15);
        let y10 = harmonic_polynomial(1, 0).eval(&p);
        assert!((y10 - (3.0 / (4.0 * PI)).sqrt() * p.z).abs() < 1e-15);
        let y20 = harmonic_polynomial(2, 0).eval(&p);
        let want = (5.0 / (16.0 * PI)).sqrt() * (3.0 * p.z * p.z - 1.0);
        assert!((y20 - want).abs() < 1e-14);
        let y22 = harmonic_polynomial(2, 2).eval(&p);
        let want = (15.0 / (16.0 * PI)).sqrt() * (p.x * p.x - p.y * p.y);
        assert!((y22 - want).abs() < 1e-14);
        let y2m2 = harmonic_polynomial(2, -2).eval(&p);
        let want = (15.0 / (4.0 * PI)).sqrt() * p.x * p.y;
        assert!((y2m2 - want).abs() < 1e-14);
    }

    #[test]
    fn polynomials_are_harmonic_and_homogeneous() {
        for l in 0..=MAX_DEGREE {
            for m in -(l as i32)..=(l as i32) {
                let h = harmonic_polynomial(l, m);
                let lap = h.laplacian();
                let scale = h.terms().iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
                assert!(
                    lap.terms().iter().all(|(_, c)| c.abs() < 1e-12 * scale),
                    "l={l} m={m}"
                );
                assert!(h
                    .terms()
                    .iter()
                    .all(|(e, _)| e.iter().map(|&v| v as u32).sum::<u32>() == l));
            }
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let mut basis = Vec::new();
        for l in 0..=4u32 {
            for m in -(l as i32)..=(l as i32) {
                basis.push(((l, m), harmonic_polynomial(l, m)));
            }
        }
        for (a, pa) in &basis {
            for (b, pb) in &basis {
                let ip = sphere_quadrature(12, |x| pa.eval(x) * pb.eval(x));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "{a:?} {b:?} {ip}");
            }
        }
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 16] {
            let s: f64 = gauss_legendre(n).iter().map(|(_, w)| w).sum();
            assert!((s - 2.0).abs() < 1e-13, "n = {n}: {s}");
        }
    }
}
