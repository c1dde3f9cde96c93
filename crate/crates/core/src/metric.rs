//! Conformal metrics `g = e^{2u} g₀` on the unit sphere, with `u` a finite
//! expansion in real spherical harmonics.
//!
//! # Descriptor format
//!
//! A metric descriptor is UTF-8 text, one coefficient per line:
//!
//! ```text
//! # comment lines start with '#'; blank lines are ignored
//! (2,0) = 0.05
//! (2,2) = 0.015
//! ```
//!
//! A key is `(l,m)` with integers `0 ≤ l ≤ 8`, `-l ≤ m ≤ l`; whitespace is
//! allowed around every token. The value is any decimal or scientific float
//! literal accepted by Rust's `f64` parser. Keys may appear at most once.
//! [`ConformalMetric::to_descriptor`] writes keys in `(l, m)` order and values
//! with the shortest representation that parses back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::harmonics::{harmonic_polynomial, sphere_quadrature, Poly, MAX_DEGREE};

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    coefficients: BTreeMap<(u32, i32), f64>,
    u: Poly,
    grad: [Poly; 3],
    laplacian: Poly,
}

impl Default for ConformalMetric {
    fn default() -> Self {
        Self::round()
    }
}

impl ConformalMetric {
    /// The round metric of curvature +1.
    pub fn round() -> Self {
        Self::from_coefficients(std::iter::empty()).expect("empty expansion is valid")
    }

    pub fn from_coefficients(
        coefficients: impl IntoIterator<Item = ((u32, i32), f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((l, m), c) in coefficients {
            if l > MAX_DEGREE || m.unsigned_abs() > l {
                return Err(Error::Descriptor(format!(
                    "invalid harmonic index ({l},{m})"
                )));
            }
            if !c.is_finite() {
                return Err(Error::Descriptor(format!(
                    "non-finite coefficient for ({l},{m})"
                )));
            }
            *map.entry((l, m)).or_insert(0.0) += c;
        }
        let harmonics: Vec<_> = map
            .iter()
            .map(|(&(l, m), &c)| (c, l, harmonic_polynomial(l, m)))
            .collect();
        let u = Poly::linear_combination(harmonics.iter().map(|(c, _, p)| (*c, p)));
        let laplacian = Poly::linear_combination(
            harmonics
                .iter()
                .map(|(c, l, p)| (-(*c) * (*l * (*l + 1)) as f64, p)),
        );
        let grad = u.gradient();
        Ok(Self {
            coefficients: map,
            u,
            grad,
            laplacian,
        })
    }

    /// `u = ε·Y_{l,m}`.
    pub fn single(l: u32, m: i32, eps: f64) -> Result<Self> {
        Self::from_coefficients([((l, m), eps)])
    }

    pub fn coefficients(&self) -> &BTreeMap<(u32, i32), f64> {
        &self.coefficients
    }

    pub fn is_round(&self) -> bool {
        self.coefficients.values().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> u32 {
        self.coefficients.keys().map(|(l, _)| *l).max().unwrap_or(0)
    }

    /// `u(x)` for `|x| = 1`.
    pub fn u(&self, x: &Vector3<f64>) -> f64 {
        self.u.eval(x)
    }

    /// Conformal factor `f = e^{2u}`.
    pub fn conformal_factor(&self, x: &Vector3<f64>) -> f64 {
        (2.0 * self.u(x)).exp()
    }

    /// Spherical (g₀) gradient of `u`, tangent to the sphere at `x`.
    pub fn grad_u(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let g = Vector3::new(
            self.grad[0].eval(x),
            self.grad[1].eval(x),
            self.grad[2].eval(x),
        );
        g - x * x.dot(&g)
    }

    /// `Δ_{g₀} u(x)`, using `Δ_{g₀} Y_{l,m} = −l(l+1) Y_{l,m}`.
    pub fn laplacian_u(&self, x: &Vector3<f64>) -> f64 {
        self.laplacian.eval(x)
    }

    /// `u` and its spherical gradient.
    pub fn jet(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        (self.u(x), self.grad_u(x))
    }

    /// `g_x(a, b) = e^{2u(x)} ⟨a, b⟩`.
    pub fn inner(&self, x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        self.conformal_factor(x) * a.dot(b)
    }

    /// Gauss curvature `K = e^{−2u}(1 − Δ_{g₀}u)`.
    pub fn curvature(&self, x: &Vector3<f64>) -> f64 {
        (-2.0 * self.u(x)).exp() * (1.0 - self.laplacian_u(x))
    }

    /// `∫ K dA_g` by product Gauss quadrature with `n` latitude nodes.
    pub fn total_curvature(&self, n: usize) -> f64 {
        sphere_quadrature(n, |x| self.curvature(x) * self.conformal_factor(x))
    }

    /// Total g-area of the sphere.
    pub fn area(&self, n: usize) -> f64 {
        sphere_quadrature(n, |x| self.conformal_factor(x))
    }

    /// Smallest curvature on a Fibonacci sample of `n` points, with its location.
    pub fn min_curvature_sample(&self, n: usize) -> (f64, Vector3<f64>) {
        fibonacci_sphere(n)
            .into_iter()
            .map(|x| (self.curvature(&x), x))
            .fold((f64::INFINITY, Vector3::z()), |acc, c| {
                if c.0 < acc.0 {
                    c
                } else {
                    acc
                }
            })
    }

    pub fn to_descriptor(&self) -> String {
        let mut out = String::from("# conformal metric g = exp(2u) g0, u = sum c_lm Y_lm\n");
        for (&(l, m), &c) in &self.coefficients {
            writeln!(out, "({l},{m}) = {c:?}").expect("writing to a String");
        }
        out
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Descriptor(format!("line {line_no}: {msg}: `{raw}`"));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `(l,m) = value`"))?;
            let key = key.trim();
            let inner = key
                .strip_prefix('(')
                .and_then(|k| k.strip_suffix(')'))
                .ok_or_else(|| err("key must be `(l,m)`"))?;
            let (l, m) = inner
                .split_once(',')
                .ok_or_else(|| err("key must be `(l,m)`"))?;
            let l: u32 = l
                .trim()
                .parse()
                .map_err(|_| err("degree l is not a non-negative integer"))?;
            let m: i32 = m
                .trim()
                .parse()
                .map_err(|_| err("order m is not an integer"))?;
            if l > MAX_DEGREE {
                return Err(err(&format!("degree exceeds {MAX_DEGREE}")));
            }
            if m.unsigned_abs() > l {
                return Err(err("|m| exceeds l"));
            }
            let c: f64 = value
                .trim()
                .parse()
                .map_err(|_| err("value is not a number"))?;
            if !c.is_finite() {
                return Err(err("value is not finite"));
            }
            if seen.insert((l, m), c).is_some() {
                return Err(err("duplicate key"));
            }
        }
        Self::from_coefficients(seen)
    }
}

/// Nearly uniform points on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brioschi's formula with metric coefficients of the gnomonic chart
    /// `(a, b) ↦ (a, b, 1)/|(a, b, 1)|` and second differences of E, F, G.
    fn brioschi_curvature(metric: &ConformalMetric, a0: f64, b0: f64) -> f64 {
        let efg = |a: f64, b: f64| {
            let p = Vector3::new(a, b, 1.0);
            let r = p.norm();
            let x = p / r;
            let proj = |e: Vector3<f64>| (e - x * x.dot(&e)) / r;
            let xa = proj(Vector3::x());
            let xb = proj(Vector3::y());
            let f = metric.conformal_factor(&x);
            (f * xa.dot(&xa), f * xa.dot(&xb), f * xb.dot(&xb))
        };
        let h = 2e-4;
        let d = |g: &dyn Fn(f64, f64) -> f64, da: f64, db: f64| {
            (g(a0 + da * h, b0 + db * h) - g(a0 - da * h, b0 - db * h)) / (2.0 * h)
        };
        let second = |g: &dyn Fn(f64, f64) -> f64, da: f64, db: f64| {
            (g(a0 + da * h, b0 + db * h) - 2.0 * g(a0, b0) + g(a0 - da * h, b0 - db * h)) / (h * h)
        };
        let e_fn = |a, b| efg(a, b).0;
        let f_fn = |a, b| efg(a, b).1;
        let g_fn = |a, b| efg(a, b).2;
        let (e, f, g) = efg(a0, b0);
        let (eu, ev) = (d(&e_fn, 1.0, 0.0), d(&e_fn, 0.0, 1.0));
        let (fu, fv) = (d(&f_fn, 1.0, 0.0), d(&f_fn, 0.0, 1.0));
        let (gu, gv) = (d(&g_fn, 1.0, 0.0), d(&g_fn, 0.0, 1.0));
        let evv = second(&e_fn, 0.0, 1.0);
        let guu = second(&g_fn, 1.0, 0.0);
        let fuv = {
            let fpp = f_fn(a0 + h, b0 + h);
            let fpm = f_fn(a0 + h, b0 - h);
            let fmp = f_fn(a0 - h, b0 + h);
            let fmm = f_fn(a0 - h, b0 - h);
            (fpp - fpm - fmp + fmm) / (4.0 * h * h)
        };
        let m1 = nalgebra::Matrix3::new(
            -evv / 2.0 + fuv - guu / 2.0,
            eu / 2.0,
            fu - ev / 2.0,
            fv - gu / 2.0,
            e,
            f,
            gv / 2.0,
            f,
            g,
        );
        let m2 = nalgebra::Matrix3::new(0.0, ev / 2.0, gu / 2.0, ev / 2.0, e, f, gu / 2.0, f, g);
        (m1.determinant() - m2.determinant()) / (e * g - f * f).powi(2)
    }

    #[test]
    fn round_and_homothetic_curvature() {
        let round = ConformalMetric::round();
        let c = 0.3;
        // u ≡ c is c·√(4π)·Y_{0,0}.
        let homothety =
            ConformalMetric::single(0, 0, c * (4.0 * std::f64::consts::PI).sqrt()).unwrap();
        for x in fibonacci_sphere(50) {
            assert!((round.curvature(&x) - 1.0).abs() < 1e-15);
            assert!((homothety.u(&x) - c).abs() < 1e-14);
            assert!((homothety.curvature(&x) - (-2.0 * c).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn curvature_matches_brioschi_oracle() {
        let metric = ConformalMetric::single(2, 0, 0.1).unwrap();
        let k = metric.curvature(&Vector3::z());
        let oracle = brioschi_curvature(&metric, 0.0, 0.0);
        assert!((k - oracle).abs() < 1e-6, "{k} vs {oracle}");

        let metric =
            ConformalMetric::from_coefficients([((2, 0), 0.08), ((3, 1), -0.05), ((4, -3), 0.04)])
                .unwrap();
        for (a, b) in [(0.1, -0.2), (-0.3, 0.25)] {
            let x = Vector3::new(a, b, 1.0).normalize();
            let k = metric.curvature(&x);
            let oracle = brioschi_curvature(&metric, a, b);
            assert!((k - oracle).abs() < 1e-6, "{k} vs {oracle}");
        }
    }

    #[test]
    fn gauss_bonnet() {
        for metric in [
            ConformalMetric::round(),
            ConformalMetric::single(2, 0, 0.05).unwrap(),
            ConformalMetric::from_coefficients([((2, 0), 0.3), ((3, -2), 0.2), ((5, 4), -0.1)])
                .unwrap(),
        ] {
            let total = metric.total_curvature(32);
            assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn spherical_gradient_is_tangent_and_matches_differences() {
        let metric = ConformalMetric::from_coefficients([((2, 1), 0.3), ((3, -3), -0.2)]).unwrap();
        let x = Vector3::new(0.2, 0.7, -0.4).normalize();
        let g = metric.grad_u(&x);
        assert!(g.dot(&x).abs() < 1e-15);
        let t = Vector3::new(1.0, 0.0, 0.0);
        let t = (t - x * x.dot(&t)).normalize();
        let h = 1e-6;
        let fd =
            (metric.u(&(x + t * h).normalize()) - metric.u(&(x - t * h).normalize())) / (2.0 * h);
        assert!((fd - g.dot(&t)).abs() < 1e-9);
    }

    #[test]
    fn descriptor_round_trip_is_bit_exact() {
        let text = "# test\n(2,0) = 0.1\n ( 3 , -1 ) = -1.2345678901234567e-3\n\n(8,8)=7e-300\n";
        let m = ConformalMetric::from_descriptor(text).unwrap();
        assert_eq!(m.coefficients()[&(3, -1)], -1.2345678901234567e-3);
        let again = ConformalMetric::from_descriptor(&m.to_descriptor()).unwrap();
        for (k, v) in m.coefficients() {
            assert_eq!(v.to_bits(), again.coefficients()[k].to_bits());
        }
        assert_eq!(m.to_descriptor(), again.to_descriptor());
    }

    #[test]
    fn descriptor_errors_carry_line_numbers() {
        for (text, line) in [
            ("(2,0) = 0.1\n(2,0) = 0.2\n", "line 2"),
            ("\n\n(9,0) = 1\n", "line 3"),
            ("(2,3) = 1\n", "line 1"),
            ("# ok\n2,0 = 1\n", "line 2"),
            ("(2,0) = abc\n", "line 1"),
            ("(2,0) 0.1\n", "line 1"),
        ] {
            let err = ConformalMetric::from_descriptor(text)
                .unwrap_err()
                .to_string();
            assert!(err.contains(line), "{err}");
        }
    }
}
