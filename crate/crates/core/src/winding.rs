//! Winding numbers of 2×2 matrix arcs, winding intervals and the
//! Conley–Zehnder index of symplectic arcs.
//!
//! Windings are measured in full turns. For an arc `Φ` and `z ≠ 0`,
//! `Δ(z)` is the total change of the continuous argument of `Φ(s)z` over
//! `s ∈ [0, 1]`, divided by `2π`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::orbits::{Classification, ClosedOrbitRecord};

/// Tolerance on `det Φ(s) − 1` for symplectic arcs.
pub const DET_TOL: f64 = 1e-7;
/// Tolerance on `|tr Φ(1) − 2|` below which the endpoint counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;
/// Distance from an integer that still counts as containment.
pub const INTEGER_TOL: f64 = 1e-9;

const LEMMA_TOL: f64 = 1e-9;
const DIRECTIONS: usize = 64;
const PROBE_DIRECTIONS: usize = 16;
const MIN_GAP: f64 = 1e-9;

/// A sampled path `Φ : [0, 1] → GL⁺(2, ℝ)` with `Φ(0) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticArc {
    params: Vec<f64>,
    matrices: Vec<Matrix2<f64>>,
    symplectic: bool,
}

fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn arg(v: &Vector2<f64>) -> f64 {
    v.y.atan2(v.x)
}

/// Largest argument change of `Φ_a z → Φ_b z` over probe directions.
fn max_jump(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    (0..PROBE_DIRECTIONS)
        .map(|k| {
            let z = direction(PI * k as f64 / PROBE_DIRECTIONS as f64);
            wrap(arg(&(b * z)) - arg(&(a * z))).abs()
        })
        .fold(0.0, f64::max)
}

fn direction(angle: f64) -> Vector2<f64> {
    Vector2::new(angle.cos(), angle.sin())
}

/// `exp(tA)` in closed form.
fn expm(a: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let half_trace = 0.5 * a.trace();
    let a0 = a - Matrix2::identity() * half_trace;
    // a0² = δ·I with δ = −det a0.
    let delta = -a0.determinant();
    let (c, s) = if delta > 0.0 {
        let r = delta.sqrt();
        ((r * t).cosh(), (r * t).sinh() / r)
    } else if delta < 0.0 {
        let r = (-delta).sqrt();
        ((r * t).cos(), (r * t).sin() / r)
    } else {
        (1.0, t)
    };
    (Matrix2::identity() * c + a0 * s) * (half_trace * t).exp()
}

impl SymplecticArc {
    /// Symplectic arc from samples. The grid must start at 0, end at 1 and
    /// increase strictly; `Φ(0) = I` and `det Φ = 1` within [`DET_TOL`].
    pub fn from_samples(params: Vec<f64>, matrices: Vec<Matrix2<f64>>) -> Result<Self> {
        Self::build(params, matrices, true)
    }

    /// Arc of invertible matrices with positive determinant.
    pub fn from_linear_samples(params: Vec<f64>, matrices: Vec<Matrix2<f64>>) -> Result<Self> {
        Self::build(params, matrices, false)
    }

    fn build(params: Vec<f64>, matrices: Vec<Matrix2<f64>>, symplectic: bool) -> Result<Self> {
        if params.len() != matrices.len() || params.len() < 2 {
            return Err(Error::InvalidArgument(
                "an arc needs at least two matching samples".into(),
            ));
        }
        if params[0] != 0.0
            || *params.last().unwrap() != 1.0
            || params.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::InvalidArgument(
                "arc parameters must increase from 0 to 1".into(),
            ));
        }
        if (matrices[0] - Matrix2::identity()).abs().max() > 1e-9 {
            return Err(Error::InvalidArgument(
                "arc must start at the identity".into(),
            ));
        }
        for m in &matrices {
            let det = m.determinant();
            if symplectic && !((det - 1.0).abs() <= DET_TOL) {
                return Err(Error::DeterminantGap { gap: det - 1.0 });
            }
            if !symplectic && !(det > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "arc leaves GL+(2): det = {det}"
                )));
            }
        }
        Ok(Self {
            params,
            matrices,
            symplectic,
        })
    }

    /// Samples `f` on `[0, 1]`, starting from `initial` uniform intervals and
    /// bisecting every gap across which some vector turns by more than π/4.
    pub fn from_fn(
        f: impl Fn(f64) -> Matrix2<f64>,
        initial: usize,
        symplectic: bool,
    ) -> Result<Self> {
        let n = initial.max(1);
        let mut params: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut matrices: Vec<_> = params.iter().map(|&s| f(s)).collect();
        let mut i = 0;
        while i + 1 < params.len() {
            if max_jump(&matrices[i], &matrices[i + 1]) > FRAC_PI_4 {
                let mid = 0.5 * (params[i] + params[i + 1]);
                if params[i + 1] - params[i] < MIN_GAP {
                    return Err(Error::ArcUnderresolved {
                        index: i,
                        jump: max_jump(&matrices[i], &matrices[i + 1]),
                    });
                }
                params.insert(i + 1, mid);
                matrices.insert(i + 1, f(mid));
            } else {
                i += 1;
            }
        }
        Self::build(params, matrices, symplectic)
    }

    /// `s ↦ exp(τA_k)·…·exp(A_1)` where piece `k` occupies `[(k−1)/n, k/n]`
    /// and `τ` runs over `[0, 1]` on it. Traceless generators give a
    /// symplectic arc.
    pub fn piecewise_exponential(generators: &[Matrix2<f64>]) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one generator required".into(),
            ));
        }
        let n = generators.len();
        let mut partial = vec![Matrix2::identity()];
        for g in generators {
            let last = *partial.last().unwrap();
            partial.push(expm(g, 1.0) * last);
        }
        let symplectic = generators.iter().all(|g| g.trace().abs() < 1e-12);
        let f = |s: f64| {
            let k = ((s * n as f64).floor() as usize).min(n - 1);
            let tau = s * n as f64 - k as f64;
            expm(&generators[k], tau) * partial[k]
        };
        Self::from_fn(f, 16 * n, symplectic)
    }

    /// Arc followed by the loop `s ↦ R(2πs)·Φ(1)`, reparametrized to `[0, 1]`.
    pub fn then_full_turn(&self) -> Result<Self> {
        let end = self.end();
        let mut params: Vec<f64> = self.params.iter().map(|s| 0.5 * s).collect();
        let mut matrices = self.matrices.clone();
        let n = 32;
        for k in 1..=n {
            let s = k as f64 / n as f64;
            params.push(0.5 + 0.5 * s);
            matrices.push(rotation(2.0 * PI * s) * end);
        }
        *params.last_mut().unwrap() = 1.0;
        Self::build(params, matrices, self.symplectic)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn matrices(&self) -> &[Matrix2<f64>] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn is_symplectic(&self) -> bool {
        self.symplectic
    }

    pub fn end(&self) -> Matrix2<f64> {
        *self.matrices.last().unwrap()
    }

    /// Sample nearest to parameter `s`.
    pub fn at(&self, s: f64) -> Matrix2<f64> {
        let i = match self.params.binary_search_by(|p| p.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i == self.params.len() || s - self.params[i - 1] < self.params[i] - s {
                    i - 1
                } else {
                    i
                }
            }
        };
        self.matrices[i]
    }

    pub fn max_det_gap(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| (m.determinant() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `Δ(z)` in full turns.
pub fn winding(arc: &SymplecticArc, z: &Vector2<f64>) -> Result<f64> {
    if !(z.norm() > 0.0) {
        return Err(Error::InvalidArgument(
            "winding needs a nonzero vector".into(),
        ));
    }
    let mut total = 0.0;
    let mut prev = arg(&(arc.matrices[0] * z));
    for (index, m) in arc.matrices.iter().enumerate().skip(1) {
        let a = arg(&(m * z));
        let jump = wrap(a - prev);
        if jump.abs() >= FRAC_PI_2 {
            return Err(Error::ArcUnderresolved { index, jump });
        }
        total += jump;
        prev = a;
    }
    Ok(total / (2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingInterval {
    pub lo: f64,
    pub hi: f64,
    pub argmin: Vector2<f64>,
    pub argmax: Vector2<f64>,
}

impl WindingInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Integers within [`INTEGER_TOL`] of `[lo, hi]`.
    pub fn integers(&self) -> impl Iterator<Item = i64> {
        let a = (self.lo - INTEGER_TOL).ceil() as i64;
        let b = (self.hi + INTEGER_TOL).floor() as i64;
        a..=b
    }
}

fn golden_section(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Range of `Δ` over all directions.
pub fn winding_interval(arc: &SymplecticArc) -> Result<WindingInterval> {
    let delta = |angle: f64| winding(arc, &direction(angle));
    let step = PI / DIRECTIONS as f64;
    let values: Vec<f64> = (0..DIRECTIONS)
        .map(|k| delta(k as f64 * step))
        .collect::<Result<_>>()?;
    let (mut imin, mut imax) = (0, 0);
    for (k, &v) in values.iter().enumerate() {
        if v < values[imin] {
            imin = k;
        }
        if v > values[imax] {
            imax = k;
        }
    }
    let centre = |k: usize| k as f64 * step;
    let (amin, lo) = golden_section(&delta, centre(imin) - step, centre(imin) + step)?;
    let neg = |angle: f64| delta(angle).map(|v| -v);
    let (amax, hi) = golden_section(&neg, centre(imax) - step, centre(imax) + step)?;
    let (lo, amin) = if lo <= values[imin] {
        (lo, amin)
    } else {
        (values[imin], centre(imin))
    };
    let (hi, amax) = if -hi >= values[imax] {
        (-hi, amax)
    } else {
        (values[imax], centre(imax))
    };
    let interval = WindingInterval {
        lo,
        hi,
        argmin: direction(amin),
        argmax: direction(amax),
    };
    if interval.length() > 0.5 + LEMMA_TOL {
        return Err(Error::WindingLemmaViolation {
            length: interval.length(),
        });
    }
    Ok(interval)
}

/// Whether a determinant-one matrix has a positive real eigenvalue.
pub fn has_positive_eigenvalue(m: &Matrix2<f64>) -> bool {
    let tr = m.trace();
    let disc = tr * tr - 4.0 * m.determinant();
    disc >= 0.0 && tr > 0.0
}

/// Conley–Zehnder index of a symplectic arc with non-degenerate endpoint.
pub fn cz_index(arc: &SymplecticArc) -> Result<i64> {
    if !arc.is_symplectic() {
        return Err(Error::InvalidArgument(
            "Conley-Zehnder index needs a symplectic arc".into(),
        ));
    }
    let end = arc.end();
    let trace = end.trace();
    if (trace - 2.0).abs() <= DEGENERACY_TOL {
        return Err(Error::DegenerateEndpoint { trace });
    }
    let interval = winding_interval(arc)?;
    let integers: Vec<i64> = interval.integers().collect();
    let positive = has_positive_eigenvalue(&end);
    match (integers.as_slice(), positive) {
        ([k], true) => Ok(2 * k),
        ([], false) => Ok(2 * interval.lo.floor() as i64 + 1),
        _ => Err(Error::ResolutionFailure(format!(
            "winding interval [{}, {}] inconsistent with endpoint trace {trace}",
            interval.lo, interval.hi
        ))),
    }
}

/// Whether the parity of `cz` matches the class: even exactly for
/// positive hyperbolic orbits.
pub fn parity_matches(classification: Classification, cz: i64) -> Result<bool> {
    match classification {
        Classification::Degenerate => Err(Error::InvalidArgument(
            "degenerate orbits carry no parity".into(),
        )),
        Classification::HypPlus => Ok(cz.rem_euclid(2) == 0),
        Classification::Elliptic | Classification::HypMinus => Ok(cz.rem_euclid(2) == 1),
    }
}

/// Parity check on the Reeb orbit of a record.
pub fn parity_check(record: &ClosedOrbitRecord) -> Result<bool> {
    let lift = &record.lift;
    let cz = lift
        .cz_index
        .ok_or_else(|| Error::InvalidArgument("record has no Conley-Zehnder index".into()))?;
    parity_matches(lift.classification, cz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_arc(turns: f64) -> SymplecticArc {
        SymplecticArc::from_fn(|s| rotation(2.0 * PI * turns * s), 8, true).unwrap()
    }

    fn hyperbolic_arc() -> SymplecticArc {
        SymplecticArc::from_fn(|s| Matrix2::new(s.exp(), 0.0, 0.0, (-s).exp()), 8, true).unwrap()
    }

    #[test]
    fn rigid_rotation_winds_uniformly() {
        let arc = rotation_arc(0.3);
        for z in [Vector2::new(1.0, 0.0), Vector2::new(-0.3, 2.0)] {
            assert!((winding(&arc, &z).unwrap() - 0.3).abs() < 1e-14);
        }
        let i = winding_interval(&arc).unwrap();
        assert!((i.lo - 0.3).abs() < 1e-12 && (i.hi - 0.3).abs() < 1e-12);
        assert_eq!(cz_index(&arc).unwrap(), 1);
        assert_eq!(cz_index(&rotation_arc(1.2)).unwrap(), 3);
    }

    #[test]
    fn hyperbolic_windings() {
        let arc = hyperbolic_arc();
        assert!(winding(&arc, &Vector2::new(1.0, 0.0)).unwrap().abs() < 1e-15);
        let want = (-2f64).exp().atan() / (2.0 * PI) - 0.125;
        assert!((winding(&arc, &Vector2::new(1.0, 1.0)).unwrap() - want).abs() < 1e-14);
        let i = winding_interval(&arc).unwrap();
        assert!(i.lo <= 0.0 && i.hi >= 0.0);
        assert_eq!(cz_index(&arc).unwrap(), 0);
    }

    #[test]
    fn winding_is_scale_invariant() {
        let arc =
            SymplecticArc::piecewise_exponential(&[Matrix2::new(0.3, 2.0, -1.5, -0.3)]).unwrap();
        let z = Vector2::new(0.4, -0.9);
        let a = winding(&arc, &z).unwrap();
        assert!((winding(&arc, &(z * -3.5)).unwrap() - a).abs() < 1e-14);
        assert!(winding(&arc, &Vector2::zeros()).is_err());
    }

    #[test]
    fn under_resolved_samples_rejected() {
        let arc =
            SymplecticArc::from_samples(vec![0.0, 1.0], vec![Matrix2::identity(), rotation(2.0)])
                .unwrap();
        assert!(matches!(
            winding(&arc, &Vector2::x()),
            Err(Error::ArcUnderresolved { .. })
        ));
    }

    #[test]
    fn degenerate_endpoint_rejected() {
        assert!(matches!(
            cz_index(&rotation_arc(1.0)),
            Err(Error::DegenerateEndpoint { .. })
        ));
    }

    #[test]
    fn full_turn_shifts_windings_by_one() {
        let arc =
            SymplecticArc::piecewise_exponential(&[Matrix2::new(0.5, 1.0, -2.0, -0.5)]).unwrap();
        let ext = arc.then_full_turn().unwrap();
        for k in 0..7 {
            let z = direction(0.4 * k as f64);
            assert!((winding(&ext, &z).unwrap() - winding(&arc, &z).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(cz_index(&ext).unwrap(), cz_index(&arc).unwrap() + 2);
    }

    #[test]
    fn closed_form_exponential() {
        let a = Matrix2::new(0.2, 1.3, -0.7, 0.5);
        let series = (0..30).fold((Matrix2::identity(), Matrix2::zeros()), |(term, sum), k| {
            (term * a / (k as f64 + 1.0), sum + term)
        });
        assert!((expm(&a, 1.0) - series.1).abs().max() < 1e-13);
    }

    #[test]
    fn parity_table() {
        assert!(parity_matches(Classification::HypPlus, 2).unwrap());
        assert!(parity_matches(Classification::Elliptic, 3).unwrap());
        assert!(parity_matches(Classification::HypMinus, -1).unwrap());
        assert!(!parity_matches(Classification::HypPlus, 3).unwrap());
        assert!(parity_matches(Classification::Degenerate, 2).is_err());
    }
}
