use std::f64::consts::PI;

use geodesic_reeb::winding::{cz_index, winding, winding_interval, SymplecticArc};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotation(a: f64) -> Matrix2<f64> {
    Matrix2::new(a.cos(), -a.sin(), a.sin(), a.cos())
}

#[test]
fn interval_matches_dense_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..40 {
        let gens: Vec<Matrix2<f64>> = (0..3)
            .map(|_| {
                let a = rng.random_range(-2.0..2.0);
                Matrix2::new(
                    a,
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    -a,
                )
            })
            .collect();
        let arc = SymplecticArc::piecewise_exponential(&gens).unwrap();
        let delta = |t: f64| winding(&arc, &Vector2::new(t.cos(), t.sin())).unwrap();
        // Coarse sweep, then a fine sweep around the coarse extremum.
        let extreme = |sign: f64| {
            let h = PI / 1024.0;
            let k = (0..1024)
                .max_by(|&a, &b| {
                    (sign * delta(a as f64 * h)).total_cmp(&(sign * delta(b as f64 * h)))
                })
                .unwrap();
            let centre = k as f64 * h;
            (0..=1024)
                .map(|j| sign * delta(centre - h + 2.0 * h * j as f64 / 1024.0))
                .fold(f64::NEG_INFINITY, f64::max)
                * sign
        };
        let (lo, hi) = (extreme(-1.0), extreme(1.0));
        let i = winding_interval(&arc).unwrap();
        assert!(
            (lo - i.lo).abs() < 1e-6 && (i.hi - hi).abs() < 1e-6,
            "[{}, {}] vs [{lo}, {hi}]",
            i.lo,
            i.hi
        );
    }
}

#[test]
fn rotation_indices() {
    // Φ(s) = R(2πτs): odd index 2⌊τ⌋ + 1 for non-integer τ.
    for (turns, expected) in [(0.3, 1), (1.25, 3), (-0.4, -1), (2.9, 5)] {
        let arc = SymplecticArc::from_fn(|s| rotation(2.0 * PI * turns * s), 16, true).unwrap();
        let i = winding_interval(&arc).unwrap();
        assert!((i.lo - turns).abs() < 1e-9 && (i.hi - turns).abs() < 1e-9);
        assert_eq!(cz_index(&arc).unwrap(), expected, "turns {turns}");
    }
}

#[test]
fn hyperbolic_twist_indices() {
    // exp(s·diag(μ, −μ)) followed by k full turns has index 2k.
    let stretch = Matrix2::new(0.8, 0.0, 0.0, -0.8);
    let mut arc = SymplecticArc::piecewise_exponential(&[stretch]).unwrap();
    for k in 0..3 {
        assert_eq!(cz_index(&arc).unwrap(), 2 * k);
        arc = arc.then_full_turn().unwrap();
    }
    // A half-turn gives a negative hyperbolic endpoint and index 1.
    let half = Matrix2::new(0.0, -PI, PI, 0.0);
    let arc = SymplecticArc::piecewise_exponential(&[stretch, half]).unwrap();
    assert!(arc.end().trace() < -2.0);
    assert_eq!(cz_index(&arc).unwrap(), 1);
}

#[test]
fn degenerate_endpoint_is_rejected() {
    let arc = SymplecticArc::from_fn(|s| rotation(2.0 * PI * s), 16, true).unwrap();
    assert!(cz_index(&arc).is_err());
}
