use std::f64::consts::PI;

use geodesic_reeb::birkhoff::{build_annulus, AnnulusSection, ChartPoint};
use geodesic_reeb::orbits::{find_closed, FindOptions};
use geodesic_reeb::{ConformalMetric, TangentState};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn section(metric: &ConformalMetric) -> AnnulusSection {
    let guess = TangentState {
        x: Vector3::x(),
        v: Vector3::y(),
    };
    let rec = find_closed(metric, &guess, &FindOptions::default()).unwrap();
    build_annulus(metric, &rec).unwrap()
}

fn wrap(d: f64, l: f64) -> f64 {
    (d + 0.5 * l).rem_euclid(l) - 0.5 * l
}

#[test]
fn chart_round_trip() {
    let metric = ConformalMetric::from_coefficients([((2, 0), 0.05), ((4, 0), 0.01)]).unwrap();
    let sec = section(&metric);
    let l = sec.length();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let p = ChartPoint::new(rng.random_range(0.0..l), rng.random_range(1e-3..PI - 1e-3));
        let state = sec.decode(p).unwrap();
        assert!((metric.inner(&state.x, &state.v, &state.v) - 1.0).abs() < 1e-12);
        let q = sec.encode(&state).unwrap();
        assert!(wrap(q.s - p.s, l).abs() < 1e-10 && (q.theta - p.theta).abs() < 1e-10);
    }
}

#[test]
fn inverse_return_undoes_return() {
    let sec = section(&ConformalMetric::single(2, 0, 0.05).unwrap());
    let l = sec.length();
    for p in sec.grid(6, 6) {
        let fwd = sec.return_map(p).unwrap();
        let back = sec.inverse_return_map(fwd.point).unwrap();
        assert!(
            wrap(back.point.s - p.s, l).abs() < 1e-7 && (back.point.theta - p.theta).abs() < 1e-7
        );
        assert!((back.time - fwd.time).abs() < 1e-7);
    }
}

#[test]
fn chart_area_converges_to_twice_the_length() {
    let sec = section(&ConformalMetric::single(2, 0, 0.05).unwrap());
    let target = 2.0 * sec.length();
    let (coarse, fine) = (
        (sec.area(32) - target).abs(),
        (sec.area(128) - target).abs(),
    );
    assert!(fine < coarse / 10.0 && fine < 1e-3);
}

#[test]
fn perpendicular_start_returns_to_its_meridian() {
    // On a rotationally symmetric metric θ = π/2 starts a meridian, which
    // crosses the equator again at the antipode heading the same way.
    let sec = section(&ConformalMetric::single(2, 0, 0.05).unwrap());
    let l = sec.length();
    for s in [0.0, 0.3 * l, 0.77 * l] {
        let r = sec.return_map(ChartPoint::new(s, PI / 2.0)).unwrap();
        assert!(wrap(r.point.s - s, l).abs() < 1e-8, "s = {s}");
        assert!((r.point.theta - PI / 2.0).abs() < 1e-8);
    }
}

#[test]
fn points_outside_band_are_rejected() {
    let sec = section(&ConformalMetric::round());
    assert!(sec.return_map(ChartPoint::new(0.0, 0.0)).is_err());
    assert!(sec.area_jacobian(ChartPoint::new(0.0, 1e-6)).is_err());
}
