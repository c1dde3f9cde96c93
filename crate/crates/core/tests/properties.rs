use std::f64::consts::PI;

use geodesic_reeb::quat::{frame, lift};
use geodesic_reeb::winding::{winding, winding_interval, SymplecticArc};
use geodesic_reeb::Quaternion;
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

fn quaternion() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("away from zero", |a| {
            a.iter().map(|x| x * x).sum::<f64>() > 1e-2
        })
        .prop_map(|a| Quaternion::from_array(a).normalize())
}

fn generator(traceless: bool) -> impl Strategy<Value = Matrix2<f64>> {
    prop::array::uniform4(-2.0f64..2.0)
        .prop_map(move |[a, b, c, d]| Matrix2::new(a, b, c, if traceless { -a } else { d }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn product_of_units_is_unit(p in quaternion(), q in quaternion()) {
        prop_assert!(((p * q).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn frame_is_even(q in quaternion()) {
        let (a, b) = (frame(q).unwrap(), frame(-q).unwrap());
        prop_assert!((a.x - b.x).norm() < 1e-15 && (a.v - b.v).norm() < 1e-15);
    }

    #[test]
    fn lift_inverts_frame(q in quaternion()) {
        let t = frame(q).unwrap();
        let back = lift(&t, Some(q)).unwrap();
        prop_assert!((back - q).norm() < 1e-12, "{:?} vs {:?}", back, q);
        let other = lift(&t, Some(-q)).unwrap();
        prop_assert!((other + q).norm() < 1e-12);
    }

    #[test]
    fn frame_is_orthonormal(q in quaternion()) {
        let t = frame(q).unwrap();
        prop_assert!(t.residuals().iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn winding_ignores_scale(g in prop::collection::vec(generator(true), 1..4), angle in 0.0..PI, c in 0.01f64..100.0) {
        let arc = SymplecticArc::piecewise_exponential(&g).unwrap();
        let z = Vector2::new(angle.cos(), angle.sin());
        let a = winding(&arc, &z).unwrap();
        prop_assert!((winding(&arc, &(z * c)).unwrap() - a).abs() < 1e-12);
        prop_assert!((winding(&arc, &(-z)).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn interval_length_is_at_most_half(g in prop::collection::vec(generator(false), 1..4)) {
        let arc = SymplecticArc::piecewise_exponential(&g).unwrap();
        let i = winding_interval(&arc).unwrap();
        prop_assert!(i.length() <= 0.5 + 1e-9, "{}", i.length());
        prop_assert!(i.lo <= i.hi);
    }

    #[test]
    fn full_turn_adds_one(g in prop::collection::vec(generator(true), 1..3)) {
        let arc = SymplecticArc::piecewise_exponential(&g).unwrap();
        let a = winding_interval(&arc).unwrap();
        let b = winding_interval(&arc.then_full_turn().unwrap()).unwrap();
        prop_assert!((b.lo - a.lo - 1.0).abs() < 1e-8 && (b.hi - a.hi - 1.0).abs() < 1e-8);
    }
}
