mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use qmotion::quat::{
    euler_to_quat, expmap_to_quat, fix_antipodal, qmul, qnormalize, qrotate, quat_to_euler, quat_to_expmap, wrap_angle,
};
use qmotion::{EulerOrder, Error, Quaternion};

fn unit_quat() -> impl Strategy<Value = Quaternion> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.01)
        .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z).normalized().unwrap())
}

fn order() -> impl Strategy<Value = EulerOrder> {
    prop::sample::select(EulerOrder::ALL.to_vec())
}

fn same_rotation(a: Quaternion, b: Quaternion, tol: f64) -> bool {
    a.dot(b).abs() > 1.0 - tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn product_of_unit_quaternions_is_unit(a in unit_quat(), b in unit_quat()) {
        prop_assert!((qmul(a, b).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_is_associative(a in unit_quat(), b in unit_quat(), c in unit_quat()) {
        let l = qmul(qmul(a, b), c).to_array();
        let r = qmul(a, qmul(b, c)).to_array();
        for k in 0..4 {
            prop_assert!((l[k] - r[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_inverts(a in unit_quat(), v in prop::array::uniform3(-3.0..3.0f64)) {
        let back = qrotate(a.conjugate(), qrotate(a, v));
        prop_assert!(vec_diff(back, v) < 1e-12);
    }

    #[test]
    fn rotation_preserves_length(a in unit_quat(), v in prop::array::uniform3(-3.0..3.0f64)) {
        let n = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        prop_assert!((n(qrotate(a, v)) - n(v)).abs() < 1e-12);
    }

    #[test]
    fn expmap_round_trip(a in unit_quat()) {
        prop_assert!(same_rotation(expmap_to_quat(quat_to_expmap(a)), a, 1e-12));
    }

    #[test]
    fn euler_round_trip(a in unit_quat(), o in order()) {
        let e = quat_to_euler(a, o);
        prop_assume!(e[1].cos() > 1e-3);
        prop_assert!(same_rotation(euler_to_quat(e, o), a, 1e-12));
    }

    #[test]
    fn euler_angles_are_in_range(a in unit_quat(), o in order()) {
        let e = quat_to_euler(a, o);
        prop_assert!(e[0].abs() <= PI && e[2].abs() <= PI);
        prop_assert!(e[1].abs() <= PI / 2.0 + 1e-12);
    }

    #[test]
    fn wrap_angle_is_in_half_open_interval(d in -100.0..100.0f64) {
        let w = wrap_angle(d);
        prop_assert!(w > -PI && w <= PI);
        let k = ((d - w) / (2.0 * PI)).round();
        prop_assert!((d - w - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn antipodal_fix_keeps_rotations_and_is_continuous(qs in prop::collection::vec(unit_quat(), 1..20)) {
        let fixed = fix_antipodal(&qs);
        for (a, b) in qs.iter().zip(&fixed) {
            prop_assert!(same_rotation(*a, *b, 1e-15));
        }
        for w in fixed.windows(2) {
            prop_assert!(w[0].dot(w[1]) >= 0.0);
        }
    }
}

#[test]
fn degenerate_quaternion_is_rejected() {
    assert!(matches!(qnormalize(Quaternion::new(0.0, 0.0, 0.0, 1e-14)), Err(Error::DegenerateQuaternion { .. })));
}
