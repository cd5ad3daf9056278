mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use qmotion::quat::{euler_to_quat, expmap_to_quat, qrotate, quat_to_expmap};
use qmotion::EulerOrder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn rotation_primitives_match_matrix_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (worst, skipped) = rotation_oracle_errors(&mut rng, 10_000);
    let elapsed = start.elapsed().as_secs_f64();
    for (n, w) in ROTATION_CHECKS.iter().zip(worst) {
        println!("{n:>16}: max abs error {w:.3e}");
        assert!(w <= 1e-10, "{n} error {w:e}");
    }
    assert!(skipped < 600, "{skipped} near-gimbal cases");
    assert!(elapsed < 10.0, "took {elapsed}s");
}

#[test]
fn known_rotations() {
    let q = euler_to_quat([PI / 2.0, 0.0, 0.0], EulerOrder::Zyx);
    let v = qrotate(q, [1.0, 0.0, 0.0]);
    assert!(vec_diff(v, [0.0, 1.0, 0.0]) < 1e-12);
    let e = quat_to_expmap(expmap_to_quat([0.0, 0.0, 1.5 * PI]));
    assert!(vec_diff(e, [0.0, 0.0, -0.5 * PI]) < 1e-12);
    assert!(vec_diff(quat_to_expmap(expmap_to_quat([0.0; 3])), [0.0; 3]) == 0.0);
}
