mod common;

use common::*;
use proptest::prelude::*;
use qmotion::skeleton::{batched_forward_kinematics, forward_kinematics};
use qmotion::{Pose, Quaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fk_matches_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (fk, bone) = fk_oracle_errors(&mut rng, 1000);
    assert!(fk <= 1e-10, "fk error {fk:e}");
    assert!(bone <= 1e-9, "bone length error {bone:e}");
}

#[test]
fn batched_fk_agrees_with_single_pose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let skel = random_skeleton(&mut rng, 12);
    let frames = 7;
    let poses: Vec<Pose> = (0..frames)
        .map(|_| Pose {
            root_position: random_vec(&mut rng, 1.0),
            rotations: (0..12).map(|_| random_unit_quat(&mut rng)).collect(),
        })
        .collect();
    let rot: Vec<f64> = poses.iter().flat_map(|p| p.rotations.iter().flat_map(|q| q.to_array())).collect();
    let roots: Vec<f64> = poses.iter().flat_map(|p| p.root_position).collect();
    let batched = batched_forward_kinematics(&skel, &rot, &roots);
    for (f, p) in poses.iter().enumerate() {
        for (j, x) in forward_kinematics(&skel, p).iter().enumerate() {
            let b = &batched[(f * 12 + j) * 3..(f * 12 + j) * 3 + 3];
            assert_eq!([b[0], b[1], b[2]], *x);
        }
    }
}

fn quat_strategy() -> impl Strategy<Value = Quaternion> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.01)
        .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z).normalized().unwrap())
}

proptest! {
    #[test]
    fn fk_preserves_bone_lengths(seed in any::<u64>(), joints in 2usize..20, root in prop::array::uniform3(-5.0..5.0f64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = random_skeleton(&mut rng, joints);
        let pose = Pose { root_position: root, rotations: (0..joints).map(|_| random_unit_quat(&mut rng)).collect() };
        let fk = forward_kinematics(&skel, &pose);
        prop_assert!(bone_length_error(&skel, &fk) < 1e-10);
        prop_assert_eq!(fk[0], root);
    }

    #[test]
    fn fk_is_invariant_to_quaternion_sign(seed in any::<u64>(), joints in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = random_skeleton(&mut rng, joints);
        let pose = Pose { root_position: [0.0; 3], rotations: (0..joints).map(|_| random_unit_quat(&mut rng)).collect() };
        let flipped = Pose { root_position: [0.0; 3], rotations: pose.rotations.iter().map(|q| q.scale(-1.0)).collect() };
        let (a, b) = (forward_kinematics(&skel, &pose), forward_kinematics(&skel, &flipped));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(vec_diff(*x, *y) < 1e-12);
        }
    }

    #[test]
    fn rotating_the_root_rotates_the_body(seed in any::<u64>(), r in quat_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = random_skeleton(&mut rng, 8);
        let mut pose = Pose { root_position: [0.0; 3], rotations: (0..8).map(|_| random_unit_quat(&mut rng)).collect() };
        let before = forward_kinematics(&skel, &pose);
        pose.rotations[0] = qmotion::quat::qmul(r, pose.rotations[0]);
        let after = forward_kinematics(&skel, &pose);
        let m = quat_matrix(r);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!(vec_diff(mat_vec(&m, *a), *b) < 1e-10);
        }
    }
}
