//! Independent rotation-matrix oracles and random generators shared by the
//! integration tests. Nothing here goes through the quaternion code paths.
#![allow(dead_code)]

pub mod gradient_cases;

use qmotion::skeleton::{JointDef, Skeleton};
use qmotion::{Quaternion, Vec3};
use rand::Rng;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn mat_vec(a: &Mat3, v: Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn vec_diff(a: Vec3, b: Vec3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// Rodrigues' formula `I + sin θ K + (1 − cos θ) K²` for rotation vector `e`.
pub fn rodrigues(e: Vec3) -> Mat3 {
    let theta = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    if theta == 0.0 {
        return IDENTITY;
    }
    let k = [e[0] / theta, e[1] / theta, e[2] / theta];
    let kx: Mat3 = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let kx2 = mat_mul(&kx, &kx);
    let (s, c) = theta.sin_cos();
    let mut m = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += s * kx[i][j] + (1.0 - c) * kx2[i][j];
        }
    }
    m
}

/// Elementary rotation about coordinate axis 0, 1 or 2.
pub fn axis_matrix(axis: usize, a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    match axis {
        0 => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        1 => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        _ => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// Rotation matrix of a unit quaternion, via its axis and angle.
pub fn quat_matrix(q: Quaternion) -> Mat3 {
    let [w, x, y, z] = q.to_array();
    let v = (x * x + y * y + z * z).sqrt();
    if v == 0.0 {
        return IDENTITY;
    }
    let angle = 2.0 * v.atan2(w);
    rodrigues([x / v * angle, y / v * angle, z / v * angle])
}

pub fn random_unit_quat(rng: &mut impl Rng) -> Quaternion {
    loop {
        let a: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return Quaternion::new(a[0] / n, a[1] / n, a[2] / n, a[3] / n);
        }
    }
}

pub fn random_vec(rng: &mut impl Rng, r: f64) -> Vec3 {
    [rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r)]
}

/// Random tree with `joints` joints in topological order.
pub fn random_skeleton(rng: &mut impl Rng, joints: usize) -> Skeleton {
    let mut defs = vec![JointDef::new("j0", None, [0.0; 3])];
    for i in 1..joints {
        let parent = rng.gen_range(0..i);
        defs.push(JointDef::new(format!("j{i}"), Some(parent), random_vec(rng, 1.0)));
    }
    Skeleton::new(defs).unwrap()
}

/// World positions by accumulating rotation matrices down the tree.
pub fn matrix_fk(skel: &Skeleton, rotations: &[Quaternion], root: Vec3) -> Vec<Vec3> {
    let mut world_r: Vec<Mat3> = Vec::with_capacity(skel.len());
    let mut pos: Vec<Vec3> = Vec::with_capacity(skel.len());
    for (i, q) in rotations.iter().enumerate() {
        let local = quat_matrix(*q);
        match skel.parent(i) {
            None => {
                world_r.push(local);
                pos.push(root);
            }
            Some(p) => {
                let o = mat_vec(&world_r[p], skel.offset(i));
                pos.push([pos[p][0] + o[0], pos[p][1] + o[1], pos[p][2] + o[2]]);
                world_r.push(mat_mul(&world_r[p], &local));
            }
        }
    }
    pos
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Largest deviation of any bone length from its rest length.
pub fn bone_length_error(skel: &Skeleton, positions: &[Vec3]) -> f64 {
    (1..skel.len())
        .map(|i| {
            let p = skel.parent(i).unwrap();
            (dist(positions[i], positions[p]) - skel.bone_length(i)).abs()
        })
        .fold(0.0, f64::max)
}

pub const ROTATION_CHECKS: [&str; 6] = ["qmul", "qrotate", "expmap_to_quat", "quat_to_expmap", "euler_to_quat", "quat_to_euler"];

/// Worst absolute error of each rotation primitive against the matrix
/// oracles over `cases` random draws, and the number of near-gimbal Euler
/// extractions left out.
pub fn rotation_oracle_errors(rng: &mut impl Rng, cases: usize) -> ([f64; 6], usize) {
    use qmotion::quat::{euler_to_quat, expmap_to_quat, qmul, qrotate, quat_to_euler, quat_to_expmap};
    use qmotion::EulerOrder;
    use std::f64::consts::PI;

    let mut worst = [0.0f64; 6];
    let mut skipped = 0;
    for _ in 0..cases {
        let a = random_unit_quat(rng);
        let b = random_unit_quat(rng);
        let v = random_vec(rng, 5.0);

        let ab = quat_matrix(qmul(a, b));
        worst[0] = worst[0].max(max_abs_diff(&ab, &mat_mul(&quat_matrix(a), &quat_matrix(b))));

        worst[1] = worst[1].max(vec_diff(qrotate(a, v), mat_vec(&quat_matrix(a), v)));
        worst[1] = worst[1].max(max_abs_diff(&a.to_rotation_matrix(), &quat_matrix(a)));

        let e = random_vec(rng, 3.0 * PI / 3f64.sqrt());
        worst[2] = worst[2].max(max_abs_diff(&quat_matrix(expmap_to_quat(e)), &rodrigues(e)));

        let back = quat_to_expmap(a);
        let n = (back[0] * back[0] + back[1] * back[1] + back[2] * back[2]).sqrt();
        worst[3] = worst[3].max(max_abs_diff(&rodrigues(back), &quat_matrix(a)));
        worst[3] = worst[3].max((n - PI).max(0.0));

        for order in EulerOrder::ALL {
            let ax = order.axes();
            let angles = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            let product = mat_mul(
                &mat_mul(&axis_matrix(ax[0], angles[0]), &axis_matrix(ax[1], angles[1])),
                &axis_matrix(ax[2], angles[2]),
            );
            worst[4] = worst[4].max(max_abs_diff(&quat_matrix(euler_to_quat(angles, order)), &product));

            let e = quat_to_euler(a, order);
            if e[1].cos() < 1e-3 {
                skipped += 1;
                continue;
            }
            let rebuilt = mat_mul(&mat_mul(&axis_matrix(ax[0], e[0]), &axis_matrix(ax[1], e[1])), &axis_matrix(ax[2], e[2]));
            worst[5] = worst[5].max(max_abs_diff(&rebuilt, &quat_matrix(a)));
        }
    }
    (worst, skipped)
}

/// Worst position error of quaternion FK against [`matrix_fk`], and worst
/// relative bone-length error, over `cases` random skeletons and poses.
pub fn fk_oracle_errors(rng: &mut impl Rng, cases: usize) -> (f64, f64) {
    use qmotion::skeleton::forward_kinematics;
    use qmotion::Pose;

    let (mut fk_err, mut bone_err) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let joints = rng.gen_range(1..25);
        let skel = random_skeleton(rng, joints);
        let pose = Pose {
            root_position: random_vec(rng, 3.0),
            rotations: (0..joints).map(|_| random_unit_quat(rng)).collect(),
        };
        let fk = forward_kinematics(&skel, &pose);
        for (a, b) in fk.iter().zip(&matrix_fk(&skel, &pose.rotations, pose.root_position)) {
            fk_err = fk_err.max(vec_diff(*a, *b));
        }
        bone_err = bone_err.max(relative_bone_error(&skel, &fk));
    }
    (fk_err, bone_err)
}

/// Largest bone-length deviation relative to the rest length.
pub fn relative_bone_error(skel: &Skeleton, positions: &[Vec3]) -> f64 {
    (1..skel.len())
        .filter(|&i| skel.bone_length(i) > 0.0)
        .map(|i| {
            let p = skel.parent(i).unwrap();
            (dist(positions[i], positions[p]) - skel.bone_length(i)).abs() / skel.bone_length(i)
        })
        .fold(0.0, f64::max)
}
