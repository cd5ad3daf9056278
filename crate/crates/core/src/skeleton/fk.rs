use super::{Pose, Skeleton};
use crate::quat::{add3, qmul, qrotate, Quaternion, Vec3};

/// World positions of every joint. All composition happens in quaternion
/// space; no rotation matrix is built.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; skeleton.len()];
    forward_kinematics_into(skeleton, &pose.rotations, pose.root_position, &mut out);
    out
}

pub fn forward_kinematics_into(
    skeleton: &Skeleton,
    rotations: &[Quaternion],
    root: Vec3,
    out: &mut [Vec3],
) {
    let mut world = vec![Quaternion::IDENTITY; skeleton.len()];
    fk_core(skeleton, rotations, root, &mut world, out);
}

/// World rotations and positions of every joint.
pub fn world_transforms(skeleton: &Skeleton, rotations: &[Quaternion], root: Vec3) -> (Vec<Quaternion>, Vec<Vec3>) {
    let mut world = vec![Quaternion::IDENTITY; skeleton.len()];
    let mut pos = vec![[0.0; 3]; skeleton.len()];
    fk_core(skeleton, rotations, root, &mut world, &mut pos);
    (world, pos)
}

fn fk_core(skeleton: &Skeleton, rotations: &[Quaternion], root: Vec3, world: &mut [Quaternion], pos: &mut [Vec3]) {
    debug_assert_eq!(rotations.len(), skeleton.len());
    for j in 0..skeleton.len() {
        match skeleton.parent(j) {
            None => {
                world[j] = rotations[j];
                pos[j] = root;
            }
            Some(p) => {
                world[j] = qmul(world[p], rotations[j]);
                pos[j] = add3(pos[p], qrotate(world[p], skeleton.offset(j)));
            }
        }
    }
}

/// Forward kinematics over a flat batch.
///
/// `rotations` is `[n × joints × 4]` in `(w, x, y, z)` order and `roots` is
/// `[n × 3]`; returns `[n × joints × 3]`.
pub fn batched_forward_kinematics(skeleton: &Skeleton, rotations: &[f64], roots: &[f64]) -> Vec<f64> {
    let j = skeleton.len();
    let n = roots.len() / 3;
    assert_eq!(rotations.len(), n * j * 4, "rotation buffer does not match roots");
    let offsets: Vec<Vec3> = (0..j).map(|i| skeleton.offset(i)).collect();
    let parents: Vec<Option<usize>> = (0..j).map(|i| skeleton.parent(i)).collect();
    let mut out = vec![0.0; n * j * 3];
    let mut world = vec![Quaternion::IDENTITY; j];
    for b in 0..n {
        let rot = &rotations[b * j * 4..(b + 1) * j * 4];
        let pos = &mut out[b * j * 3..(b + 1) * j * 3];
        for i in 0..j {
            let q = Quaternion::from_slice(&rot[i * 4..i * 4 + 4]);
            match parents[i] {
                None => {
                    world[i] = q;
                    pos[i * 3..i * 3 + 3].copy_from_slice(&roots[b * 3..b * 3 + 3]);
                }
                Some(p) => {
                    world[i] = qmul(world[p], q);
                    let r = qrotate(world[p], offsets[i]);
                    for c in 0..3 {
                        pos[i * 3 + c] = pos[p * 3 + c] + r[c];
                    }
                }
            }
        }
    }
    out
}
