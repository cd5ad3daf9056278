use super::Skeleton;
use crate::dataset::MotionClip;
use crate::quat::{add3, qrotate, quat_angle_distance, Quaternion};

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub skeleton: Skeleton,
    pub clips: Vec<MotionClip>,
    /// Names of the removed joints, in original order.
    pub removed: Vec<String>,
}

/// Removes interior joints whose rotation never departs from the reference
/// (first frame of the first clip) by more than `tolerance` radians in any clip.
///
/// The removed rotation is folded into each child: the child offset becomes
/// `offset_j + rotate(reference, offset_child)` and the child's local rotation
/// is premultiplied by the removed joint's rotation, so FK positions of the
/// retained joints are preserved. The root and End Sites are never removed.
pub fn prune_constant_joints(skeleton: &Skeleton, clips: &[MotionClip], tolerance: f64) -> PruneOutcome {
    assert!(!clips.is_empty(), "pruning needs at least one clip");
    let n = skeleton.len();
    let reference = clips[0].frame(0).to_vec();
    let constant: Vec<bool> = (0..n)
        .map(|j| {
            j != 0
                && !skeleton.joint(j).end_site
                && skeleton.has_children(j)
                && clips.iter().all(|c| {
                    (0..c.frames()).all(|t| quat_angle_distance(c.frame(t)[j], reference[j]) <= tolerance)
                })
        })
        .collect();

    // Work on mutable copies, removing one joint at a time from the leaves up
    // so that nested removals compose.
    let mut joints = skeleton.joints().to_vec();
    let mut clips: Vec<MotionClip> = clips.to_vec();
    let scale = skeleton.scale();
    let mut alive: Vec<bool> = vec![true; n];
    for j in (0..n).rev().filter(|&j| constant[j]) {
        let parent = joints[j].parent;
        let c_rot = reference[j];
        let oj = joints[j].offset;
        for c in 0..n {
            if alive[c] && joints[c].parent == Some(j) {
                joints[c].offset = add3(oj, qrotate(c_rot, joints[c].offset));
                joints[c].parent = parent;
                for clip in clips.iter_mut() {
                    for t in 0..clip.frames() {
                        let f = clip.frame_mut(t);
                        f[c] = f[j] * f[c];
                    }
                }
            }
        }
        alive[j] = false;
    }

    let mut new_index = vec![usize::MAX; n];
    let mut k = 0;
    for j in 0..n {
        if alive[j] {
            new_index[j] = k;
            k += 1;
        }
    }
    let kept: Vec<_> = (0..n)
        .filter(|&j| alive[j])
        .map(|j| {
            let mut d = joints[j].clone();
            d.parent = d.parent.map(|p| new_index[p]);
            d.mirror_partner = d.mirror_partner.filter(|&m| alive[m]).map(|m| new_index[m]);
            d
        })
        .collect();
    let skeleton = Skeleton::from_parts(kept, scale).expect("pruning preserves topological order");
    let clips = clips
        .into_iter()
        .map(|c| {
            let mut out = MotionClip::new(c.frame_rate, k).with_tags(&c.subject, &c.action);
            let mut rot = vec![Quaternion::IDENTITY; k];
            for t in 0..c.frames() {
                let f = c.frame(t);
                for j in 0..n {
                    if alive[j] {
                        rot[new_index[j]] = f[j];
                    }
                }
                out.push_frame(c.root_positions[t], &rot);
            }
            out.fix_antipodal();
            out
        })
        .collect();
    let removed = (0..n)
        .filter(|&j| !alive[j])
        .map(|j| joints[j].name.clone())
        .collect();
    PruneOutcome {
        skeleton,
        clips,
        removed,
    }
}
