use super::Skeleton;
use crate::dataset::MotionClip;
use crate::error::Result;
use crate::quat::Quaternion;

/// Reflection plane through the origin, given by the axis of its normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MirrorPlane {
    pub normal_axis: usize,
}

impl Default for MirrorPlane {
    fn default() -> Self {
        Self { normal_axis: 0 }
    }
}

impl MirrorPlane {
    /// Conjugates a rotation by the reflection: the imaginary component along
    /// the normal is kept, the other two are negated.
    pub fn reflect_rotation(self, q: Quaternion) -> Quaternion {
        let mut a = q.to_array();
        for axis in 0..3 {
            if axis != self.normal_axis {
                a[axis + 1] = -a[axis + 1];
            }
        }
        Quaternion::from_array(a)
    }

    pub fn reflect_point(self, mut p: [f64; 3]) -> [f64; 3] {
        p[self.normal_axis] = -p[self.normal_axis];
        p
    }
}

/// Swaps left/right tracks and reflects the motion through `plane`.
///
/// For a skeleton whose partner offsets are mirror images of each other, FK
/// of the result equals the reflected FK of the input with labels swapped.
pub fn mirror_clip(skeleton: &Skeleton, clip: &MotionClip, plane: MirrorPlane) -> Result<MotionClip> {
    skeleton.check_mirror_map()?;
    let partner: Vec<usize> = (0..skeleton.len())
        .map(|j| skeleton.joint(j).mirror_partner.unwrap_or(j))
        .collect();
    let mut out = MotionClip::new(clip.frame_rate, clip.joints).with_tags(&clip.subject, &clip.action);
    let mut rot = vec![Quaternion::IDENTITY; clip.joints];
    for t in 0..clip.frames() {
        let frame = clip.frame(t);
        for j in 0..clip.joints {
            rot[j] = plane.reflect_rotation(frame[partner[j]]);
        }
        out.push_frame(plane.reflect_point(clip.root_positions[t]), &rot);
    }
    Ok(out)
}
