use super::MotionClip;
use crate::quat::{qmul, qrotate, yaw_quat};

/// Frames `phase, phase + keep_every, …` at `frame_rate / keep_every`.
pub fn downsample(clip: &MotionClip, keep_every: usize, phase: usize) -> MotionClip {
    assert!(keep_every >= 1 && phase < keep_every, "invalid downsampling");
    let mut out = MotionClip::new(clip.frame_rate / keep_every as f64, clip.joints).with_tags(&clip.subject, &clip.action);
    for t in (phase..clip.frames()).step_by(keep_every) {
        out.push_frame(clip.root_positions[t], clip.frame(t));
    }
    out
}

/// All `keep_every` phases of [`downsample`].
pub fn downsample_all(clip: &MotionClip, keep_every: usize) -> Vec<MotionClip> {
    (0..keep_every).map(|p| downsample(clip, keep_every, p)).collect()
}

/// Rotates the whole clip about the vertical axis through the origin.
pub fn augment_rotation(clip: &MotionClip, yaw: f64) -> MotionClip {
    let q = yaw_quat(yaw);
    let mut out = clip.clone();
    for t in 0..out.frames() {
        out.root_positions[t] = qrotate(q, out.root_positions[t]);
        let root = &mut out.frame_mut(t)[0];
        *root = qmul(q, *root);
    }
    out
}
