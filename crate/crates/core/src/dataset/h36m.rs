//! Human3.6m short-term protocol constants and skeleton.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quat::EulerOrder;
use crate::skeleton::{JointDef, Skeleton};

pub const SUBJECTS: [&str; 7] = ["S1", "S5", "S6", "S7", "S8", "S9", "S11"];
pub const TEST_SUBJECT: &str = "S5";
pub const ACTIONS: [&str; 15] = [
    "walking",
    "eating",
    "smoking",
    "discussion",
    "directions",
    "greeting",
    "phoning",
    "posing",
    "purchases",
    "sitting",
    "sittingdown",
    "takingphoto",
    "waiting",
    "walkingdog",
    "walkingtogether",
];
pub const SOURCE_FRAME_RATE: f64 = 50.0;
/// Even and odd frames are both kept, giving 25 Hz.
pub const DOWNSAMPLE: usize = 2;
/// Conditioning and prediction lengths of the short-term protocol.
pub const PREFIX_FRAMES: usize = 50;
pub const PREDICT_FRAMES: usize = 10;
/// Test sequences drawn per action for the error table.
pub const SEQUENCES_PER_ACTION: usize = 8;
/// Test sequences drawn per action for error-over-time curves.
pub const CURVE_SEQUENCES_PER_ACTION: usize = 64;
/// Euler convention of the evaluation metric.
pub const EVAL_ORDER: EulerOrder = EulerOrder::Xyz;

const JOINTS: [(&str, i32, [f64; 3]); 32] = [
    ("Hips", -1, [0.0, 0.0, 0.0]),
    ("RightUpLeg", 0, [-132.948591, 0.0, 0.0]),
    ("RightLeg", 1, [0.0, -442.894612, 0.0]),
    ("RightFoot", 2, [0.0, -454.206447, 0.0]),
    ("RightToeBase", 3, [0.0, 0.0, 162.767078]),
    ("RightToeSite", 4, [0.0, 0.0, 74.999437]),
    ("LeftUpLeg", 0, [132.948826, 0.0, 0.0]),
    ("LeftLeg", 6, [0.0, -442.894413, 0.0]),
    ("LeftFoot", 7, [0.0, -454.20659, 0.0]),
    ("LeftToeBase", 8, [0.0, 0.0, 162.767426]),
    ("LeftToeSite", 9, [0.0, 0.0, 74.999948]),
    ("Spine", 0, [0.0, 0.1, 0.0]),
    ("Spine1", 11, [0.0, 233.383263, 0.0]),
    ("Neck", 12, [0.0, 257.077681, 0.0]),
    ("Head", 13, [0.0, 121.134938, 0.0]),
    ("HeadSite", 14, [0.0, 115.002227, 0.0]),
    ("LeftShoulder", 12, [0.0, 257.077681, 0.0]),
    ("LeftArm", 16, [0.0, 151.034226, 0.0]),
    ("LeftForeArm", 17, [0.0, 278.882773, 0.0]),
    ("LeftHand", 18, [0.0, 251.733451, 0.0]),
    ("LeftHandThumb", 19, [0.0, 0.0, 0.0]),
    ("LeftThumbSite", 20, [0.0, 0.0, 99.999627]),
    ("LeftWristEnd", 19, [0.0, 100.000188, 0.0]),
    ("LeftWristSite", 22, [0.0, 0.0, 0.0]),
    ("RightShoulder", 12, [0.0, 257.077681, 0.0]),
    ("RightArm", 24, [0.0, 151.031437, 0.0]),
    ("RightForeArm", 25, [0.0, 278.892924, 0.0]),
    ("RightHand", 26, [0.0, 251.72868, 0.0]),
    ("RightHandThumb", 27, [0.0, 0.0, 0.0]),
    ("RightThumbSite", 28, [0.0, 0.0, 99.999888]),
    ("RightWristEnd", 27, [0.0, 137.499922, 0.0]),
    ("RightWristSite", 30, [0.0, 0.0, 0.0]),
];

/// The 32-joint Human3.6m hierarchy in millimetres, ordered as the
/// exponential-map columns.
pub fn h36m_skeleton() -> Skeleton {
    let defs = JOINTS
        .iter()
        .map(|(name, parent, offset)| {
            let parent = (*parent >= 0).then_some(*parent as usize);
            JointDef::new(*name, parent, *offset).with_order(EVAL_ORDER)
        })
        .collect();
    let mut s = Skeleton::new(defs).expect("h36m skeleton is valid");
    s.infer_mirror_map().expect("h36m names are paired");
    s
}

/// Action name of an expmap file stem such as `walking_1`.
pub fn action_of(stem: &str) -> Option<&'static str> {
    let base = stem.rsplit_once('_').map_or(stem, |(a, n)| {
        if n.chars().all(|c| c.is_ascii_digit()) {
            a
        } else {
            stem
        }
    });
    let norm: String = base.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    ACTIONS.iter().copied().find(|a| *a == norm)
}

/// Draws `count` windows of `window` frames as `(clip, start)` pairs, picking
/// a clip uniformly among those long enough and then a uniform start.
pub fn sample_windows(lengths: &[usize], window: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let usable: Vec<usize> = (0..lengths.len()).filter(|&i| lengths[i] >= window).collect();
    if usable.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = usable[rng.gen_range(0..usable.len())];
            (c, rng.gen_range(0..=lengths[c] - window))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_and_actions() {
        let s = h36m_skeleton();
        assert_eq!(s.len(), 32);
        assert_eq!(s.joint(1).mirror_partner, Some(6));
        assert_eq!(s.joint(17).mirror_partner, Some(25));
        assert_eq!(action_of("walking_1"), Some("walking"));
        assert_eq!(action_of("WalkingDog"), Some("walkingdog"));
        assert_eq!(action_of("takingphoto"), Some("takingphoto"));
        assert_eq!(action_of("juggling_2"), None);
    }

    #[test]
    fn windows_are_seeded_and_in_range() {
        let lens = [100, 20, 70];
        let w = sample_windows(&lens, 60, 64, 11);
        assert_eq!(w.len(), 64);
        assert_eq!(w, sample_windows(&lens, 60, 64, 11));
        assert!(w.iter().all(|&(c, s)| c != 1 && s + 60 <= lens[c]));
        assert!(sample_windows(&[10], 60, 4, 0).is_empty());
    }
}
