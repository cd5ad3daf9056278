//! Procedural corpora: an oscillating chain and a walking biped whose
//! stance foot is pinned to the ground.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MotionClip;
use crate::quat::{euler_to_quat, qmul, qrotate, shortest_arc, sub3, EulerOrder, Quaternion, Vec3};
use crate::skeleton::{JointDef, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticPreset {
    /// Serial chain with sinusoidal joint angles and a translating root.
    Chain { joints: usize },
    /// 21-joint walker.
    Biped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub preset: SyntheticPreset,
    pub clips: usize,
    pub frames: usize,
    pub frame_rate: f64,
    /// Oscillation (chain) or gait-cycle (biped) frequency range, Hz.
    pub freq_band: (f64, f64),
    /// Largest path curvature (1/units) of a biped clip.
    pub max_curvature: f64,
}

impl SyntheticSpec {
    pub fn chain(joints: usize) -> Self {
        Self {
            preset: SyntheticPreset::Chain { joints },
            clips: 16,
            frames: 200,
            frame_rate: 25.0,
            freq_band: (0.5, 1.0),
            max_curvature: 0.0,
        }
    }

    pub fn biped() -> Self {
        Self {
            preset: SyntheticPreset::Biped,
            clips: 16,
            frames: 240,
            frame_rate: 30.0,
            freq_band: (0.7, 1.1),
            max_curvature: 0.25,
        }
    }
}

pub const LEG_SEGMENT: f64 = 0.45;
const HIP_WIDTH: f64 = 0.1;

pub fn chain_skeleton(joints: usize) -> Skeleton {
    assert!(joints >= 2, "a chain needs at least two joints");
    let mut defs = vec![JointDef::new("root", None, [0.0; 3])];
    for k in 1..joints {
        defs.push(JointDef::new(format!("link{k}"), Some(k - 1), [0.0, 0.5, 0.0]));
    }
    Skeleton::new(defs).expect("chain skeleton is valid")
}

/// Depth-first ordered walker facing +z with its left side towards +x,
/// offsets in metres. End sites use the BVH `<parent>_End` naming so the
/// skeleton survives a BVH round trip.
pub fn biped_skeleton() -> Skeleton {
    let l = LEG_SEGMENT;
    let defs = vec![
        JointDef::new("Hips", None, [0.0, 0.0, 0.0]),
        JointDef::new("Spine", Some(0), [0.0, 0.25, 0.0]),
        JointDef::new("Neck", Some(1), [0.0, 0.3, 0.0]),
        JointDef::new("Head", Some(2), [0.0, 0.12, 0.0]),
        JointDef::new("Head_End", Some(3), [0.0, 0.12, 0.0]).end_site(),
        JointDef::new("LeftArm", Some(1), [0.18, 0.25, 0.0]),
        JointDef::new("LeftForeArm", Some(5), [0.0, -0.28, 0.0]),
        JointDef::new("LeftHand", Some(6), [0.0, -0.25, 0.0]),
        JointDef::new("LeftHand_End", Some(7), [0.0, -0.08, 0.0]).end_site(),
        JointDef::new("RightArm", Some(1), [-0.18, 0.25, 0.0]),
        JointDef::new("RightForeArm", Some(9), [0.0, -0.28, 0.0]),
        JointDef::new("RightHand", Some(10), [0.0, -0.25, 0.0]),
        JointDef::new("RightHand_End", Some(11), [0.0, -0.08, 0.0]).end_site(),
        JointDef::new("LeftUpLeg", Some(0), [HIP_WIDTH, 0.0, 0.0]),
        JointDef::new("LeftLeg", Some(13), [0.0, -l, 0.0]),
        JointDef::new("LeftFoot", Some(14), [0.0, -l, 0.0]),
        JointDef::new("LeftFoot_End", Some(15), [0.0, 0.0, 0.12]).end_site(),
        JointDef::new("RightUpLeg", Some(0), [-HIP_WIDTH, 0.0, 0.0]),
        JointDef::new("RightLeg", Some(17), [0.0, -l, 0.0]),
        JointDef::new("RightFoot", Some(18), [0.0, -l, 0.0]),
        JointDef::new("RightFoot_End", Some(19), [0.0, 0.0, 0.12]).end_site(),
    ];
    let mut s = Skeleton::new(defs).expect("biped skeleton is valid");
    s.infer_mirror_map().expect("biped names are paired");
    s
}

/// Builds a seeded synthetic corpus.
pub fn make_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> (Skeleton, Vec<MotionClip>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.preset {
        SyntheticPreset::Chain { joints } => {
            let skel = chain_skeleton(joints);
            let clips = (0..spec.clips).map(|i| chain_clip(spec, joints, i, &mut rng)).collect();
            (skel, clips)
        }
        SyntheticPreset::Biped => {
            let skel = biped_skeleton();
            let clips = (0..spec.clips)
                .map(|i| {
                    let p = BipedParams::sample(spec, &mut rng);
                    biped_clip(&skel, &p, spec.frames, spec.frame_rate)
                        .with_tags(format!("S{}", i % 4 + 1), "walk")
                })
                .collect();
            (skel, clips)
        }
    }
}

fn sample_band(band: (f64, f64), rng: &mut impl Rng) -> f64 {
    if band.1 > band.0 {
        rng.gen_range(band.0..band.1)
    } else {
        band.0
    }
}

fn chain_clip(spec: &SyntheticSpec, joints: usize, index: usize, rng: &mut impl Rng) -> MotionClip {
    let f = sample_band(spec.freq_band, rng);
    let amp: Vec<[f64; 3]> = (0..joints)
        .map(|_| [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)])
        .collect();
    let phase: Vec<[f64; 3]> = (0..joints)
        .map(|_| [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)])
        .collect();
    let heading = rng.gen_range(0.0..TAU);
    let mut clip = MotionClip::new(spec.frame_rate, joints).with_tags(format!("S{}", index % 4 + 1), "oscillate");
    let mut rot = vec![Quaternion::IDENTITY; joints];
    for t in 0..spec.frames {
        let time = t as f64 / spec.frame_rate;
        for (k, r) in rot.iter_mut().enumerate() {
            let a = [0, 1, 2].map(|c| amp[k][c] * (TAU * f * time + phase[k][c]).sin());
            *r = if k == 0 {
                euler_to_quat([0.3 * a[0], heading + 0.3 * a[1], 0.3 * a[2]], EulerOrder::Zyx)
            } else {
                euler_to_quat(a, EulerOrder::Zyx)
            };
        }
        let d = f * time;
        clip.push_frame([d * heading.sin(), 0.0, d * heading.cos()], &rot);
    }
    clip.fix_antipodal();
    clip
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BipedParams {
    /// Gait cycles per second (two footsteps per cycle).
    pub cycle_frequency: f64,
    /// Peak leg swing angle.
    pub phi_max: f64,
    /// Path curvature, 1/units.
    pub curvature: f64,
    pub heading: f64,
    pub start: [f64; 2],
    /// Relative speed modulation within a step.
    pub speed_ripple: f64,
    pub knee_max: f64,
    pub arm_swing: f64,
    /// Frames simulated before recording starts.
    pub preroll: usize,
}

impl BipedParams {
    fn sample(spec: &SyntheticSpec, rng: &mut impl Rng) -> Self {
        let curvature = if spec.max_curvature > 0.0 {
            rng.gen_range(-spec.max_curvature..spec.max_curvature)
        } else {
            0.0
        };
        // Tighter turns are walked more slowly.
        let f = sample_band(spec.freq_band, rng) * (1.0 - curvature.abs());
        Self {
            cycle_frequency: f,
            phi_max: rng.gen_range(0.3..0.45),
            curvature,
            heading: rng.gen_range(0.0..TAU),
            start: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            speed_ripple: 0.15,
            knee_max: rng.gen_range(0.7..1.0),
            arm_swing: rng.gen_range(0.2..0.4),
            preroll: rng.gen_range(0..(spec.frame_rate / f.max(0.1)) as usize + 1),
        }
    }

    pub fn stride(&self) -> f64 {
        4.0 * 2.0 * LEG_SEGMENT * self.phi_max.sin()
    }

    /// Arc length travelled at phase θ.
    fn arc(&self, theta: f64) -> f64 {
        self.stride() / TAU * (theta + 0.5 * self.speed_ripple * (2.0 * theta).sin())
    }

    fn ground(&self, s: f64) -> ([f64; 2], f64) {
        let (c, h0) = (self.curvature, self.heading);
        let h = h0 + c * s;
        let p = if c.abs() < 1e-9 {
            [self.start[0] + s * h0.sin(), self.start[1] + s * h0.cos()]
        } else {
            [
                self.start[0] + (h0.cos() - h.cos()) / c,
                self.start[1] + (h.sin() - h0.sin()) / c,
            ]
        };
        (p, h)
    }

    fn root_rotation(&self, theta: f64, heading: f64) -> Quaternion {
        qmul(Quaternion::about_axis(1, heading), Quaternion::about_axis(2, 0.04 * theta.sin()))
    }
}

fn hip_world(rot: Quaternion, ground: [f64; 2], y: f64, side: f64) -> Vec3 {
    let o = qrotate(rot, [side * HIP_WIDTH, 0.0, 0.0]);
    [ground[0] + o[0], y + o[1], ground[1] + o[2]]
}

/// Simulates one walking clip. The stance leg is straight with its foot
/// pinned where it landed; the root height follows from the leg length.
pub fn biped_clip(skel: &Skeleton, p: &BipedParams, frames: usize, frame_rate: f64) -> MotionClip {
    let leg = 2.0 * LEG_SEGMENT;
    let idx = |n: &str| skel.index_of(n).expect("biped joint");
    let (spine, neck) = (idx("Spine"), idx("Neck"));
    let arms = [(idx("LeftArm"), idx("LeftForeArm"), 1.0), (idx("RightArm"), idx("RightForeArm"), -1.0)];
    // (thigh, shin, lateral sign); left stance on θ ∈ [0, π) mod 2π.
    let legs = [(idx("LeftUpLeg"), idx("LeftLeg"), 1.0), (idx("RightUpLeg"), idx("RightLeg"), -1.0)];

    let landing = |step: f64, side: f64| -> Vec3 {
        let theta = step * PI;
        let (g, h) = p.ground(p.arc(theta));
        let rot = p.root_rotation(theta, h);
        let hip = hip_world(rot, g, 0.0, side);
        let reach = leg * p.phi_max.sin();
        [hip[0] + reach * h.sin(), 0.0, hip[2] + reach * h.cos()]
    };

    let mut clip = MotionClip::new(frame_rate, skel.len());
    let mut rot = vec![Quaternion::IDENTITY; skel.len()];
    let mut pins: [Option<(i64, Vec3)>; 2] = [None, None];
    for t in 0..frames + p.preroll {
        let theta = TAU * p.cycle_frequency * t as f64 / frame_rate;
        let step = (theta / PI).floor();
        let stance = if (step as i64).rem_euclid(2) == 0 { 0 } else { 1 };
        let swing = 1 - stance;
        if pins[stance].map(|(s, _)| s) != Some(step as i64) {
            pins[stance] = Some((step as i64, landing(step, legs[stance].2)));
        }
        let pin = pins[stance].expect("stance foot pinned").1;

        let (g, h) = p.ground(p.arc(theta));
        let root_rot = p.root_rotation(theta, h);
        let yaw = Quaternion::about_axis(1, h);
        let hip0 = hip_world(root_rot, g, 0.0, legs[stance].2);
        let rho = ((pin[0] - hip0[0]).powi(2) + (pin[2] - hip0[2]).powi(2)).sqrt().min(0.999 * leg);
        let hip_y = pin[1] + (leg * leg - rho * rho).sqrt();
        let root_y = hip_y - hip0[1];
        let hip = [hip0[0], hip_y, hip0[2]];
        let inv_root = root_rot.conjugate();

        let d = sub3(pin, hip);
        let local_d = qrotate(yaw.conjugate(), d);
        let stance_world = qmul(yaw, shortest_arc([0.0, -1.0, 0.0], local_d));
        rot[legs[stance].0] = qmul(inv_root, stance_world);
        rot[legs[stance].1] = Quaternion::IDENTITY;

        let u = (theta / PI).fract();
        let smooth = u * u * (3.0 - 2.0 * u);
        let phi = -p.phi_max + 2.0 * p.phi_max * smooth;
        let knee = p.knee_max * (PI * u).sin();
        let swing_world = qmul(yaw, Quaternion::about_axis(0, -(phi + 0.5 * knee)));
        rot[legs[swing].0] = qmul(inv_root, swing_world);
        rot[legs[swing].1] = Quaternion::about_axis(0, knee);

        rot[0] = root_rot;
        rot[spine] = qmul(Quaternion::about_axis(1, 0.1 * theta.sin()), Quaternion::about_axis(0, 0.05));
        rot[neck] = Quaternion::about_axis(1, -0.08 * theta.sin());
        for &(arm, fore, side) in &arms {
            let swing = side * p.arm_swing * theta.cos();
            rot[arm] = qmul(Quaternion::about_axis(0, swing), Quaternion::about_axis(2, side * 0.08));
            rot[fore] = Quaternion::about_axis(0, -0.3 - 0.15 * theta.cos());
        }
        if t >= p.preroll {
            clip.push_frame([g[0], root_y, g[1]], &rot);
        }
    }
    clip.fix_antipodal();
    clip
}
