use std::f64::consts::PI;

use super::spline::{dist2, fit_spline, heading, polyline_length, TrajectorySpline, Vec2};
use super::{ControlFeatures, GaitAnnotation, TranslationFeatures, WalkCycleSignal};
use crate::error::{Error, Result};
use crate::quat::wrap_angle;
use crate::skeleton::{forward_kinematics_into, Skeleton};
use crate::MotionClip;

/// Ground-plane projection of the root and its height, one entry per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RootTrajectory {
    pub points: Vec<Vec2>,
    pub heights: Vec<f64>,
}

impl RootTrajectory {
    /// Frame points with consecutive duplicates removed.
    pub fn polyline(&self) -> Vec<Vec2> {
        let mut out: Vec<Vec2> = Vec::new();
        for p in &self.points {
            if out.last().map_or(true, |q| dist2(*q, *p) > 0.0) {
                out.push(*p);
            }
        }
        out
    }
}

pub fn extract_root_trajectory(clip: &MotionClip) -> RootTrajectory {
    RootTrajectory {
        points: clip.root_positions.iter().map(|p| [p[0], p[2]]).collect(),
        heights: clip.root_positions.iter().map(|p| p[1]).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Foot {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FootContacts {
    pub left: Vec<bool>,
    pub right: Vec<bool>,
}

impl FootContacts {
    /// Frames where a contact run starts, in time order. A run already in
    /// progress at frame 0 is not an onset.
    pub fn onsets(&self) -> Vec<(usize, Foot)> {
        let mut out = Vec::new();
        for t in 1..self.left.len() {
            if self.left[t] && !self.left[t - 1] {
                out.push((t, Foot::Left));
            }
            if self.right[t] && !self.right[t - 1] {
                out.push((t, Foot::Right));
            }
        }
        out
    }

    /// Per-frame label; double support reports the foot that landed last.
    pub fn label(&self, t: usize) -> Option<Foot> {
        match (self.left[t], self.right[t]) {
            (false, false) => None,
            (true, false) => Some(Foot::Left),
            (false, true) => Some(Foot::Right),
            (true, true) => {
                let since = |c: &[bool]| (0..=t).rev().take_while(|&u| c[u]).count();
                if since(&self.left) <= since(&self.right) {
                    Some(Foot::Left)
                } else {
                    Some(Foot::Right)
                }
            }
        }
    }
}

fn debounce(c: &mut [bool], min_run: usize) {
    let mut t = 0;
    while t < c.len() {
        if !c[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < c.len() && c[t] {
            t += 1;
        }
        if t - start < min_run {
            c[start..t].iter_mut().for_each(|v| *v = false);
        }
    }
}

/// Contact where a foot's speed is below `speed_threshold` (units/s);
/// runs shorter than two frames are dropped.
pub fn detect_foot_contacts(skeleton: &Skeleton, clip: &MotionClip, feet: [&str; 2], speed_threshold: f64) -> Result<FootContacts> {
    let idx = [skeleton.index_of(feet[0])?, skeleton.index_of(feet[1])?];
    let n = clip.frames();
    let mut pos = vec![[0.0; 3]; skeleton.len()];
    let mut track = vec![[[0.0; 3]; 2]; n];
    for t in 0..n {
        forward_kinematics_into(skeleton, clip.frame(t), clip.root_positions[t], &mut pos);
        track[t] = [pos[idx[0]], pos[idx[1]]];
    }
    let mut out = [vec![false; n], vec![false; n]];
    for (f, c) in out.iter_mut().enumerate() {
        for t in 0..n {
            let (a, b) = if t == 0 { (0, 1.min(n - 1)) } else { (t - 1, t) };
            let d = crate::quat::norm3(crate::quat::sub3(track[b][f], track[a][f]));
            c[t] = d * clip.frame_rate < speed_threshold;
        }
        debounce(c, 2);
    }
    let [left, right] = out;
    Ok(FootContacts { left, right })
}

/// Unwrapped walk-cycle phase per frame: 2πk at the k-th left onset, the
/// next odd multiple of π at each right onset, linear in between and
/// extrapolated at the ends with the nearest interval's rate.
pub fn build_phase_signal(onsets: &[(usize, Foot)], frames: usize) -> Result<Vec<f64>> {
    let has = |foot| onsets.iter().any(|(_, f)| *f == foot);
    if !has(Foot::Left) || !has(Foot::Right) {
        return Err(Error::InsufficientContacts(format!("{} onsets", onsets.len())));
    }
    let mut events: Vec<(f64, f64)> = Vec::new();
    for &(t, foot) in onsets {
        let base = if foot == Foot::Left { 0.0 } else { PI };
        let theta = match events.last() {
            None => base,
            Some(&(pt, _)) if pt == t as f64 => continue,
            Some(&(_, prev)) => {
                let k = ((prev - base) / (2.0 * PI)).floor() + 1.0;
                base + 2.0 * PI * k
            }
        };
        events.push((t as f64, theta));
    }
    if events.len() < 2 {
        return Err(Error::InsufficientContacts("onsets share a frame".into()));
    }
    let mut out = Vec::with_capacity(frames);
    let mut e = 0;
    for t in 0..frames {
        let x = t as f64;
        while e + 2 < events.len() && x > events[e + 1].0 {
            e += 1;
        }
        let (t0, a) = events[e];
        let (t1, b) = events[e + 1];
        out.push(a + (b - a) * (x - t0) / (t1 - t0));
    }
    Ok(out)
}

/// Step frequency in footsteps per second from a phase signal. One
/// footstep advances the phase by π.
pub fn step_frequency(theta: &[f64], frame_rate: f64) -> Vec<f64> {
    let n = theta.len();
    (0..n)
        .map(|t| {
            let (a, b) = if t + 1 < n { (t, t + 1) } else { (t.saturating_sub(1), t) };
            if a == b {
                0.0
            } else {
                (theta[b] - theta[a]) * frame_rate / PI
            }
        })
        .collect()
}

/// Centered moving average with edge clamping.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let h = (window / 2) as isize;
    let w = (2 * h + 1) as f64;
    (0..n)
        .map(|t| (-h..=h).map(|d| x[(t + d).clamp(0, n - 1) as usize]).sum::<f64>() / w)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedDecomposition {
    /// Frame-to-frame speed; the first entry is 0.
    pub instantaneous: Vec<f64>,
    pub local: Vec<f64>,
    /// `Σ_{u=1..t} (instantaneous − local) / frame_rate`.
    pub offset: Vec<f64>,
    /// Arc length travelled up to each frame.
    pub arc: Vec<f64>,
}

impl SpeedDecomposition {
    /// Arc position rebuilt from the low-pass speed and the offset.
    pub fn reconstructed_arc(&self, frame_rate: f64) -> Vec<f64> {
        let mut acc = 0.0;
        (0..self.local.len())
            .map(|t| {
                if t > 0 {
                    acc += self.local[t] / frame_rate;
                }
                acc + self.offset[t]
            })
            .collect()
    }
}

pub fn decompose_speed(points: &[Vec2], frame_rate: f64, window: usize) -> SpeedDecomposition {
    let n = points.len();
    let mut inst = vec![0.0; n];
    for t in 1..n {
        inst[t] = dist2(points[t], points[t - 1]) * frame_rate;
    }
    let mut filter_in = inst.clone();
    if n > 1 {
        filter_in[0] = inst[1];
    }
    let local = moving_average(&filter_in, window);
    let (mut offset, mut arc) = (vec![0.0; n], vec![0.0; n]);
    for t in 1..n {
        offset[t] = offset[t - 1] + (inst[t] - local[t]) / frame_rate;
        arc[t] = arc[t - 1] + inst[t] / frame_rate;
    }
    SpeedDecomposition {
        instantaneous: inst,
        local,
        offset,
        arc,
    }
}

/// Character forward direction on the ground plane: the horizontal
/// perpendicular of the left-hip to right-hip vector.
pub fn forward_direction(left_hip: [f64; 3], right_hip: [f64; 3]) -> Option<Vec2> {
    let d = [right_hip[0] - left_hip[0], right_hip[2] - left_hip[2]];
    let f = [d[1], -d[0]];
    let l = (f[0] * f[0] + f[1] * f[1]).sqrt();
    (l > 1e-12).then(|| [f[0] / l, f[1] / l])
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaitConfig {
    pub left_foot: String,
    pub right_foot: String,
    pub left_hip: String,
    pub right_hip: String,
    /// Foot speed below which a contact is detected, units/s.
    pub contact_threshold: f64,
    /// Moving-average window in frames.
    pub lowpass_window: usize,
    /// Spline segment length; `None` picks the distance covered in 1/6 s.
    pub segment_length: Option<f64>,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            left_foot: "LeftFoot".into(),
            right_foot: "RightFoot".into(),
            left_hip: "LeftUpLeg".into(),
            right_hip: "RightUpLeg".into(),
            contact_threshold: 0.3,
            lowpass_window: 31,
            segment_length: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    /// Arc length on the fitted spline.
    pub arc: f64,
    pub tangent: Vec2,
    /// Facing relative to the tangent, radians.
    pub facing: f64,
    pub theta: f64,
    pub step_frequency: f64,
    pub local_speed: f64,
    pub root_height: f64,
    pub spline_offset: f64,
}

impl FrameFeatures {
    pub fn controls(&self) -> ControlFeatures {
        let walk = WalkCycleSignal {
            a: self.local_speed,
            theta: self.theta,
        };
        ControlFeatures::new(self.tangent, self.facing, walk)
    }

    pub fn translations(&self) -> TranslationFeatures {
        TranslationFeatures {
            root_height: self.root_height,
            spline_offset: self.spline_offset,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClipGait {
    pub spline: TrajectorySpline,
    pub contacts: FootContacts,
    pub speed: SpeedDecomposition,
    pub frames: Vec<FrameFeatures>,
}

impl ClipGait {
    /// Per-segment averages of the frame features, for pace training.
    /// Facing is averaged as a versor. Segments no frame falls in copy the
    /// previous segment.
    pub fn segment_annotations(&self) -> Vec<GaitAnnotation> {
        let n = self.spline.len();
        let mut acc = vec![(0.0, 0.0, 0.0, 0.0, 0usize); n];
        for f in &self.frames {
            let a = &mut acc[self.spline.segment_at(f.arc)];
            a.0 += f.facing.cos();
            a.1 += f.facing.sin();
            a.2 += f.step_frequency;
            a.3 += f.local_speed;
            a.4 += 1;
        }
        let mut out: Vec<GaitAnnotation> = Vec::with_capacity(n);
        for a in acc {
            if a.4 == 0 {
                let prev = out.last().cloned().unwrap_or(GaitAnnotation {
                    facing: 0.0,
                    step_frequency: 0.0,
                    local_speed: 0.0,
                });
                out.push(prev);
                continue;
            }
            let c = a.4 as f64;
            out.push(GaitAnnotation {
                facing: a.1.atan2(a.0),
                step_frequency: a.2 / c,
                local_speed: a.3 / c,
            });
        }
        out
    }
}

/// Extracts every per-frame gait feature from a locomotion clip.
pub fn compute_gait_features(skeleton: &Skeleton, clip: &MotionClip, cfg: &GaitConfig) -> Result<ClipGait> {
    let traj = extract_root_trajectory(clip);
    let poly = traj.polyline();
    let fr = clip.frame_rate;
    let raw_len = polyline_length(&poly);
    if poly.len() < 2 || raw_len <= 0.0 {
        return Err(Error::DegeneratePath("root does not move".into()));
    }
    let seg = cfg
        .segment_length
        .unwrap_or_else(|| raw_len / ((clip.frames() - 1) as f64 / fr) / 6.0);
    let spline = fit_spline(&poly, seg)?;
    let contacts = detect_foot_contacts(
        skeleton,
        clip,
        [cfg.left_foot.as_str(), cfg.right_foot.as_str()],
        cfg.contact_threshold,
    )?;
    let theta = build_phase_signal(&contacts.onsets(), clip.frames())?;
    let freq = step_frequency(&theta, fr);
    let speed = decompose_speed(&traj.points, fr, cfg.lowpass_window);
    let scale = spline.total_length() / speed.arc[speed.arc.len() - 1];

    let (lh, rh) = (skeleton.index_of(&cfg.left_hip)?, skeleton.index_of(&cfg.right_hip)?);
    let mut pos = vec![[0.0; 3]; skeleton.len()];
    let mut frames = Vec::with_capacity(clip.frames());
    for t in 0..clip.frames() {
        forward_kinematics_into(skeleton, clip.frame(t), clip.root_positions[t], &mut pos);
        let arc = speed.arc[t] * scale;
        let tangent = spline.tangent_at(arc);
        let facing = forward_direction(pos[lh], pos[rh])
            .map(|f| wrap_angle(heading(f) - heading(tangent)))
            .unwrap_or(0.0);
        frames.push(FrameFeatures {
            arc,
            tangent,
            facing,
            theta: theta[t],
            step_frequency: freq[t].max(0.0),
            local_speed: speed.local[t].max(0.0),
            root_height: traj.heights[t],
            spline_offset: speed.offset[t],
        });
    }
    Ok(ClipGait {
        spline,
        contacts,
        speed,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::JointDef;
    use crate::Quaternion;

    fn feet_skeleton() -> Skeleton {
        Skeleton::new(vec![
            JointDef::new("Hips", None, [0.0; 3]),
            JointDef::new("LeftFoot", Some(0), [0.1, -1.0, 0.0]),
            JointDef::new("RightFoot", Some(0), [-0.1, -1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn stationary_and_moving_feet() {
        let s = feet_skeleton();
        let mut still = MotionClip::new(30.0, 3);
        let mut moving = MotionClip::new(30.0, 3);
        for t in 0..20 {
            still.push_frame([0.0; 3], &[Quaternion::IDENTITY; 3]);
            moving.push_frame([t as f64 / 30.0, 0.0, 0.0], &[Quaternion::IDENTITY; 3]);
        }
        let c = detect_foot_contacts(&s, &still, ["LeftFoot", "RightFoot"], 0.1).unwrap();
        assert!(c.left.iter().chain(&c.right).all(|v| *v));
        let c = detect_foot_contacts(&s, &moving, ["LeftFoot", "RightFoot"], 0.1).unwrap();
        assert!(c.left.iter().chain(&c.right).all(|v| !*v));
        assert!(matches!(
            detect_foot_contacts(&s, &still, ["Nope", "RightFoot"], 0.1),
            Err(Error::UnknownJoint(_))
        ));
        let traj = extract_root_trajectory(&moving);
        let d = decompose_speed(&traj.points, 30.0, 31);
        assert!(d.local.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(d.offset.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(extract_root_trajectory(&still).polyline().len(), 1);
    }

    #[test]
    fn phase_example() {
        let th = build_phase_signal(&[(0, Foot::Left), (10, Foot::Right), (20, Foot::Left)], 21).unwrap();
        assert_eq!(th[0], 0.0);
        assert!((th[10] - PI).abs() < 1e-12);
        assert!((th[20] - 2.0 * PI).abs() < 1e-12);
        assert!((th[5] - PI / 2.0).abs() < 1e-12);
        assert!(build_phase_signal(&[(0, Foot::Left)], 5).is_err());
        let f = step_frequency(&th, 30.0);
        assert!((f[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn phase_is_monotone_for_irregular_onsets() {
        let on = [(3, Foot::Right), (7, Foot::Right), (9, Foot::Left), (15, Foot::Left), (22, Foot::Right)];
        let th = build_phase_signal(&on, 30).unwrap();
        assert!(th.windows(2).all(|w| w[1] >= w[0]));
        assert!((th[9] / (2.0 * PI)).fract().abs() < 1e-12);
    }

    #[test]
    fn debounce_drops_single_frames() {
        let mut c = vec![true, false, true, true, false, true];
        debounce(&mut c, 2);
        assert_eq!(c, vec![false, false, true, true, false, false]);
    }

    #[test]
    fn sinusoidal_speed_offset() {
        let fr = 30.0;
        let w = 2.0 * PI / 31.0 * fr;
        let mut x = 0.0;
        let mut pts = vec![[0.0, 0.0]];
        for t in 1..600 {
            x += (1.0 + 0.5 * (w * t as f64 / fr).sin()) / fr;
            pts.push([0.0, x]);
        }
        let d = decompose_speed(&pts, fr, 31);
        let mid = &d.offset[100..500];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        let max = mid.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        assert!((max - 0.5 / w).abs() < 0.1 * 0.5 / w, "{max}");
        let r = d.reconstructed_arc(fr);
        for t in 0..600 {
            assert!((r[t] - d.arc[t]).abs() <= 1e-9 * d.arc[t].max(1.0));
        }
    }
}
