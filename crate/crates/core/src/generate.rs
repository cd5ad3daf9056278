//! Online locomotion generation: a spline, gait annotations from the pace
//! network and a free-running pose network driven by control features.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::gait::{
    fit_spline, heading, ControlFeatures, GaitAnnotation, PaceMode, PaceNet, PaceStream, TrajectorySpline, Vec2,
    WalkCycleSignal,
};
use crate::posenet::{PoseNet, PoseState};
use crate::quat::{qmul, Quaternion, Vec3};
use crate::skeleton::forward_kinematics_into;

/// Footsteps per second per unit of speed when no pace network is given.
pub const DEFAULT_STEPS_PER_UNIT: f64 = 1.6;

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationConfig {
    pub target_speed: f64,
    pub pace_mode: PaceMode,
    pub segment_length: f64,
    pub frame_rate: f64,
    /// Added to the annotated facing, radians.
    pub facing_offset: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            target_speed: 1.0,
            pace_mode: PaceMode::default(),
            segment_length: 0.25,
            frame_rate: 30.0,
            facing_offset: 0.0,
        }
    }
}

/// One generated pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Seconds since the session started.
    pub t: f64,
    /// Walk-cycle phase, unwrapped.
    pub theta: f64,
    /// Arc length of the character on the spline.
    pub arc: f64,
    pub root: Vec3,
    pub rotations: Vec<Quaternion>,
    pub positions: Vec<Vec3>,
}

/// Generation state of one character. Parameters are shared, the recurrent
/// state is private.
#[derive(Clone, Debug)]
pub struct GenerationSession {
    pose: Arc<PoseNet>,
    pace: Option<Arc<PaceNet>>,
    pub config: GenerationConfig,
    points: Vec<Vec2>,
    spline: TrajectorySpline,
    stream: Option<PaceStream>,
    /// Raw per-segment annotations, before speed scaling.
    annotations: Vec<GaitAnnotation>,
    /// Factor mapping annotated speeds to the target speed.
    speed_scale: f64,
    state: PoseState,
    prev_rotations: Vec<Quaternion>,
    prev_translations: Option<[f64; 2]>,
    default_height: f64,
    /// Last spline offset; held while the target speed is zero.
    offset: f64,
    arc: f64,
    theta: f64,
    frame: usize,
}

fn rotate2(v: Vec2, a: f64) -> Vec2 {
    let (s, c) = a.sin_cos();
    [v[0] * c + v[1] * s, -v[0] * s + v[1] * c]
}

impl GenerationSession {
    pub fn new(pose: Arc<PoseNet>, pace: Option<Arc<PaceNet>>, points: &[Vec2], config: GenerationConfig) -> Result<Self> {
        let pc = &pose.config;
        if !pc.include_controls {
            return Err(Error::IncompatibleSkeleton(
                "pose checkpoint was trained without control inputs".into(),
            ));
        }
        if !(config.frame_rate > 0.0) || !(config.target_speed >= 0.0) {
            return Err(Error::Config("frame rate must be positive and speed non-negative".into()));
        }
        let spline = fit_spline(points, config.segment_length)?;
        let j = pc.joints;
        let mut s = Self {
            stream: match config.pace_mode {
                PaceMode::Delayed(d) => Some(PaceStream::new(d)),
                PaceMode::Bidirectional => None,
            },
            state: pose.initial_state(1),
            prev_rotations: vec![Quaternion::IDENTITY; j],
            prev_translations: pc.include_translations.then_some([0.0, 0.0]),
            default_height: 0.0,
            offset: 0.0,
            pose,
            pace,
            config,
            points: points.to_vec(),
            spline,
            annotations: Vec::new(),
            speed_scale: 1.0,
            arc: 0.0,
            theta: 0.0,
            frame: 0,
        };
        s.annotate()?;
        s.warm_up()?;
        Ok(s)
    }

    /// Recomputes annotations for segments whose inputs changed.
    fn annotate(&mut self) -> Result<()> {
        let n = self.spline.len();
        let curv = self.spline.curvatures();
        match (&self.pace, &mut self.stream) {
            (Some(pace), Some(stream)) => {
                let from = stream.update(pace, &curv)?.saturating_sub(stream.delay);
                self.annotations.truncate(from);
                self.annotations.extend(stream.annotations_from(pace, from));
            }
            (Some(pace), None) => self.annotations = pace.forward(&curv, PaceMode::Bidirectional)?,
            (None, _) => {
                let a = GaitAnnotation {
                    facing: 0.0,
                    step_frequency: DEFAULT_STEPS_PER_UNIT,
                    local_speed: 1.0,
                };
                self.annotations = vec![a; n];
            }
        }
        self.rescale();
        Ok(())
    }

    /// Scales annotated speeds so the whole spline takes `length / target`
    /// seconds while keeping their relative variation.
    fn rescale(&mut self) {
        let raw_time: f64 = self
            .spline
            .segments
            .iter()
            .zip(&self.annotations)
            .map(|(s, a)| s.length / a.local_speed.max(1e-3))
            .sum();
        let target_time = self.spline.total_length() / self.config.target_speed.max(1e-12);
        self.speed_scale = if self.config.target_speed > 0.0 { raw_time / target_time } else { 0.0 };
    }

    fn scaled(&self, seg: usize) -> GaitAnnotation {
        let a = self.annotations[seg.min(self.annotations.len() - 1)];
        let k = self.speed_scale;
        let speed = a.local_speed.max(1e-3) * k;
        GaitAnnotation {
            facing: a.facing + self.config.facing_offset,
            step_frequency: a.step_frequency * k,
            local_speed: speed,
        }
    }

    /// Runs the pose network over the checkpoint's canned prefix, rotated so
    /// that its last heading matches the start of the spline.
    fn warm_up(&mut self) -> Result<()> {
        let pose = self.pose.clone();
        let Some(w) = pose.warmup.as_ref().filter(|w| w.frames() > 0 && w.controls.is_some()) else {
            return Ok(());
        };
        let frames = w.frames();
        let ctrl = |t: usize| -> [f64; 6] { w.control_row(t).expect("checked").try_into().expect("6 controls") };
        let last = ctrl(frames - 1);
        let yaw = heading(self.spline.tangent_at(0.0)) - heading([last[0], last[1]]);
        let qy = Quaternion::about_axis(1, yaw);
        let align = |c: [f64; 6]| -> [f64; 6] {
            let t = rotate2([c[0], c[1]], yaw);
            let f = rotate2([c[2], c[3]], yaw);
            [t[0], t[1], f[0], f[1], c[4], c[5]]
        };
        let mut heights = 0.0;
        for t in 0..frames {
            let mut q = w.quaternions(t);
            q[0] = qmul(qy, q[0]);
            let trans = w.translation_row(t).map(|r| [r[0], r[1]]);
            heights += trans.map_or(0.0, |r| r[0]);
            let next_ctrl = align(ctrl((t + 1).min(frames - 1)));
            if t + 1 < frames {
                let (_, _, st) = pose.pose_step(&self.state, &q, trans.filter(|_| pose.config.include_translations), Some(next_ctrl))?;
                self.state = st;
            } else {
                self.prev_rotations = q;
                if pose.config.include_translations {
                    self.prev_translations = trans;
                }
            }
        }
        self.default_height = heights / frames as f64;
        self.theta = last[5].atan2(last[4]).rem_euclid(2.0 * PI);
        Ok(())
    }

    pub fn spline(&self) -> &TrajectorySpline {
        &self.spline
    }

    pub fn arc_position(&self) -> f64 {
        self.arc
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn frames_emitted(&self) -> usize {
        self.frame
    }

    /// Scaled annotations of every segment.
    pub fn annotations(&self) -> Vec<GaitAnnotation> {
        (0..self.spline.len()).map(|i| self.scaled(i)).collect()
    }

    pub fn set_target_speed(&mut self, v: f64) -> Result<()> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("target speed {v} must be non-negative")));
        }
        self.config.target_speed = v;
        self.rescale();
        Ok(())
    }

    pub fn set_facing_offset(&mut self, a: f64) {
        self.config.facing_offset = a;
    }

    /// Appends points to the trajectory and refits the part ahead of the
    /// character. Fails if every point lies on the path already walked.
    pub fn extend_trajectory(&mut self, points: &[Vec2]) -> Result<()> {
        if points.is_empty() {
            return Ok(());
        }
        let tol = self.spline.segment_length;
        let behind = points.iter().all(|&p| {
            let (d, s) = self.spline.project(p);
            d <= tol && s <= self.arc
        });
        if behind {
            return Err(Error::PathBehindCharacter);
        }
        let mut all = self.points.clone();
        all.extend_from_slice(points);
        let spline = fit_spline(&all, self.config.segment_length)?;
        self.points = all;
        self.spline = spline;
        self.annotate()
    }

    /// Produces the next frame. At the end of the spline the session stays
    /// usable and returns `EndOfTrajectory` until it is extended.
    pub fn step(&mut self) -> Result<Frame> {
        let len = self.spline.total_length();
        if self.arc >= len - 1e-9 {
            return Err(Error::EndOfTrajectory);
        }
        let fr = self.config.frame_rate;
        let a = self.scaled(self.spline.segment_at(self.arc));
        let speed = if self.config.target_speed > 0.0 { a.local_speed } else { 0.0 };
        self.arc = (self.arc + speed / fr).min(len);
        self.theta += PI * a.step_frequency / fr;

        let a = self.scaled(self.spline.segment_at(self.arc));
        let tangent = self.spline.tangent_at(self.arc);
        let walk = WalkCycleSignal {
            a: if self.config.target_speed > 0.0 { a.local_speed } else { 0.0 },
            theta: self.theta,
        };
        let ctrl = ControlFeatures::new(tangent, a.facing, walk).to_array();
        let (rot, trans, state) = self.pose.pose_step(&self.state, &self.prev_rotations, self.prev_translations, Some(ctrl))?;
        self.state = state;

        let height = match trans {
            Some(t) => {
                if self.config.target_speed > 0.0 {
                    self.offset = t[1].clamp(-self.spline.segment_length, self.spline.segment_length);
                }
                t[0]
            }
            None => self.default_height,
        };
        let g = self.spline.point_at(self.arc + self.offset);
        let root = [g[0], height, g[1]];
        let mut positions = vec![[0.0; 3]; rot.len()];
        forward_kinematics_into(&self.pose.skeleton, &rot, root, &mut positions);
        self.prev_rotations = rot.clone();
        self.prev_translations = trans;
        self.frame += 1;
        Ok(Frame {
            index: self.frame - 1,
            t: self.frame as f64 / fr,
            theta: self.theta,
            arc: self.arc,
            root,
            rotations: rot,
            positions,
        })
    }

    /// Steps until the spline is exhausted.
    pub fn run_to_end(&mut self, max_frames: usize) -> Result<Vec<Frame>> {
        let mut out = Vec::new();
        while out.len() < max_frames {
            match self.step() {
                Ok(f) => out.push(f),
                Err(Error::EndOfTrajectory) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// Collects frames into a clip.
pub fn frames_to_clip(frames: &[Frame], joints: usize, frame_rate: f64) -> MotionClip {
    let mut clip = MotionClip::new(frame_rate, joints).with_tags("generated", "walk");
    for f in frames {
        clip.push_frame(f.root, &f.rotations);
    }
    clip
}
