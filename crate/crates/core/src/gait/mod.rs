//! Trajectory splines, gait features and the pace network.

mod features;
mod pace;
mod spline;

pub use features::{
    build_phase_signal, compute_gait_features, decompose_speed, detect_foot_contacts, extract_root_trajectory,
    forward_direction, moving_average, step_frequency, ClipGait, Foot, FootContacts, FrameFeatures, GaitConfig,
    RootTrajectory, SpeedDecomposition,
};
pub use pace::{train_pace_net, PaceConfig, PaceMode, PaceNet, PaceSample, PaceStream, PaceTrainConfig};
pub use spline::{
    dist2, fit_spline, from_heading, heading, parse_trajectory, polyline_length, turn_angle, write_trajectory, Segment,
    TrajectorySpline, Vec2,
};

/// Gait parameters of one spline segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaitAnnotation {
    /// Facing direction relative to the spline tangent, radians.
    pub facing: f64,
    /// Footsteps per second.
    pub step_frequency: f64,
    /// Low-pass speed along the spline, units per second.
    pub local_speed: f64,
}

/// `A [cos θ, sin θ]`; θ = 0 is a left foot contact and π a right one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkCycleSignal {
    pub a: f64,
    pub theta: f64,
}

impl WalkCycleSignal {
    pub fn emit(&self) -> [f64; 2] {
        [self.a * self.theta.cos(), self.a * self.theta.sin()]
    }
}

/// Pose-network control inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlFeatures {
    pub spline_tangent: Vec2,
    /// Facing direction in world space.
    pub facing: Vec2,
    pub walk_cycle: [f64; 2],
}

impl ControlFeatures {
    pub const SIZE: usize = 6;

    /// `facing` is relative to `tangent`.
    pub fn new(tangent: Vec2, facing: f64, walk: WalkCycleSignal) -> Self {
        Self {
            spline_tangent: tangent,
            facing: from_heading(heading(tangent) + facing),
            walk_cycle: walk.emit(),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (t, f, w) = (self.spline_tangent, self.facing, self.walk_cycle);
        [t[0], t[1], f[0], f[1], w[0], w[1]]
    }
}

/// Pose-network translation outputs, fed back at the next step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TranslationFeatures {
    pub root_height: f64,
    pub spline_offset: f64,
}

impl TranslationFeatures {
    pub const SIZE: usize = 2;

    pub fn to_array(&self) -> [f64; 2] {
        [self.root_height, self.spline_offset]
    }
}
