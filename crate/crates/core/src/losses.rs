//! Training and evaluation objectives.
//!
//! Each objective has a plain evaluation here and a differentiable
//! counterpart on [`Graph`](crate::nn::Graph).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gait::GaitAnnotation;
use crate::nn::{Graph, Var};
use crate::quat::{norm3, periodic_abs_diff, quat_to_euler, sub3, EulerOrder, Quaternion, Vec3};
use crate::skeleton::{forward_kinematics_into, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the quaternion norm penalty.
    pub lambda: f64,
    pub euler_order: EulerOrder,
    /// Use squared distances in the positional loss (ablation only).
    pub squared: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            euler_order: EulerOrder::Zyx,
            squared: false,
        }
    }
}

impl LossConfig {
    /// Logs a warning when λ leaves `[0.001, 0.1]`.
    pub fn check(&self) {
        if !(0.001..=0.1).contains(&self.lambda) {
            log::warn!("norm penalty weight {} outside [0.001, 0.1]", self.lambda);
        }
    }
}

/// Mean Euclidean distance between corresponding points.
pub fn mean_joint_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    assert_eq!(a.len(), b.len(), "point counts differ");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(p, q)| norm3(sub3(*p, *q))).sum::<f64>() / a.len() as f64
}

/// Mean over frames and joints of `‖FK(pred) − target‖`.
///
/// `rotations` is `frames × joints`, `roots` one per frame and `targets`
/// `frames × joints` world positions.
pub fn positional_loss(skeleton: &Skeleton, rotations: &[Quaternion], roots: &[Vec3], targets: &[Vec3]) -> f64 {
    let j = skeleton.len();
    assert_eq!(rotations.len(), roots.len() * j, "rotation count");
    assert_eq!(targets.len(), rotations.len(), "target count");
    let mut pos = vec![[0.0; 3]; j];
    let mut sum = 0.0;
    for (f, root) in roots.iter().enumerate() {
        forward_kinematics_into(skeleton, &rotations[f * j..(f + 1) * j], *root, &mut pos);
        for k in 0..j {
            sum += norm3(sub3(pos[k], targets[f * j + k]));
        }
    }
    if roots.is_empty() {
        0.0
    } else {
        sum / rotations.len() as f64
    }
}

/// Mean over quaternions of `λ(|q|² − 1)²`.
pub fn quat_norm_penalty(raw: &[Quaternion], lambda: f64) -> f64 {
    if raw.is_empty() {
        return 0.0;
    }
    raw.iter().map(|q| lambda * (q.norm_squared() - 1.0).powi(2)).sum::<f64>() / raw.len() as f64
}

/// Mean L1 Euler error taking the best match modulo 2π. `orders` is cycled
/// over the quaternions, so pass one order per joint.
pub fn euler_angle_loss(pred: &[Quaternion], target: &[Vec3], orders: &[EulerOrder]) -> f64 {
    assert_eq!(pred.len(), target.len(), "angle counts differ");
    if pred.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, (q, t)) in pred.iter().zip(target).enumerate() {
        let e = quat_to_euler(*q, orders[i % orders.len()]);
        sum += (0..3).map(|k| periodic_abs_diff(e[k] - t[k])).sum::<f64>();
    }
    sum / (3 * pred.len()) as f64
}

/// Differentiable positional loss: FK of `rot` (`B×4J`) at `root` (`B×3`)
/// against `target` (`B×3J`).
pub fn positional_loss_node(g: &mut Graph, skeleton: &Arc<Skeleton>, rot: Var, root: Var, target: Var, squared: bool) -> Var {
    let pos = g.forward_kinematics(skeleton, rot, root);
    g.mean_distance(pos, target, squared)
}

/// Differentiable Euler loss of `q` (`B×4J`) against `target` (`B×3J`).
pub fn euler_loss_node(g: &mut Graph, q: Var, orders: &Arc<[EulerOrder]>, target: Var) -> Var {
    let e = g.quat_to_euler(q, orders);
    g.wrapped_l1(e, target)
}

/// Settings of the short-term angle metric.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Horizons in frames (1-based).
    pub horizons: Vec<usize>,
    /// Joints left out of the metric; the root by default.
    pub excluded_joints: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizons: SHORT_TERM_HORIZONS.to_vec(),
            excluded_joints: vec![0],
        }
    }
}

/// Frames at 25 Hz for 80, 160, 320 and 400 ms.
pub const SHORT_TERM_HORIZONS: [usize; 4] = [2, 4, 8, 10];
pub const SHORT_TERM_MS: [usize; 4] = [80, 160, 320, 400];

/// L2 norm of the wrapped per-component Euler difference over all
/// non-excluded joints of one frame.
pub fn frame_angle_error(pred: &[Vec3], target: &[Vec3], excluded: &[usize]) -> f64 {
    let mut s = 0.0;
    for (j, (p, t)) in pred.iter().zip(target).enumerate() {
        if excluded.contains(&j) {
            continue;
        }
        for k in 0..3 {
            s += periodic_abs_diff(p[k] - t[k]).powi(2);
        }
    }
    s.sqrt()
}

/// Per-horizon angle error averaged over sequences.
///
/// `preds[s]` holds `frames × joints` predicted quaternions of sequence `s`
/// and `targets[s]` the reference Euler angles in the same layout.
pub fn evaluation_angle_error(
    preds: &[Vec<Quaternion>],
    targets: &[Vec<Vec3>],
    orders: &[EulerOrder],
    config: &EvalConfig,
) -> Result<Vec<f64>> {
    let j = orders.len();
    let mut out = vec![0.0; config.horizons.len()];
    for (pred, target) in preds.iter().zip(targets) {
        let frames = pred.len() / j;
        for (hi, &h) in config.horizons.iter().enumerate() {
            if h == 0 || h > frames || h * j > target.len() {
                return Err(Error::HorizonExceedsPrediction {
                    horizon: h,
                    available: frames.min(target.len() / j),
                });
            }
            let f = h - 1;
            let e: Vec<Vec3> = (0..j).map(|k| quat_to_euler(pred[f * j + k], orders[k])).collect();
            out[hi] += frame_angle_error(&e, &target[f * j..(f + 1) * j], &config.excluded_joints);
        }
    }
    if !preds.is_empty() {
        out.iter_mut().for_each(|v| *v /= preds.len() as f64);
    }
    Ok(out)
}

/// Mean absolute error over segments and the three gait features, the
/// facing direction compared modulo 2π.
pub fn gait_feature_mae(pred: &[GaitAnnotation], target: &[GaitAnnotation]) -> f64 {
    assert_eq!(pred.len(), target.len(), "segment counts differ");
    if pred.is_empty() {
        return 0.0;
    }
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            periodic_abs_diff(p.facing - t.facing)
                + (p.step_frequency - t.step_frequency).abs()
                + (p.local_speed - t.local_speed).abs()
        })
        .sum();
    s / (3 * pred.len()) as f64
}
