use crate::error::{Error, Result};
use crate::quat::{fix_antipodal_flat, Quaternion, Vec3};

/// A fixed-rate sequence of root translations and local joint rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub frame_rate: f64,
    pub joints: usize,
    pub root_positions: Vec<Vec3>,
    /// Row-major `[frame][joint]`.
    pub rotations: Vec<Quaternion>,
    pub subject: String,
    pub action: String,
}

impl MotionClip {
    pub fn new(frame_rate: f64, joints: usize) -> Self {
        Self {
            frame_rate,
            joints,
            root_positions: Vec::new(),
            rotations: Vec::new(),
            subject: String::new(),
            action: String::new(),
        }
    }

    pub fn with_tags(mut self, subject: impl Into<String>, action: impl Into<String>) -> Self {
        self.subject = subject.into();
        self.action = action.into();
        self
    }

    pub fn frames(&self) -> usize {
        self.root_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root_positions.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[Quaternion] {
        &self.rotations[t * self.joints..(t + 1) * self.joints]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Quaternion] {
        let j = self.joints;
        &mut self.rotations[t * j..(t + 1) * j]
    }

    pub fn push_frame(&mut self, root: Vec3, rotations: &[Quaternion]) {
        debug_assert_eq!(rotations.len(), self.joints);
        self.root_positions.push(root);
        self.rotations.extend_from_slice(rotations);
    }

    /// Rotation time series of a single joint.
    pub fn joint_track(&self, joint: usize) -> Vec<Quaternion> {
        (0..self.frames())
            .map(|t| self.rotations[t * self.joints + joint])
            .collect()
    }

    pub fn fix_antipodal(&mut self) {
        let mut flat: Vec<f64> = self.rotations.iter().flat_map(|q| q.to_array()).collect();
        fix_antipodal_flat(&mut flat, self.joints);
        for (q, c) in self.rotations.iter_mut().zip(flat.chunks_exact(4)) {
            *q = Quaternion::from_slice(c);
        }
    }

    /// Frames `[start, end)` as a new clip.
    pub fn slice(&self, start: usize, end: usize) -> MotionClip {
        let mut out = MotionClip::new(self.frame_rate, self.joints).with_tags(&self.subject, &self.action);
        out.root_positions = self.root_positions[start..end].to_vec();
        out.rotations = self.rotations[start * self.joints..end * self.joints].to_vec();
        out
    }

    /// Checks the ingestion invariants: finite values, unit quaternions and
    /// antipodal continuity along every joint track.
    pub fn validate(&self, unit_tol: f64) -> Result<()> {
        if self.rotations.len() != self.frames() * self.joints {
            return Err(Error::ShapeMismatch(format!(
                "{} rotations for {} frames of {} joints",
                self.rotations.len(),
                self.frames(),
                self.joints
            )));
        }
        for (t, p) in self.root_positions.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss(format!("root position at frame {t}")));
            }
        }
        for t in 0..self.frames() {
            for j in 0..self.joints {
                let q = self.rotations[t * self.joints + j];
                if !q.is_unit(unit_tol) {
                    return Err(Error::DegenerateQuaternion { norm: q.norm() });
                }
                if t > 0 {
                    let p = self.rotations[(t - 1) * self.joints + j];
                    if q.dot(p) < 0.0 {
                        return Err(Error::ShapeMismatch(format!(
                            "antipodal discontinuity at frame {t}, joint {j}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
