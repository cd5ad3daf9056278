//! Joint hierarchies, BVH I/O and forward kinematics in quaternion space.

mod bvh;
mod fk;
mod mirror;
mod prune;

pub use bvh::{parse_bvh, write_bvh};
pub use fk::{batched_forward_kinematics, forward_kinematics, forward_kinematics_into, world_transforms};
pub use mirror::{mirror_clip, MirrorPlane};
pub use prune::{prune_constant_joints, PruneOutcome};

use crate::error::{Error, Result};
use crate::quat::{norm3, EulerOrder, Quaternion, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct JointDef {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub euler_order: EulerOrder,
    pub mirror_partner: Option<usize>,
    /// Leaf created from a BVH `End Site`; carries no rotation channels.
    pub end_site: bool,
}

impl JointDef {
    pub fn new(name: impl Into<String>, parent: Option<usize>, offset: Vec3) -> Self {
        Self {
            name: name.into(),
            parent,
            offset,
            euler_order: EulerOrder::default(),
            mirror_partner: None,
            end_site: false,
        }
    }

    pub fn end_site(mut self) -> Self {
        self.end_site = true;
        self
    }

    pub fn with_order(mut self, order: EulerOrder) -> Self {
        self.euler_order = order;
        self
    }
}

/// Topologically sorted joint hierarchy with constant bone offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joints: Vec<JointDef>,
    /// Uniform factor applied to every offset (unit conversion).
    scale: f64,
}

impl Skeleton {
    pub fn new(joints: Vec<JointDef>) -> Result<Self> {
        let skel = Self { joints, scale: 1.0 };
        skel.validate()?;
        Ok(skel)
    }

    fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::ShapeMismatch("skeleton has no joints".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(Error::ShapeMismatch("joint 0 must be the root".into())),
                (_, None) => {
                    return Err(Error::ShapeMismatch(format!(
                        "joint `{}` is a second root",
                        j.name
                    )))
                }
                (_, Some(p)) if p >= i => {
                    return Err(Error::ShapeMismatch(format!(
                        "joint `{}` precedes its parent",
                        j.name
                    )))
                }
                _ => {}
            }
            if let Some(m) = j.mirror_partner {
                if m >= self.joints.len() || self.joints[m].mirror_partner != Some(i) {
                    return Err(Error::ShapeMismatch(format!(
                        "mirror map of `{}` is not symmetric",
                        j.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[JointDef] {
        &self.joints
    }

    pub fn joint(&self, i: usize) -> &JointDef {
        &self.joints[i]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn set_scale(&mut self, scale: f64) {
        self.scale = scale;
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.joints[i].parent
    }

    /// Offset of joint `i` in its parent frame, with the skeleton scale applied.
    pub fn offset(&self, i: usize) -> Vec3 {
        let o = self.joints[i].offset;
        [o[0] * self.scale, o[1] * self.scale, o[2] * self.scale]
    }

    pub fn bone_length(&self, i: usize) -> f64 {
        norm3(self.offset(i))
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.joints[c].parent == Some(i)).collect()
    }

    pub fn has_children(&self, i: usize) -> bool {
        self.joints.iter().any(|j| j.parent == Some(i))
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.joints
            .iter()
            .position(|j| j.name == name)
            .ok_or_else(|| Error::UnknownJoint(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.joints.iter().map(|j| j.name.as_str()).collect()
    }

    pub fn set_mirror_pair(&mut self, a: usize, b: usize) {
        self.joints[a].mirror_partner = Some(b);
        self.joints[b].mirror_partner = Some(a);
    }

    pub fn set_euler_order(&mut self, joint: usize, order: EulerOrder) {
        self.joints[joint].euler_order = order;
    }

    /// Pairs joints whose names differ only by a `Left`/`Right` (or `L`/`R`
    /// prefix) marker. Joints without a side marker are treated as midline.
    pub fn infer_mirror_map(&mut self) -> Result<()> {
        for i in 0..self.len() {
            let name = self.joints[i].name.clone();
            let Some(side) = side_of(&name) else { continue };
            let partner_name = swap_side(&name, side);
            match self.joints.iter().position(|j| j.name == partner_name) {
                Some(p) => self.set_mirror_pair(i, p),
                None => return Err(Error::MissingMirrorMap(name)),
            }
        }
        Ok(())
    }

    /// Every joint either has a partner or lies on the midline.
    pub fn check_mirror_map(&self) -> Result<()> {
        for j in &self.joints {
            if j.mirror_partner.is_none() && side_of(&j.name).is_some() {
                return Err(Error::MissingMirrorMap(j.name.clone()));
            }
        }
        Ok(())
    }

    /// Applies a line-oriented override file:
    /// `mirror <jointA> <jointB>` and `euler_order <joint> <order>`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["mirror", a, b] => {
                    let (a, b) = (self.index_of(a)?, self.index_of(b)?);
                    self.set_mirror_pair(a, b);
                }
                ["euler_order", j, order] => {
                    let j = self.index_of(j)?;
                    self.joints[j].euler_order = order.parse()?;
                }
                _ => return Err(Error::parse(n + 1, format!("unrecognised override `{line}`"))),
            }
        }
        Ok(())
    }

    pub(crate) fn from_parts(joints: Vec<JointDef>, scale: f64) -> Result<Self> {
        let skel = Self { joints, scale };
        skel.validate()?;
        Ok(skel)
    }

    pub fn identity_rotations(&self) -> Vec<Quaternion> {
        vec![Quaternion::IDENTITY; self.len()]
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

fn side_of(name: &str) -> Option<Side> {
    let lower = name.to_ascii_lowercase();
    if lower.starts_with("left") {
        Some(Side::Left)
    } else if lower.starts_with("right") {
        Some(Side::Right)
    } else if name.len() > 1 && name.starts_with('L') && name[1..].starts_with(char::is_uppercase) {
        Some(Side::Left)
    } else if name.len() > 1 && name.starts_with('R') && name[1..].starts_with(char::is_uppercase) {
        Some(Side::Right)
    } else {
        None
    }
}

fn swap_side(name: &str, side: Side) -> String {
    let lower = name.to_ascii_lowercase();
    let (from_len, to) = match side {
        Side::Left if lower.starts_with("left") => (4, "Right"),
        Side::Right if lower.starts_with("right") => (5, "Left"),
        Side::Left => (1, "R"),
        Side::Right => (1, "L"),
    };
    let to = if name.starts_with(|c: char| c.is_lowercase()) {
        to.to_ascii_lowercase()
    } else {
        to.to_string()
    };
    format!("{to}{}", &name[from_len..])
}

/// A skeleton plus one set of local rotations and a root position.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub root_position: Vec3,
    pub rotations: Vec<Quaternion>,
}

impl Pose {
    pub fn identity(skeleton: &Skeleton) -> Self {
        Self {
            root_position: [0.0; 3],
            rotations: skeleton.identity_rotations(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn chain3() -> Skeleton {
        Skeleton::new(vec![
            JointDef::new("root", None, [0.0, 0.0, 0.0]),
            JointDef::new("a", Some(0), [0.0, 1.0, 0.0]),
            JointDef::new("b", Some(1), [0.0, 1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_bad_topology() {
        let two_roots = vec![
            JointDef::new("r", None, [0.0; 3]),
            JointDef::new("s", None, [0.0; 3]),
        ];
        assert!(Skeleton::new(two_roots).is_err());
        let unsorted = vec![
            JointDef::new("r", None, [0.0; 3]),
            JointDef::new("a", Some(2), [0.0; 3]),
            JointDef::new("b", Some(0), [0.0; 3]),
        ];
        assert!(Skeleton::new(unsorted).is_err());
    }

    #[test]
    fn mirror_inference_and_overrides() {
        let mut s = Skeleton::new(vec![
            JointDef::new("Hips", None, [0.0; 3]),
            JointDef::new("LeftUpLeg", Some(0), [0.1, 0.0, 0.0]),
            JointDef::new("RightUpLeg", Some(0), [-0.1, 0.0, 0.0]),
            JointDef::new("LHand", Some(0), [0.3, 0.0, 0.0]),
            JointDef::new("RHand", Some(0), [-0.3, 0.0, 0.0]),
        ])
        .unwrap();
        s.infer_mirror_map().unwrap();
        assert_eq!(s.joint(1).mirror_partner, Some(2));
        assert_eq!(s.joint(3).mirror_partner, Some(4));
        assert_eq!(s.joint(0).mirror_partner, None);
        s.apply_overrides("# comment\neuler_order Hips XYZ\nmirror LHand RHand\n").unwrap();
        assert_eq!(s.joint(0).euler_order, EulerOrder::Xyz);
        assert!(s.apply_overrides("mirror Nope RHand").is_err());

        let mut lonely = Skeleton::new(vec![
            JointDef::new("Hips", None, [0.0; 3]),
            JointDef::new("LeftFoot", Some(0), [0.1, 0.0, 0.0]),
        ])
        .unwrap();
        assert!(matches!(lonely.infer_mirror_map(), Err(Error::MissingMirrorMap(_))));
    }
}
