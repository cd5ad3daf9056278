//! Quaternion-based human motion modelling.
//!
//! The crate is organised bottom-up:
//!
//! * [`quat`] quaternion algebra and rotation conversions,
//! * [`skeleton`] joint hierarchies, BVH I/O and forward kinematics,
//! * [`nn`] a small reverse-mode tape with GRU/dense layers and Adam,
//! * [`losses`] positional, norm-penalty, Euler and gait objectives,
//! * [`posenet`] the recurrent pose network and its training loop,
//! * [`gait`] trajectory splines, gait features and the pace network,
//! * [`dataset`] ingestion, augmentation and synthetic corpora,
//! * [`generate`] online locomotion generation sessions.

pub mod error;
pub mod quat;

pub use error::{Error, Result};
pub use quat::{EulerOrder, Quaternion, Vec3};
pub mod dataset;
pub mod nn;
pub mod gait;
pub mod generate;
pub mod losses;
pub mod posenet;
pub mod skeleton;

pub use dataset::MotionClip;
pub use skeleton::{Pose, Skeleton};
