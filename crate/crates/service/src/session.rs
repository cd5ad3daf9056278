use std::f64::consts::TAU;

use qmotion::generate::{GenerationConfig, GenerationSession};
use qmotion::gait::PaceMode;
use qmotion::Error;

use crate::protocol::{ClientMessage, JointInfo, ServerMessage};
use crate::registry::Registry;

/// Default path when `open` carries no trajectory: ten units straight ahead.
pub const DEFAULT_PATH: [[f64; 2]; 2] = [[0.0, 0.0], [0.0, 10.0]];

pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::UnknownCheckpoint(_) => "UnknownCheckpoint",
        Error::PathBehindCharacter => "PathBehindCharacter",
        Error::EndOfTrajectory => "EndOfTrajectory",
        Error::DegeneratePath(_) => "DegeneratePath",
        Error::IncompatibleSkeleton(_) => "IncompatibleSkeleton",
        Error::Config(_) | Error::ConfigMismatch(_) => "BadRequest",
        _ => "Internal",
    }
}

fn err(e: Error) -> ServerMessage {
    ServerMessage::error(error_code(&e), e.to_string())
}

/// Message handling for one connection, which owns at most one session.
pub struct Connection<'a> {
    registry: &'a Registry,
    frame_rate: f64,
    id: u64,
    pub session: Option<GenerationSession>,
}

impl<'a> Connection<'a> {
    pub fn new(registry: &'a Registry, frame_rate: f64, id: u64) -> Self {
        Self {
            registry,
            frame_rate,
            id,
            session: None,
        }
    }

    fn path(&self) -> Vec<[f64; 2]> {
        self.session.as_ref().map(|s| s.spline().nodes()).unwrap_or_default()
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Open {
                pose,
                pace,
                trajectory,
                speed,
                mode,
            } => match self.open(&pose, pace.as_deref(), trajectory, speed, mode.as_deref()) {
                Ok(m) => vec![m],
                Err(e) => vec![err(e)],
            },
            ClientMessage::Controls {
                extend,
                speed,
                facing_offset,
            } => {
                let Some(s) = self.session.as_mut() else {
                    return vec![ServerMessage::error("NoSession", "send `open` first")];
                };
                if let Some(pts) = extend {
                    if let Err(e) = s.extend_trajectory(&pts) {
                        return vec![err(e)];
                    }
                }
                if let Some(v) = speed {
                    if let Err(e) = s.set_target_speed(v) {
                        return vec![err(e)];
                    }
                }
                if let Some(a) = facing_offset {
                    s.set_facing_offset(a);
                }
                vec![ServerMessage::Ack { path: self.path() }]
            }
            ClientMessage::Step { count } => {
                let Some(s) = self.session.as_mut() else {
                    return vec![ServerMessage::error("NoSession", "send `open` first")];
                };
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    match s.step() {
                        Ok(f) => out.push(ServerMessage::Frame {
                            index: f.index,
                            t: f.t,
                            theta: f.theta.rem_euclid(TAU),
                            root: f.root,
                            quats: f.rotations.iter().map(|q| q.to_array()).collect(),
                            positions: f.positions,
                        }),
                        Err(e) => {
                            out.push(err(e));
                            break;
                        }
                    }
                }
                out
            }
            ClientMessage::Close => {
                self.session = None;
                Vec::new()
            }
        }
    }

    fn open(
        &mut self,
        pose: &str,
        pace: Option<&str>,
        trajectory: Option<Vec<[f64; 2]>>,
        speed: Option<f64>,
        mode: Option<&str>,
    ) -> qmotion::Result<ServerMessage> {
        let net = self
            .registry
            .pose
            .get(pose)
            .ok_or_else(|| Error::UnknownCheckpoint(pose.to_string()))?
            .clone();
        let (pace, seg) = match pace {
            Some(id) => {
                let (p, seg) = self
                    .registry
                    .pace
                    .get(id)
                    .ok_or_else(|| Error::UnknownCheckpoint(id.to_string()))?;
                (Some(p.clone()), *seg)
            }
            None => (None, None),
        };
        let defaults = GenerationConfig::default();
        let config = GenerationConfig {
            target_speed: speed.unwrap_or(defaults.target_speed),
            pace_mode: mode.map(str::parse::<PaceMode>).transpose()?.unwrap_or_default(),
            segment_length: seg.unwrap_or(defaults.segment_length),
            frame_rate: self.frame_rate,
            facing_offset: 0.0,
        };
        let points = trajectory.unwrap_or_else(|| DEFAULT_PATH.to_vec());
        let session = GenerationSession::new(net.clone(), pace, &points, config)?;
        let joints = net
            .skeleton
            .joints()
            .iter()
            .enumerate()
            .map(|(i, j)| JointInfo {
                name: j.name.clone(),
                parent: j.parent,
                offset: net.skeleton.offset(i),
            })
            .collect();
        self.session = Some(session);
        Ok(ServerMessage::Skeleton {
            session: self.id,
            frame_rate: self.frame_rate,
            joints,
            path: self.path(),
        })
    }
}
