//! JSON messages exchanged over the websocket, tagged by `type`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Open {
        pose: String,
        #[serde(default)]
        pace: Option<String>,
        /// Initial ground-plane polyline as `[x, z]` pairs.
        #[serde(default)]
        trajectory: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        speed: Option<f64>,
        /// `delayed`, `delayed:N` or `bidirectional`.
        #[serde(default)]
        mode: Option<String>,
    },
    Controls {
        #[serde(default)]
        extend: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        speed: Option<f64>,
        #[serde(default)]
        facing_offset: Option<f64>,
    },
    Step {
        #[serde(default = "one")]
        count: usize,
    },
    Close,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointInfo {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Skeleton {
        session: u64,
        frame_rate: f64,
        joints: Vec<JointInfo>,
        /// Fitted spline nodes.
        path: Vec<[f64; 2]>,
    },
    Frame {
        index: usize,
        t: f64,
        /// Walk-cycle phase modulo 2π.
        theta: f64,
        root: [f64; 3],
        quats: Vec<[f64; 4]>,
        positions: Vec<[f64; 3]>,
    },
    Ack {
        path: Vec<[f64; 2]>,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }
}
