use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quaternion (norm {norm:e})")]
    DegenerateQuaternion { norm: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported channel `{0}`")]
    UnsupportedChannel(String),

    #[error("inconsistent row width at line {line}: expected {expected}, found {found}")]
    InconsistentWidth {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("prefix too short: need {needed} frames, got {got}")]
    PrefixTooShort { needed: usize, got: usize },

    #[error("horizon {horizon} exceeds prediction length {available}")]
    HorizonExceedsPrediction { horizon: usize, available: usize },

    #[error("joint `{0}` has no mirror partner")]
    MissingMirrorMap(String),

    #[error("unknown joint `{0}`")]
    UnknownJoint(String),

    #[error("insufficient foot contacts: {0}")]
    InsufficientContacts(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("missing data: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingData(Vec<PathBuf>),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("unknown checkpoint `{0}`")]
    UnknownCheckpoint(String),

    #[error("incompatible skeleton: {0}")]
    IncompatibleSkeleton(String),

    #[error("trajectory edit lies entirely behind the character")]
    PathBehindCharacter,

    #[error("end of trajectory")]
    EndOfTrajectory,

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
