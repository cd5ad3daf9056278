use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use qmotion::gait::PaceNet;
use qmotion::nn::Checkpoint;
use qmotion::posenet::PoseNet;
use qmotion::{Error, Result};

/// Frozen checkpoints shared by every session, keyed by file stem.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    pub pose: BTreeMap<String, Arc<PoseNet>>,
    pub pace: BTreeMap<String, (Arc<PaceNet>, Option<f64>)>,
}

impl Registry {
    /// Loads every `*.ckpt` file of `dir`; the header `kind` decides the
    /// network type.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut reg = Registry::default();
        let entries = fs::read_dir(dir).map_err(|_| Error::MissingData(vec![dir.to_path_buf()]))?;
        let mut paths: Vec<_> = entries.flatten().map(|e| e.path()).collect();
        paths.sort();
        for p in paths {
            if p.extension().and_then(|e| e.to_str()) != Some("ckpt") {
                continue;
            }
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let c = Checkpoint::load(&p)?;
            match c.get("kind") {
                Some("pose") => {
                    reg.pose.insert(id, Arc::new(PoseNet::from_checkpoint(&c)?));
                }
                Some("pace") => {
                    let seg = c.get("segment_length").and_then(|v| v.parse().ok());
                    reg.pace.insert(id, (Arc::new(PaceNet::from_checkpoint(&c)?), seg));
                }
                other => log::warn!("skipping {}: unknown checkpoint kind {other:?}", p.display()),
            }
        }
        log::info!("loaded {} pose and {} pace checkpoints", reg.pose.len(), reg.pace.len());
        Ok(reg)
    }
}
