//! `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use qmotion::losses::LossConfig;
use qmotion::nn::OptimizerConfig;
use qmotion::posenet::{PoseNetConfig, PoseTrainConfig, ScheduledSamplingState};
use qmotion::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim().to_string();
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Fails on any key outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

pub const POSE_KEYS: &[&str] = &[
    "mode",
    "hidden",
    "layers",
    "n",
    "k",
    "include_controls",
    "include_translations",
    "control_units",
    "epochs",
    "batch_size",
    "learning_rate",
    "lr_decay",
    "grad_clip",
    "loss",
    "lambda",
    "squared",
    "sampling_beta",
    "teacher_forcing",
    "translation_weight",
    "seed",
];

pub fn pose_net_config(c: &ConfigFile, joints: usize) -> Result<PoseNetConfig> {
    let d = PoseNetConfig::new(joints);
    let cfg = PoseNetConfig {
        mode: c.get_or("mode", d.mode)?,
        joints,
        hidden: c.get_or("hidden", d.hidden)?,
        layers: c.get_or("layers", d.layers)?,
        include_controls: c.get_or("include_controls", d.include_controls)?,
        include_translations: c.get_or("include_translations", d.include_translations)?,
        n: c.get_or("n", d.n)?,
        k: c.get_or("k", d.k)?,
        control_units: c.get_or("control_units", d.control_units)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn pose_train_config(c: &ConfigFile) -> Result<PoseTrainConfig> {
    let d = PoseTrainConfig::default();
    let od = OptimizerConfig::default();
    let ld = LossConfig::default();
    let sampling = if c.get_or("teacher_forcing", false)? {
        ScheduledSamplingState::pinned(1.0)
    } else {
        ScheduledSamplingState::new(c.get_or("sampling_beta", d.sampling.beta)?)
    };
    Ok(PoseTrainConfig {
        epochs: c.get_or("epochs", d.epochs)?,
        batch_size: c.get_or("batch_size", d.batch_size)?,
        optimizer: OptimizerConfig {
            learning_rate: c.get_or("learning_rate", od.learning_rate)?,
            lr_decay: c.get_or("lr_decay", od.lr_decay)?,
            grad_clip_norm: c.get_or("grad_clip", od.grad_clip_norm)?,
            ..od
        },
        loss: c.get_or("loss", d.loss)?,
        loss_config: LossConfig {
            lambda: c.get_or("lambda", ld.lambda)?,
            squared: c.get_or("squared", ld.squared)?,
            ..ld
        },
        sampling,
        translation_weight: c.get_or("translation_weight", d.translation_weight)?,
        seed: c.get_or("seed", d.seed)?,
    })
}
