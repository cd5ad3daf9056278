use std::fs::OpenOptions;
use std::io::BufWriter;
use std::sync::Arc;

use qmotion::dataset::MotionClip;
use qmotion::gait::{compute_gait_features, train_pace_net, GaitConfig, PaceConfig, PaceNet, PaceSample, PaceTrainConfig};
use qmotion::nn::{Checkpoint, OptimizerConfig};
use qmotion::posenet::{EpochMetrics, PoseNet, PoseNetConfig, PoseSequence, PoseTrainer};
use qmotion::{Error, Result, Skeleton};

use super::{csv_err, csv_writer, load_data, sibling};
use crate::config::{pose_net_config, pose_train_config, ConfigFile, POSE_KEYS};
use crate::{TrainPaceArgs, TrainPoseArgs};

/// Network-layout sequences; the locomotion blocks are added when the
/// network takes controls or translations. Clips without usable gait
/// features are skipped.
pub fn pose_sequences(skel: &Skeleton, clips: &[MotionClip], cfg: &PoseNetConfig) -> Result<Vec<PoseSequence>> {
    if !(cfg.include_controls || cfg.include_translations) {
        return Ok(clips.iter().map(|c| PoseSequence::from_clip(skel, c)).collect());
    }
    let gait = GaitConfig::default();
    let mut out = Vec::new();
    for c in clips {
        match PoseSequence::locomotion(skel, c, &gait) {
            Ok(s) => out.push(s),
            Err(e) => log::warn!("skipping clip {}/{}: {e}", c.subject, c.action),
        }
    }
    if out.is_empty() && !clips.is_empty() {
        return Err(Error::InsufficientContacts("no clip yields gait features".into()));
    }
    Ok(out)
}

pub fn checkpoint_or_missing(path: &std::path::Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::MissingCheckpoint(path.display().to_string()));
    }
    Checkpoint::load(path)
}

const METRIC_HEADER: [&str; 7] = ["epoch", "loss", "p", "lr", "grad_norm_mean", "grad_norm_max", "norm_deviation"];

fn metric_row(m: &EpochMetrics) -> Vec<String> {
    let n = m.grad_norms.len().max(1) as f64;
    let mean = m.grad_norms.iter().sum::<f64>() / n;
    let max = m.grad_norms.iter().copied().fold(0.0, f64::max);
    [m.epoch as f64, m.loss, m.p, m.lr, mean, max, m.norm_deviation]
        .iter()
        .map(|v| v.to_string())
        .collect()
}

pub fn run_pose(args: &TrainPoseArgs) -> Result<()> {
    let loaded = load_data(&args.data)?;
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    file.check_keys(POSE_KEYS)?;
    if let Some(s) = args.seed {
        file.set("seed", s);
    }
    if let Some(e) = args.epochs {
        file.set("epochs", e);
    }
    let ds = &loaded.dataset;
    let skel = Arc::new(ds.skeleton.clone());
    let tcfg = pose_train_config(&file)?;
    let epochs = tcfg.epochs;
    let mut trainer = match &args.resume {
        Some(p) => PoseTrainer::from_checkpoint(&checkpoint_or_missing(p)?, epochs)?,
        None => {
            let cfg = pose_net_config(&file, skel.len())?;
            PoseTrainer::new(PoseNet::new(cfg, skel.clone(), tcfg.seed)?, tcfg)?
        }
    };
    if trainer.net.skeleton.names() != skel.names() {
        return Err(Error::IncompatibleSkeleton("checkpoint and data skeletons differ".into()));
    }
    let ncfg = trainer.net.config.clone();
    let data = pose_sequences(&skel, &ds.train, &ncfg)?;
    let warm_source = pose_sequences(&skel, &ds.test, &ncfg)?
        .into_iter()
        .chain(data.iter().cloned())
        .find(|s| s.frames() >= ncfg.n);
    trainer.net.warmup = warm_source.map(|s| s.prefix(ncfg.n));

    let metrics = args.metrics.clone().unwrap_or_else(|| sibling(&args.out, "metrics.csv"));
    let append = args.resume.is_some() && metrics.is_file();
    let mut w = if append {
        let f = OpenOptions::new().append(true).open(&metrics)?;
        csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(f))
    } else {
        let mut w = csv_writer(&metrics)?;
        w.write_record(METRIC_HEADER).map_err(csv_err)?;
        w
    };
    let remaining = epochs.saturating_sub(trainer.epoch);
    println!("training {} sequences for {remaining} epochs ({} done)", data.len(), trainer.epoch);
    for _ in 0..remaining {
        let m = trainer.run_epoch(&data)?;
        w.write_record(metric_row(&m)).map_err(csv_err)?;
        w.flush()?;
        log::info!("epoch {} loss {:.5} p {:.3} lr {:.2e}", m.epoch, m.loss, m.p, m.lr);
    }
    let mut c = trainer.to_checkpoint();
    if let Some(fr) = ds.train.first().map(|c| c.frame_rate) {
        c.set("frame_rate", fr);
    }
    super::create_parent(&args.out)?;
    c.save(&args.out)?;
    if let Some(m) = trainer.history.last() {
        println!("epoch {} loss {:.6}", m.epoch, m.loss);
    }
    println!("checkpoint {}", args.out.display());
    Ok(())
}

/// Per-clip spline curvatures and segment-averaged gait features.
pub fn pace_samples(skel: &Skeleton, clips: &[MotionClip], segment_length: f64) -> Result<Vec<PaceSample>> {
    let cfg = GaitConfig {
        segment_length: Some(segment_length),
        ..GaitConfig::default()
    };
    let mut out = Vec::new();
    for c in clips {
        match compute_gait_features(skel, c, &cfg) {
            Ok(g) => out.push(PaceSample {
                curvatures: g.spline.curvatures(),
                annotations: g.segment_annotations(),
            }),
            Err(e) => log::warn!("skipping clip {}/{}: {e}", c.subject, c.action),
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientContacts("no clip yields gait features".into()));
    }
    Ok(out)
}

pub fn run_pace(args: &TrainPaceArgs) -> Result<()> {
    if !(args.segment_length > 0.0) {
        return Err(Error::Config("segment length must be positive".into()));
    }
    let loaded = load_data(&args.data)?;
    let ds = &loaded.dataset;
    let samples = pace_samples(&ds.skeleton, &ds.train, args.segment_length)?;
    let mut net = PaceNet::new(
        PaceConfig {
            hidden: args.hidden,
            ..PaceConfig::default()
        },
        args.seed,
    );
    let cfg = PaceTrainConfig {
        epochs: args.epochs,
        optimizer: OptimizerConfig {
            learning_rate: args.learning_rate,
            ..OptimizerConfig::default()
        },
        mode: args.mode,
        seed: args.seed,
    };
    let curve = train_pace_net(&mut net, &samples, &cfg)?;
    let mut w = csv_writer(&sibling(&args.out, "loss.csv"))?;
    w.write_record(["epoch", "loss"]).map_err(csv_err)?;
    for (e, l) in curve.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    let mut c = net.to_checkpoint();
    c.set("segment_length", args.segment_length);
    c.set("mode", args.mode);
    super::create_parent(&args.out)?;
    c.save(&args.out)?;
    if let Some(l) = curve.last() {
        println!("{} splines, final gait MAE {l:.5}", samples.len());
    }
    println!("checkpoint {}", args.out.display());
    Ok(())
}
