use std::sync::Arc;

use qmotion::dataset::h36m::sample_windows;
use qmotion::dataset::Dataset;
use qmotion::posenet::{positional_errors, LossKind, PoseMode, PoseNet, PoseNetConfig, PoseSequence, PoseTrainConfig, PoseTrainer};
use qmotion::quat::{periodic_abs_diff, quat_to_euler};
use qmotion::{Error, Quaternion, Result};

use super::train::pose_sequences;
use super::{csv_err, csv_writer, load_data};
use crate::config::{pose_net_config, pose_train_config, ConfigFile, POSE_KEYS};
use crate::LossCompareArgs;

pub const DEFAULT_N: usize = 60;
pub const DEFAULT_K: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochPoint {
    pub epoch: usize,
    pub loss: f64,
    pub angle_metric: f64,
    pub position_metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub arm: LossKind,
    pub curve: Vec<EpochPoint>,
    /// `(epoch, step, pre-clip norm)`.
    pub grad_norms: Vec<(usize, usize, f64)>,
    pub failure: Option<String>,
}

impl ArmResult {
    pub fn final_position_metric(&self) -> Option<f64> {
        self.curve.last().map(|p| p.position_metric)
    }
}

/// Mean wrapped absolute Euler error and mean joint distance of the free-run
/// predictions over the evaluation windows.
pub fn window_metrics(net: &PoseNet, windows: &[(&PoseSequence, usize)]) -> Result<(f64, f64)> {
    let (n, k) = (net.config.n, net.config.k);
    let r = net.rollout(windows, n, k)?;
    let pos = positional_errors(&net.skeleton, windows, n, &r.rotations);
    let position = pos.iter().sum::<f64>() / pos.len().max(1) as f64;
    let orders: Vec<_> = net.skeleton.joints().iter().map(|j| j.euler_order).collect();
    let (mut s, mut count) = (0.0, 0usize);
    for ((seq, start), pred) in windows.iter().zip(&r.rotations) {
        for (i, row) in pred.iter().enumerate() {
            let target = seq.euler_row(start + n + i);
            for (j, q) in row.chunks_exact(4).enumerate().skip(1) {
                let e = quat_to_euler(Quaternion::from_slice(q), orders[j]);
                for a in 0..3 {
                    s += periodic_abs_diff(e[a] - target[3 * j + a]);
                    count += 1;
                }
            }
        }
    }
    Ok((s / count.max(1) as f64, position))
}

fn is_numeric(e: &Error) -> bool {
    matches!(e, Error::NonFiniteLoss(_) | Error::NonFiniteGradient { .. } | Error::DegenerateQuaternion { .. })
}

/// Trains one model per loss from the same initialization. A numeric
/// failure ends that arm only.
pub fn compare(
    ds: &Dataset,
    net_cfg: &PoseNetConfig,
    train_cfg: &PoseTrainConfig,
    epochs: usize,
    windows: usize,
    seed: u64,
) -> Result<Vec<ArmResult>> {
    let skel = Arc::new(ds.skeleton.clone());
    let train = pose_sequences(&skel, &ds.train, net_cfg)?;
    let held = pose_sequences(&skel, &ds.test, net_cfg)?;
    let eval_set = if held.is_empty() { &train } else { &held };
    let lengths: Vec<usize> = eval_set.iter().map(PoseSequence::frames).collect();
    let picks = sample_windows(&lengths, net_cfg.n + net_cfg.k, windows, seed);
    if picks.is_empty() {
        return Err(Error::PrefixTooShort {
            needed: net_cfg.n + net_cfg.k,
            got: lengths.iter().copied().max().unwrap_or(0),
        });
    }
    let eval_windows: Vec<(&PoseSequence, usize)> = picks.iter().map(|&(c, s)| (&eval_set[c], s)).collect();
    let mut out = Vec::new();
    for arm in [LossKind::Euler, LossKind::Positional] {
        let cfg = PoseTrainConfig {
            loss: arm,
            seed,
            ..train_cfg.clone()
        };
        let net = PoseNet::new(net_cfg.clone(), skel.clone(), seed)?;
        let mut tr = PoseTrainer::new(net, cfg)?;
        let mut res = ArmResult {
            arm,
            curve: Vec::new(),
            grad_norms: Vec::new(),
            failure: None,
        };
        for _ in 0..epochs {
            let m = match tr.run_epoch(&train) {
                Ok(m) => m,
                Err(e) if is_numeric(&e) => {
                    log::warn!("{arm} arm stopped at epoch {}: {e}", tr.epoch);
                    res.failure = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            res.grad_norms.extend(m.grad_norms.iter().enumerate().map(|(s, g)| (m.epoch, s, *g)));
            let (angle, position) = window_metrics(&tr.net, &eval_windows)?;
            res.curve.push(EpochPoint {
                epoch: m.epoch,
                loss: m.loss,
                angle_metric: angle,
                position_metric: position,
            });
        }
        out.push(res);
    }
    Ok(out)
}

pub fn run(args: &LossCompareArgs) -> Result<()> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    file.check_keys(POSE_KEYS)?;
    if file.get::<usize>("n")?.is_none() {
        file.set("n", DEFAULT_N);
    }
    if file.get::<usize>("k")?.is_none() {
        file.set("k", DEFAULT_K);
    }
    if file.get::<String>("mode")?.is_none() {
        file.set("mode", PoseMode::Absolute);
    }
    let loaded = load_data(&args.data)?;
    let net_cfg = pose_net_config(&file, loaded.dataset.skeleton.len())?;
    let train_cfg = pose_train_config(&file)?;
    let arms = compare(&loaded.dataset, &net_cfg, &train_cfg, args.epochs, args.windows, args.seed)?;
    write_outputs(&args.out, &arms)?;
    for a in &arms {
        match (a.curve.last(), &a.failure) {
            (_, Some(f)) => println!("{:<10} failed: {f}", a.arm.to_string()),
            (Some(p), None) => println!(
                "{:<10} loss {:.5} angle {:.5} position {:.5}",
                a.arm.to_string(),
                p.loss,
                p.angle_metric,
                p.position_metric
            ),
            (None, None) => println!("{:<10} no epochs", a.arm.to_string()),
        }
    }
    Ok(())
}

pub fn write_outputs(dir: &std::path::Path, arms: &[ArmResult]) -> Result<()> {
    let mut w = csv_writer(&dir.join("curves.csv"))?;
    w.write_record(["epoch", "arm", "loss", "angle_metric", "position_metric"])
        .map_err(csv_err)?;
    for a in arms {
        for p in &a.curve {
            w.write_record([
                p.epoch.to_string(),
                a.arm.to_string(),
                p.loss.to_string(),
                p.angle_metric.to_string(),
                p.position_metric.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join("grad_norms.csv"))?;
    w.write_record(["arm", "epoch", "step", "grad_norm"]).map_err(csv_err)?;
    for a in arms {
        for (e, s, g) in &a.grad_norms {
            w.write_record([a.arm.to_string(), e.to_string(), s.to_string(), g.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join("status.csv"))?;
    w.write_record(["arm", "epochs", "status"]).map_err(csv_err)?;
    for a in arms {
        let status = a.failure.clone().unwrap_or_else(|| "ok".into());
        w.write_record([a.arm.to_string(), a.curve.len().to_string(), status])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
