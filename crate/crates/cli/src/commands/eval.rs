use std::time::Instant;

use qmotion::dataset::h36m::{sample_windows, ACTIONS, PREFIX_FRAMES, SEQUENCES_PER_ACTION};
use qmotion::dataset::Dataset;
use qmotion::losses::{evaluation_angle_error, EvalConfig, SHORT_TERM_MS};
use qmotion::posenet::{baseline_predict, Baseline, PoseNet};
use qmotion::quat::quat_to_euler;
use qmotion::{Error, EulerOrder, Quaternion, Result, Vec3};

use super::train::checkpoint_or_missing;
use super::{load_data, write_text};
use crate::report::{BenchReport, ReportRow};
use crate::EvalArgs;

pub enum Method {
    Baseline(Baseline),
    Model { name: String, net: Box<PoseNet> },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Baseline(b) => b.to_string(),
            Method::Model { name, .. } => name.clone(),
        }
    }

    fn predict(&self, prefix: &[Vec<Quaternion>], orders: &[EulerOrder], horizon: usize) -> Result<Vec<Vec<Quaternion>>> {
        match self {
            Method::Baseline(b) => baseline_predict(*b, prefix, orders, horizon),
            Method::Model { net, .. } => net.predict(prefix, horizon),
        }
    }
}

/// Horizons in frames for the report's millisecond columns.
pub fn horizon_frames(frame_rate: f64) -> Vec<usize> {
    SHORT_TERM_MS
        .iter()
        .map(|&ms| ((ms as f64 * frame_rate / 1000.0).round() as usize).max(1))
        .collect()
}

fn action_order(ds: &Dataset) -> Vec<String> {
    let mut acts: Vec<String> = ds.test.iter().map(|c| c.action.clone()).collect();
    acts.sort();
    acts.dedup();
    if acts.iter().all(|a| ACTIONS.contains(&a.as_str())) {
        acts.sort_by_key(|a| ACTIONS.iter().position(|x| x == a));
    }
    acts
}

/// Mean angle error of every method on `sequences` seeded test windows per
/// action.
pub fn evaluate(ds: &Dataset, methods: &[Method], sequences: usize, seed: u64) -> Result<BenchReport> {
    let first = ds.test.first().ok_or_else(|| Error::MissingData(vec!["test split".into()]))?;
    let fr = first.frame_rate;
    let horizons = horizon_frames(fr);
    let max_h = *horizons.last().expect("four horizons");
    let prefix = methods
        .iter()
        .map(|m| match m {
            Method::Model { net, .. } => net.config.n,
            Method::Baseline(_) => 0,
        })
        .fold(PREFIX_FRAMES, usize::max);
    let orders: Vec<EulerOrder> = ds.skeleton.joints().iter().map(|j| j.euler_order).collect();
    let eval = EvalConfig {
        horizons: horizons.clone(),
        excluded_joints: vec![0],
    };
    let mut report = BenchReport::new(seed);
    report.config = vec![
        ("sequences".into(), sequences.to_string()),
        ("prefix_frames".into(), prefix.to_string()),
        ("frame_rate".into(), fr.to_string()),
        ("horizon_frames".into(), horizons.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" ")),
    ];
    for (ai, action) in action_order(ds).iter().enumerate() {
        let clips: Vec<_> = ds.test.iter().filter(|c| &c.action == action).collect();
        let lengths: Vec<usize> = clips.iter().map(|c| c.frames()).collect();
        let windows = sample_windows(&lengths, prefix + max_h, sequences, seed.wrapping_add(ai as u64));
        if windows.is_empty() {
            log::warn!("no test clip of `{action}` has {} frames", prefix + max_h);
            continue;
        }
        let mut prefixes = Vec::with_capacity(windows.len());
        let mut targets: Vec<Vec<Vec3>> = Vec::with_capacity(windows.len());
        for &(c, start) in &windows {
            let clip = clips[c];
            prefixes.push((start..start + prefix).map(|t| clip.frame(t).to_vec()).collect::<Vec<_>>());
            targets.push(
                (start + prefix..start + prefix + max_h)
                    .flat_map(|t| clip.frame(t).iter().zip(&orders).map(|(q, o)| quat_to_euler(*q, *o)))
                    .collect(),
            );
        }
        for m in methods {
            let preds = prefixes
                .iter()
                .map(|p| Ok(m.predict(p, &orders, max_h)?.concat()))
                .collect::<Result<Vec<_>>>()?;
            let errors = evaluation_angle_error(&preds, &targets, &orders, &eval)?;
            report.rows.push(ReportRow {
                method: m.name(),
                action: action.clone(),
                errors,
            });
        }
    }
    Ok(report)
}

pub fn parse_methods(args: &EvalArgs) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for b in &args.baseline {
        if b == "all" {
            methods.extend(Baseline::ALL.map(Method::Baseline));
        } else {
            methods.push(Method::Baseline(b.parse()?));
        }
    }
    for p in &args.checkpoint {
        let net = PoseNet::from_checkpoint(&checkpoint_or_missing(p)?)?;
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        methods.push(Method::Model { name, net: Box::new(net) });
    }
    if methods.is_empty() {
        return Err(Error::Config("pass --checkpoint or --baseline".into()));
    }
    Ok(methods)
}

pub fn run(args: &EvalArgs) -> Result<BenchReport> {
    let methods = parse_methods(args)?;
    let t0 = Instant::now();
    let loaded = load_data(&args.data)?;
    for m in &methods {
        if let Method::Model { net, name } = m {
            if net.skeleton.len() != loaded.dataset.skeleton.len() {
                return Err(Error::IncompatibleSkeleton(format!("`{name}` does not match the data skeleton")));
            }
        }
    }
    let seed = args.seed.unwrap_or(loaded.manifest.seed);
    let mut report = evaluate(&loaded.dataset, &methods, args.sequences.unwrap_or(SEQUENCES_PER_ACTION), seed)?;
    report.config.insert(0, ("protocol".into(), loaded.manifest.protocol.to_string()));
    report.wall_clock = Some(t0.elapsed().as_secs_f64());
    print!("{}", report.to_table());
    let out = args.out.clone().unwrap_or_else(|| "shortterm.csv".into());
    write_text(&out, &report.to_csv()?)?;
    println!("csv {}", out.display());
    Ok(report)
}
