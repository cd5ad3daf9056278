use std::sync::Arc;

use qmotion::generate::{frames_to_clip, Frame, GenerationConfig, GenerationSession};
use qmotion::gait::{parse_trajectory, PaceNet};
use qmotion::posenet::PoseNet;
use qmotion::skeleton::write_bvh;
use qmotion::{Error, Result};

use super::train::checkpoint_or_missing;
use super::{csv_err, csv_writer, write_text};
use crate::GenerateArgs;

pub struct Generated {
    pub frames: Vec<Frame>,
    pub frame_rate: f64,
    /// Largest ground-plane distance between the root and the spline.
    pub max_deviation: f64,
    pub segment_length: f64,
}

pub fn run(args: &GenerateArgs) -> Result<Generated> {
    let pc = checkpoint_or_missing(&args.pose)?;
    let pose = Arc::new(PoseNet::from_checkpoint(&pc)?);
    let frame_rate = match args.frame_rate {
        Some(f) => f,
        None => pc.get("frame_rate").and_then(|v| v.parse().ok()).unwrap_or(30.0),
    };
    let (pace, pace_seg) = match &args.pace {
        Some(p) => {
            let c = checkpoint_or_missing(p)?;
            let seg = c.get("segment_length").and_then(|v| v.parse::<f64>().ok());
            (Some(Arc::new(PaceNet::from_checkpoint(&c)?)), seg)
        }
        None => (None, None),
    };
    let segment_length = args.segment_length.or(pace_seg).unwrap_or(GenerationConfig::default().segment_length);
    let text = std::fs::read_to_string(&args.trajectory)
        .map_err(|_| Error::MissingData(vec![args.trajectory.clone()]))?;
    let points = parse_trajectory(&text)?;
    let config = GenerationConfig {
        target_speed: args.speed,
        pace_mode: args.mode,
        segment_length,
        frame_rate,
        facing_offset: 0.0,
    };
    let mut session = GenerationSession::new(pose.clone(), pace, &points, config)?;
    let frames = session.run_to_end(args.max_frames)?;
    let max_deviation = frames
        .iter()
        .map(|f| session.spline().distance_to([f.root[0], f.root[2]]))
        .fold(0.0, f64::max);

    let clip = frames_to_clip(&frames, pose.skeleton.len(), frame_rate);
    write_text(&args.out, &write_bvh(&pose.skeleton, &clip))?;
    if let Some(p) = &args.positions {
        let mut w = csv_writer(p)?;
        w.write_record(["frame", "t", "joint", "x", "y", "z"]).map_err(csv_err)?;
        for f in &frames {
            for (j, x) in f.positions.iter().enumerate() {
                w.write_record([
                    f.index.to_string(),
                    f.t.to_string(),
                    j.to_string(),
                    x[0].to_string(),
                    x[1].to_string(),
                    x[2].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    println!(
        "{} frames, {:.3} s, path length {:.3}, max deviation {:.4}",
        frames.len(),
        frames.len() as f64 / frame_rate,
        session.spline().total_length(),
        max_deviation
    );
    println!("bvh {}", args.out.display());
    Ok(Generated {
        frames,
        frame_rate,
        max_deviation,
        segment_length,
    })
}
