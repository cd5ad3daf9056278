use std::f64::consts::{FRAC_PI_2, PI};

use qmotion::dataset::Dataset;
use qmotion::gait::{compute_gait_features, GaitConfig};
use qmotion::quat::quat_to_euler;
use qmotion::Result;

use super::{csv_err, csv_writer, load_data};
use crate::StatsArgs;

#[derive(Clone, Debug, PartialEq)]
pub struct AngleStats {
    /// `[axis][bin]` counts over `[-π, π]`.
    pub histogram: [Vec<usize>; 3],
    pub outside: [usize; 3],
    pub total: [usize; 3],
}

impl AngleStats {
    pub fn fraction_outside(&self) -> f64 {
        let t: usize = self.total.iter().sum();
        self.outside.iter().sum::<usize>() as f64 / t.max(1) as f64
    }
}

/// Euler angles of every joint and frame in each joint's own order.
pub fn angle_stats(ds: &Dataset, bins: usize) -> AngleStats {
    let mut s = AngleStats {
        histogram: std::array::from_fn(|_| vec![0; bins]),
        outside: [0; 3],
        total: [0; 3],
    };
    let orders: Vec<_> = ds.skeleton.joints().iter().map(|j| j.euler_order).collect();
    for clip in ds.all() {
        for t in 0..clip.frames() {
            for (q, o) in clip.frame(t).iter().zip(&orders) {
                let e = quat_to_euler(*q, *o);
                for a in 0..3 {
                    let b = (((e[a] + PI) / (2.0 * PI)) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
                    s.histogram[a][b] += 1;
                    s.total[a] += 1;
                    if e[a].abs() > FRAC_PI_2 {
                        s.outside[a] += 1;
                    }
                }
            }
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaitHistogram {
    pub freq_range: (f64, f64),
    pub speed_range: (f64, f64),
    /// `[freq_bin][speed_bin]`.
    pub counts: Vec<Vec<usize>>,
    pub skipped_clips: usize,
}

impl GaitHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Bin with the largest count.
    pub fn mode(&self) -> (usize, usize, usize) {
        let mut best = (0, 0, 0);
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > best.2 {
                    best = (i, j, c);
                }
            }
        }
        best
    }
}

fn bin(v: f64, (lo, hi): (f64, f64), n: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo)) * n as f64).floor().clamp(0.0, n as f64 - 1.0) as usize
}

/// Joint distribution of per-frame step frequency and local speed over the
/// training clips.
pub fn gait_histogram(ds: &Dataset, bins: usize) -> GaitHistogram {
    let cfg = GaitConfig::default();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for clip in &ds.train {
        match compute_gait_features(&ds.skeleton, clip, &cfg) {
            Ok(g) => samples.extend(g.frames.iter().map(|f| (f.step_frequency, f.local_speed))),
            Err(_) => skipped += 1,
        }
    }
    let range = |f: fn(&(f64, f64)) -> f64| {
        samples
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (fr, sr) = if samples.is_empty() {
        ((0.0, 0.0), (0.0, 0.0))
    } else {
        (range(|s| s.0), range(|s| s.1))
    };
    let mut counts = vec![vec![0; bins]; bins];
    for (f, v) in &samples {
        counts[bin(*f, fr, bins)][bin(*v, sr, bins)] += 1;
    }
    GaitHistogram {
        freq_range: fr,
        speed_range: sr,
        counts,
        skipped_clips: skipped,
    }
}

pub fn run(args: &StatsArgs) -> Result<()> {
    if args.bins == 0 || args.gait_bins == 0 {
        return Err(qmotion::Error::Config("bin counts must be positive".into()));
    }
    let ds = load_data(&args.data)?.dataset;
    let a = angle_stats(&ds, args.bins);
    let mut w = csv_writer(&args.out.join("angles.csv"))?;
    w.write_record(["axis", "bin_start", "bin_end", "count"]).map_err(csv_err)?;
    let width = 2.0 * PI / args.bins as f64;
    for (axis, h) in a.histogram.iter().enumerate() {
        for (b, c) in h.iter().enumerate() {
            let lo = -PI + b as f64 * width;
            w.write_record([axis.to_string(), lo.to_string(), (lo + width).to_string(), c.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    let mut w = csv_writer(&args.out.join("angles_summary.csv"))?;
    w.write_record(["axis", "total", "outside", "fraction_outside"]).map_err(csv_err)?;
    for axis in 0..3 {
        let f = a.outside[axis] as f64 / a.total[axis].max(1) as f64;
        w.write_record([axis.to_string(), a.total[axis].to_string(), a.outside[axis].to_string(), f.to_string()])
            .map_err(csv_err)?;
    }
    let (t, o): (usize, usize) = (a.total.iter().sum(), a.outside.iter().sum());
    w.write_record(["all".to_string(), t.to_string(), o.to_string(), a.fraction_outside().to_string()])
        .map_err(csv_err)?;
    w.flush()?;

    let g = gait_histogram(&ds, args.gait_bins);
    let mut w = csv_writer(&args.out.join("gait.csv"))?;
    w.write_record(["freq_lo", "freq_hi", "speed_lo", "speed_hi", "count"]).map_err(csv_err)?;
    let n = args.gait_bins as f64;
    let fw = (g.freq_range.1 - g.freq_range.0) / n;
    let sw = (g.speed_range.1 - g.speed_range.0) / n;
    for (i, row) in g.counts.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            let f0 = g.freq_range.0 + i as f64 * fw;
            let s0 = g.speed_range.0 + j as f64 * sw;
            w.write_record([f0, f0 + fw, s0, s0 + sw].iter().map(|v| v.to_string()).chain([c.to_string()]))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    println!(
        "{:.2}% of {t} angles outside [-pi/2, pi/2]; {} gait samples ({} clips skipped)",
        100.0 * a.fraction_outside(),
        g.total(),
        g.skipped_clips
    );
    println!("csv {}", args.out.display());
    Ok(())
}
