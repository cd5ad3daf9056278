use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qmotion::dataset::{make_synthetic_dataset, Dataset, SyntheticSpec};
use qmotion::posenet::Baseline;
use qmotion::skeleton::{forward_kinematics_into, parse_bvh};
use qmotion_cli::commands::eval::{evaluate, Method};
use tempfile::TempDir;

fn qm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmotion")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Prepared synthetic biped corpus; returns the manifest path.
fn biped(dir: &Path, seed: &str) -> PathBuf {
    ok(&["prepare", "--synthetic", "biped", "--clips", "8", "--frames", "150", "--seed", seed, "--out", p(dir)]);
    dir.join("manifest.txt")
}

fn sha_line(stdout: &str) -> String {
    stdout.lines().find(|l| l.contains("sha256")).unwrap().rsplit(' ').next().unwrap().to_string()
}

#[test]
fn prepare_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = |d: &Path| vec!["prepare", "--synthetic", "chain:4", "--clips", "6", "--frames", "80", "--seed", "3", "--out"]
        .into_iter()
        .map(String::from)
        .chain([p(d).to_string()])
        .collect::<Vec<_>>();
    let run = |d: &Path| {
        let v = args(d);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let (sa, sb) = (run(a.path()), run(b.path()));
    assert_eq!(sha_line(&sa), sha_line(&sb));
    assert_eq!(sha_line(&run(a.path())), sha_line(&sa));
}

#[test]
fn missing_data_and_usage_errors_have_distinct_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(qm(&["prepare", "--data", p(&missing)]).status.code(), Some(3));
    assert_eq!(qm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qm(&["prepare"]).status.code(), Some(2));

    let manifest = biped(dir.path(), "0");
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "hidden = 8\nbogus_key = 1\n").unwrap();
    let out = qm(&["train-pose", "--manifest", p(&manifest), "--config", p(&conf), "--out", p(&dir.path().join("x.ckpt"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = qm(&["eval-shortterm", "--manifest", p(&manifest), "--checkpoint", p(&dir.path().join("absent.ckpt"))]);
    assert_eq!(out.status.code(), Some(3));
}

fn write_h36m_stub(root: &Path, frames: usize) {
    use qmotion::dataset::h36m::{ACTIONS, SUBJECTS};
    for (si, s) in SUBJECTS.iter().enumerate() {
        let dir = root.join("h36m").join(s);
        std::fs::create_dir_all(&dir).unwrap();
        for (ai, a) in ACTIONS.iter().enumerate() {
            let mut text = String::new();
            for t in 0..frames {
                let row: Vec<String> = (0..99)
                    .map(|c| {
                        let w = 0.02 + 0.001 * (c + ai + si) as f64;
                        (0.3 * (w * t as f64 + c as f64).sin()).to_string()
                    })
                    .collect();
                text += &row.join(",");
                text.push('\n');
            }
            std::fs::write(dir.join(format!("{a}_1.txt")), text).unwrap();
        }
    }
}

#[test]
fn h36m_stub_lists_fifteen_actions_and_evaluates() {
    let dir = TempDir::new().unwrap();
    write_h36m_stub(dir.path(), 160);
    let out = ok(&["prepare", "--data", p(dir.path()), "--protocol", "h36m"]);
    assert!(out.contains("15 actions"), "{out}");
    let manifest = dir.path().join("manifest.txt");
    let csv1 = dir.path().join("a.csv");
    let csv2 = dir.path().join("b.csv");
    let table = ok(&["eval-shortterm", "--manifest", p(&manifest), "--baseline", "all", "--out", p(&csv1)]);
    assert!(table.contains("walking") && table.contains("zero_velocity"), "{table}");
    ok(&["eval-shortterm", "--manifest", p(&manifest), "--baseline", "all", "--out", p(&csv2)]);
    assert_eq!(std::fs::read(&csv1).unwrap(), std::fs::read(&csv2).unwrap());
    let body = std::fs::read_to_string(&csv1).unwrap();
    assert!(body.contains("ms80") && body.contains("ms400"));
    assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 1 + 15 * 3);
}

#[test]
fn constant_motion_gives_zero_baseline_error() {
    let spec = SyntheticSpec {
        clips: 4,
        frames: 100,
        freq_band: (0.0, 0.0),
        ..SyntheticSpec::chain(4)
    };
    let (skeleton, clips) = make_synthetic_dataset(&spec, 1);
    let ds = Dataset {
        skeleton,
        train: clips[..2].to_vec(),
        test: clips[2..].to_vec(),
    };
    let methods: Vec<Method> = Baseline::ALL.into_iter().map(Method::Baseline).collect();
    let report = evaluate(&ds, &methods, 8, 0).unwrap();
    assert!(!report.rows.is_empty());
    for row in &report.rows {
        assert!(row.errors.iter().all(|e| *e < 1e-12), "{row:?}");
    }
}

#[test]
fn loss_compare_with_zero_epochs_writes_headers() {
    let dir = TempDir::new().unwrap();
    let manifest = biped(dir.path(), "0");
    let conf = dir.path().join("lc.conf");
    std::fs::write(&conf, "hidden = 8\nlayers = 1\nn = 10\nk = 5\nbatch_size = 4\n").unwrap();
    let out = dir.path().join("lc");
    ok(&["loss-compare", "--manifest", p(&manifest), "--config", p(&conf), "--epochs", "0", "--windows", "2", "--out", p(&out)]);
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let grads = std::fs::read_to_string(out.join("grad_norms.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1, "{curves}");
    assert_eq!(grads.lines().count(), 1, "{grads}");

    let out1 = dir.path().join("lc1");
    ok(&["loss-compare", "--manifest", p(&manifest), "--config", p(&conf), "--epochs", "1", "--windows", "2", "--out", p(&out1)]);
    let grads = std::fs::read_to_string(out1.join("grad_norms.csv")).unwrap();
    let rows: Vec<&str> = grads.lines().skip(1).collect();
    assert!(!rows.is_empty());
    let mut keys: Vec<String> = rows.iter().map(|r| r.split(',').take(3).collect::<Vec<_>>().join(",")).collect();
    let n = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), n, "one gradient norm per arm and step");
    for r in rows {
        assert!(r.rsplit(',').next().unwrap().parse::<f64>().unwrap().is_finite());
    }
}

struct Trained {
    _dir: TempDir,
    dir: PathBuf,
    pose: PathBuf,
}

fn trained_locomotion() -> Trained {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_path_buf();
    let manifest = biped(&dir, "2");
    let conf = dir.join("loco.conf");
    std::fs::write(
        &conf,
        "mode = absolute\nhidden = 16\nlayers = 1\nn = 10\nk = 5\ninclude_controls = true\ninclude_translations = true\ncontrol_units = 8\nbatch_size = 4\nloss = positional\n",
    )
    .unwrap();
    let pose = dir.join("pose.ckpt");
    ok(&["train-pose", "--manifest", p(&manifest), "--config", p(&conf), "--epochs", "2", "--out", p(&pose)]);
    Trained { _dir: tmp, dir, pose }
}

fn generate(t: &Trained, name: &str, traj: &str, speed: &str) -> (String, PathBuf, PathBuf) {
    let tpath = t.dir.join(format!("{name}.txt"));
    std::fs::write(&tpath, traj).unwrap();
    let bvh = t.dir.join(format!("{name}.bvh"));
    let pos = t.dir.join(format!("{name}.csv"));
    let out = ok(&[
        "generate", "--trajectory", p(&tpath), "--pose", p(&t.pose), "--speed", speed, "--out", p(&bvh), "--positions", p(&pos),
    ]);
    (out, bvh, pos)
}

fn frame_count(summary: &str) -> usize {
    summary.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn generation_is_deterministic_speed_scaled_and_round_trips() {
    let t = trained_locomotion();
    let line = "0 0\n0 6\n";
    let (s1, bvh1, pos1) = generate(&t, "a", line, "1");
    let (s2, bvh2, _) = generate(&t, "b", line, "1");
    assert_eq!(std::fs::read(&bvh1).unwrap(), std::fs::read(&bvh2).unwrap());
    assert_eq!(s1.lines().next(), s2.lines().next());
    let (s3, _, _) = generate(&t, "c", line, "2");
    let (n1, n3) = (frame_count(&s1), frame_count(&s3));
    assert!(n3.abs_diff(n1 / 2) <= 1, "{n1} frames at speed 1, {n3} at speed 2");

    let (skel, clip) = parse_bvh(&std::fs::read_to_string(&bvh1).unwrap()).unwrap();
    assert_eq!(clip.frames(), n1);
    let csv = std::fs::read_to_string(&pos1).unwrap();
    let mut pos = vec![[0.0; 3]; skel.len()];
    let mut worst: f64 = 0.0;
    let mut current = usize::MAX;
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (f, j) = (v[0] as usize, v[2] as usize);
        if f != current {
            forward_kinematics_into(&skel, clip.frame(f), clip.root_positions[f], &mut pos);
            current = f;
        }
        for k in 0..3 {
            worst = worst.max((pos[j][k] - v[3 + k]).abs());
        }
    }
    assert!(worst <= 1e-4, "bvh round trip error {worst:e}");
}

#[test]
fn generation_rejects_a_non_locomotion_checkpoint() {
    let dir = TempDir::new().unwrap();
    let manifest = biped(dir.path(), "0");
    let conf = dir.path().join("plain.conf");
    std::fs::write(&conf, "hidden = 8\nlayers = 1\nn = 10\nk = 5\n").unwrap();
    let pose = dir.path().join("plain.ckpt");
    ok(&["train-pose", "--manifest", p(&manifest), "--config", p(&conf), "--epochs", "1", "--out", p(&pose)]);
    let traj = dir.path().join("t.txt");
    std::fs::write(&traj, "0 0\n0 3\n").unwrap();
    let out = qm(&["generate", "--trajectory", p(&traj), "--pose", p(&pose), "--out", p(&dir.path().join("g.bvh"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stats_of_identity_and_biped_corpora() {
    use qmotion_cli::commands::stats::{angle_stats, gait_histogram};
    let spec = SyntheticSpec {
        clips: 3,
        frames: 40,
        freq_band: (0.0, 0.0),
        ..SyntheticSpec::chain(3)
    };
    let (skeleton, mut clips) = make_synthetic_dataset(&spec, 0);
    for c in &mut clips {
        for t in 0..c.frames() {
            c.frame_mut(t).fill(qmotion::Quaternion::IDENTITY);
        }
    }
    let ds = Dataset {
        skeleton,
        train: clips.clone(),
        test: Vec::new(),
    };
    assert_eq!(angle_stats(&ds, 36).fraction_outside(), 0.0);

    let (skeleton, clips) = make_synthetic_dataset(&SyntheticSpec::biped(), 0);
    let ds = Dataset {
        skeleton,
        train: clips,
        test: Vec::new(),
    };
    let stats = angle_stats(&ds, 72);
    assert!(stats.fraction_outside() < 0.25);
    assert_eq!(stats.histogram[0].iter().sum::<usize>(), stats.total[0]);
    let g = gait_histogram(&ds, 10);
    assert_eq!(g.skipped_clips, 0);
    let (mode_count, total) = (g.mode().2, g.total());
    assert!(mode_count * 20 >= total, "mode {mode_count} of {total}");

    let dir = TempDir::new().unwrap();
    let manifest = biped(dir.path(), "1");
    let out = dir.path().join("stats");
    let text = ok(&["stats", "--manifest", p(&manifest), "--out", p(&out)]);
    assert!(text.contains('%'), "{text}");
    for f in ["angles.csv", "angles_summary.csv", "gait.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}
