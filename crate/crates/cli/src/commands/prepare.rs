use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use qmotion::dataset::{
    build_manifest, export_synthetic, make_synthetic_dataset, write_cache, Dataset, DatasetManifest, Protocol,
    SyntheticSpec,
};
use qmotion::{Error, Result};

use super::{cache_path, sha256_file, MANIFEST_FILE};
use crate::PrepareArgs;

pub fn parse_synthetic(spec: &str) -> Result<SyntheticSpec> {
    match spec.split_once(':') {
        None if spec == "biped" => Ok(SyntheticSpec::biped()),
        None if spec == "chain" => Ok(SyntheticSpec::chain(5)),
        Some(("chain", j)) => j
            .parse()
            .ok()
            .filter(|&j| j >= 2)
            .map(SyntheticSpec::chain)
            .ok_or_else(|| Error::Config(format!("bad chain joint count `{j}`"))),
        _ => Err(Error::Config(format!("unknown synthetic preset `{spec}`"))),
    }
}

/// Clip and frame counts per action and split.
pub fn summarize(ds: &Dataset) -> String {
    let mut rows: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for (split, clips) in [(0, &ds.train), (1, &ds.test)] {
        for c in clips {
            let r = rows.entry(c.action.as_str()).or_default();
            r[2 * split] += 1;
            r[2 * split + 1] += c.frames();
        }
    }
    let mut s = format!(
        "{:<16} {:>11} {:>12} {:>10} {:>11}\n",
        "action", "train clips", "train frames", "test clips", "test frames"
    );
    for (a, r) in &rows {
        s += &format!("{a:<16} {:>11} {:>12} {:>10} {:>11}\n", r[0], r[1], r[2], r[3]);
    }
    s += &format!("{} actions\n", rows.len());
    s
}

pub fn run(args: &PrepareArgs) -> Result<()> {
    let (manifest, out) = match (&args.synthetic, &args.data) {
        (Some(spec), _) => {
            let mut spec = parse_synthetic(spec)?;
            spec.clips = args.clips.unwrap_or(spec.clips);
            spec.frames = args.frames.unwrap_or(spec.frames);
            let out = args.out.clone().ok_or_else(|| Error::Config("--synthetic needs --out".into()))?;
            let (skel, clips) = make_synthetic_dataset(&spec, args.seed);
            let test = args.test_clips.unwrap_or(clips.len() / 4);
            if test >= clips.len() {
                return Err(Error::Config(format!("{test} test clips leave none for training")));
            }
            std::fs::create_dir_all(&out)?;
            export_synthetic(&out, &skel, &clips, test)?;
            (build_manifest(&out, Protocol::Synthetic)?, out)
        }
        (None, Some(data)) => {
            let m = build_manifest(data, args.protocol)?;
            (m, args.out.clone().unwrap_or_else(|| data.clone()))
        }
        (None, None) => return Err(Error::Config("pass --data or --synthetic".into())),
    };
    let manifest = DatasetManifest {
        seed: args.seed,
        ..manifest
    };
    std::fs::create_dir_all(&out)?;
    let mpath = out.join(MANIFEST_FILE);
    manifest.save(&mpath)?;
    let ds = manifest.load()?;
    let cpath = cache_path(&mpath);
    let mut w = BufWriter::new(File::create(&cpath)?);
    write_cache(&mut w, &ds)?;
    w.flush()?;
    drop(w);
    print!("{}", summarize(&ds));
    println!("manifest {}", mpath.display());
    println!("cache {} sha256 {}", cpath.display(), sha256_file(&cpath)?);
    Ok(())
}
