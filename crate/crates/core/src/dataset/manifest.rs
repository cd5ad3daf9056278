//! Dataset manifests: which files make up a corpus, how they are split and
//! which preprocessing is applied when loading them.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::h36m;
use super::{augment_rotation, downsample, parse_expmap_text_with, MotionClip};
use crate::error::{Error, Result};
use crate::skeleton::{mirror_clip, parse_bvh, write_bvh, MirrorPlane, Skeleton};

pub const MANIFEST_HEADER: &str = "qmotion-manifest 1";
pub const BUILTIN_H36M: &str = "builtin:h36m";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    H36mShortTerm,
    Locomotion,
    Synthetic,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::H36mShortTerm => "h36m_short_term",
            Protocol::Locomotion => "locomotion",
            Protocol::Synthetic => "synthetic",
        }
    }

    /// Sub-directory of the data root holding this corpus.
    pub fn subdir(self) -> &'static str {
        match self {
            Protocol::H36mShortTerm => "h36m",
            Protocol::Locomotion => "locomotion",
            Protocol::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "h36m_short_term" | "h36m" => Ok(Protocol::H36mShortTerm),
            "locomotion" => Ok(Protocol::Locomotion),
            "synthetic" => Ok(Protocol::Synthetic),
            _ => Err(Error::Config(format!("unknown protocol `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("split must be train or test, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipRecord {
    /// Relative to the data root, `/`-separated.
    pub path: String,
    pub subject: String,
    pub action: String,
    pub split: Split,
}

/// Preprocessing applied by [`DatasetManifest::load`].
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocess {
    /// Nominal rate of the source files; expmap text carries none.
    pub source_rate: f64,
    pub keep_every: usize,
    pub train_phases: Vec<usize>,
    pub test_phases: Vec<usize>,
    /// Adds a mirrored copy of every training clip.
    pub mirror: bool,
    /// Applies one random yaw per training clip.
    pub rotate: bool,
    pub fix_antipodal: bool,
}

impl Preprocess {
    pub fn none(source_rate: f64) -> Self {
        Self {
            source_rate,
            keep_every: 1,
            train_phases: vec![0],
            test_phases: vec![0],
            mirror: false,
            rotate: false,
            fix_antipodal: true,
        }
    }

    pub fn for_protocol(protocol: Protocol) -> Self {
        match protocol {
            Protocol::H36mShortTerm => Self {
                source_rate: h36m::SOURCE_FRAME_RATE,
                keep_every: h36m::DOWNSAMPLE,
                train_phases: vec![0, 1],
                test_phases: vec![0],
                ..Self::none(h36m::SOURCE_FRAME_RATE)
            },
            Protocol::Locomotion => Self {
                source_rate: 120.0,
                keep_every: 4,
                train_phases: vec![0, 1, 2, 3],
                test_phases: vec![0],
                mirror: true,
                rotate: true,
                fix_antipodal: true,
            },
            Protocol::Synthetic => Self::none(30.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub protocol: Protocol,
    pub root: PathBuf,
    /// `builtin:h36m` or a clip path whose hierarchy every clip shares.
    pub skeleton: String,
    /// Seeds augmentation and test-sequence sampling.
    pub seed: u64,
    pub preprocess: Preprocess,
    pub clips: Vec<ClipRecord>,
}

/// Loaded and preprocessed corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub skeleton: Skeleton,
    pub train: Vec<MotionClip>,
    pub test: Vec<MotionClip>,
}

impl Dataset {
    pub fn all(&self) -> impl Iterator<Item = &MotionClip> {
        self.train.iter().chain(&self.test)
    }
}

fn list_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    out.sort();
    out
}

fn rel(root: &Path, p: &Path) -> String {
    let r = p.strip_prefix(root).unwrap_or(p);
    r.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Scans `root` for the layout of `protocol`:
/// `h36m/<subject>/<action>[_n].txt`, `locomotion/*.bvh` (held-out clips in
/// `locomotion/test/`) or `synthetic/{train,test}/*.bvh`.
pub fn build_manifest(root: &Path, protocol: Protocol) -> Result<DatasetManifest> {
    let base = root.join(protocol.subdir());
    if !base.is_dir() {
        return Err(Error::MissingData(vec![base]));
    }
    let mut clips = Vec::new();
    let mut missing = Vec::new();
    let skeleton;
    match protocol {
        Protocol::H36mShortTerm => {
            for s in h36m::SUBJECTS {
                let files = list_files(&base.join(s), "txt");
                if files.is_empty() {
                    missing.push(base.join(s));
                }
                let split = if s == h36m::TEST_SUBJECT { Split::Test } else { Split::Train };
                for f in files {
                    let action = h36m::action_of(&stem(&f)).map_or_else(|| stem(&f), str::to_string);
                    clips.push(ClipRecord {
                        path: rel(root, &f),
                        subject: s.to_string(),
                        action,
                        split,
                    });
                }
            }
            skeleton = BUILTIN_H36M.to_string();
        }
        Protocol::Locomotion | Protocol::Synthetic => {
            let (train_dir, test_dir) = match protocol {
                Protocol::Locomotion => (base.clone(), base.join("test")),
                _ => (base.join("train"), base.join("test")),
            };
            for (dir, split) in [(&train_dir, Split::Train), (&test_dir, Split::Test)] {
                for f in list_files(dir, "bvh") {
                    let name = stem(&f);
                    let mut parts = name.split('_');
                    let subject = parts.next().unwrap_or_default();
                    let action = parts.next().unwrap_or(subject);
                    clips.push(ClipRecord {
                        path: rel(root, &f),
                        subject: subject.to_string(),
                        action: action.to_string(),
                        split,
                    });
                }
            }
            if !clips.iter().any(|c| c.split == Split::Train) {
                missing.push(train_dir.join("*.bvh"));
            }
            skeleton = clips.first().map(|c| c.path.clone()).unwrap_or_default();
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingData(missing));
    }
    Ok(DatasetManifest {
        protocol,
        root: root.to_path_buf(),
        skeleton,
        seed: 0,
        preprocess: Preprocess::for_protocol(protocol),
        clips,
    })
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_usizes(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::parse(line, format!("bad index list `{s}`"))))
        .collect()
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ClipRecord> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn to_text(&self) -> String {
        let p = &self.preprocess;
        let mut out = format!("{MANIFEST_HEADER}\n");
        out += &format!("protocol = {}\n", self.protocol);
        out += &format!("root = {}\n", self.root.display());
        out += &format!("skeleton = {}\n", self.skeleton);
        out += &format!("seed = {}\n", self.seed);
        out += &format!("source_rate = {}\n", p.source_rate);
        out += &format!("keep_every = {}\n", p.keep_every);
        out += &format!("train_phases = {}\n", join_usize(&p.train_phases));
        out += &format!("test_phases = {}\n", join_usize(&p.test_phases));
        out += &format!("mirror = {}\n", p.mirror);
        out += &format!("rotate = {}\n", p.rotate);
        out += &format!("fix_antipodal = {}\n", p.fix_antipodal);
        for c in &self.clips {
            out += &format!("clip {} {} {} {}\n", c.path, c.subject, c.action, c.split.as_str());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MANIFEST_HEADER => {}
            _ => return Err(Error::parse(1, format!("expected `{MANIFEST_HEADER}`"))),
        }
        let mut m = DatasetManifest {
            protocol: Protocol::Synthetic,
            root: PathBuf::new(),
            skeleton: String::new(),
            seed: 0,
            preprocess: Preprocess::none(30.0),
            clips: Vec::new(),
        };
        let bad = |n: usize, what: &str| Error::parse(n + 1, format!("invalid {what}"));
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("clip ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [path, subject, action, split] = parts.as_slice() else {
                    return Err(bad(n, "clip record"));
                };
                m.clips.push(ClipRecord {
                    path: path.to_string(),
                    subject: subject.to_string(),
                    action: action.to_string(),
                    split: split.parse().map_err(|_| bad(n, "split"))?,
                });
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(n, "line"))?;
            let (k, v) = (k.trim(), v.trim());
            let p = &mut m.preprocess;
            match k {
                "protocol" => m.protocol = v.parse().map_err(|_| bad(n, "protocol"))?,
                "root" => m.root = PathBuf::from(v),
                "skeleton" => m.skeleton = v.to_string(),
                "seed" => m.seed = v.parse().map_err(|_| bad(n, "seed"))?,
                "source_rate" => p.source_rate = v.parse().map_err(|_| bad(n, "source_rate"))?,
                "keep_every" => p.keep_every = v.parse().map_err(|_| bad(n, "keep_every"))?,
                "train_phases" => p.train_phases = parse_usizes(v, n + 1)?,
                "test_phases" => p.test_phases = parse_usizes(v, n + 1)?,
                "mirror" => p.mirror = v.parse().map_err(|_| bad(n, "mirror"))?,
                "rotate" => p.rotate = v.parse().map_err(|_| bad(n, "rotate"))?,
                "fix_antipodal" => p.fix_antipodal = v.parse().map_err(|_| bad(n, "fix_antipodal"))?,
                _ => return Err(Error::parse(n + 1, format!("unknown key `{k}`"))),
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::MissingData(vec![path.to_path_buf()]))?;
        Self::from_text(&text)
    }

    fn path_of(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn read(&self, rel: &str) -> Result<String> {
        let p = self.path_of(rel);
        fs::read_to_string(&p).map_err(|_| Error::MissingData(vec![p]))
    }

    /// Files referenced by the manifest that are not on disk.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        self.clips
            .iter()
            .map(|c| self.path_of(&c.path))
            .filter(|p| !p.is_file())
            .collect()
    }

    pub fn load_skeleton(&self) -> Result<Skeleton> {
        let mut skel = if self.skeleton == BUILTIN_H36M {
            return Ok(h36m::h36m_skeleton());
        } else {
            parse_bvh(&self.read(&self.skeleton)?)?.0
        };
        // Side-less hierarchies simply have no mirror pairs.
        let _ = skel.infer_mirror_map();
        Ok(skel)
    }

    fn load_raw(&self, rec: &ClipRecord, skel: &Skeleton) -> Result<MotionClip> {
        let text = self.read(&rec.path)?;
        let mut clip = if self.skeleton == BUILTIN_H36M {
            parse_expmap_text_with(&text, skel, self.preprocess.source_rate, self.preprocess.fix_antipodal)?
        } else {
            let (s, c) = parse_bvh(&text)?;
            if s.names() != skel.names() || (0..s.len()).any(|j| s.parent(j) != skel.parent(j)) {
                return Err(Error::IncompatibleSkeleton(format!(
                    "`{}` does not share the hierarchy of `{}`",
                    rec.path, self.skeleton
                )));
            }
            c
        };
        clip.subject = rec.subject.clone();
        clip.action = rec.action.clone();
        Ok(clip)
    }

    /// Reads every clip and applies the recorded preprocessing.
    pub fn load(&self) -> Result<Dataset> {
        let missing = self.missing_files();
        if !missing.is_empty() {
            return Err(Error::MissingData(missing));
        }
        let skeleton = self.load_skeleton()?;
        let p = &self.preprocess;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for rec in &self.clips {
            let clip = self.load_raw(rec, &skeleton)?;
            let (phases, out) = match rec.split {
                Split::Train => (&p.train_phases, &mut train),
                Split::Test => (&p.test_phases, &mut test),
            };
            for &ph in phases {
                if ph >= p.keep_every {
                    return Err(Error::Config(format!("phase {ph} ≥ keep_every {}", p.keep_every)));
                }
                let d = downsample(&clip, p.keep_every, ph);
                if rec.split == Split::Train && p.mirror {
                    let m = mirror_clip(&skeleton, &d, MirrorPlane::default())?;
                    out.push(self.maybe_rotate(m, &mut rng));
                }
                let d = if rec.split == Split::Train { self.maybe_rotate(d, &mut rng) } else { d };
                out.push(d);
            }
        }
        Ok(Dataset { skeleton, train, test })
    }

    fn maybe_rotate(&self, clip: MotionClip, rng: &mut ChaCha8Rng) -> MotionClip {
        if self.preprocess.rotate {
            augment_rotation(&clip, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        } else {
            clip
        }
    }
}

/// Writes clips as `synthetic/{train,test}/<subject>_<action>_<k>.bvh`; the
/// last `test_clips` clips form the test split.
pub fn export_synthetic(root: &Path, skeleton: &Skeleton, clips: &[MotionClip], test_clips: usize) -> Result<()> {
    let base = root.join(Protocol::Synthetic.subdir());
    let n_train = clips.len().saturating_sub(test_clips);
    for (k, clip) in clips.iter().enumerate() {
        let split = if k < n_train { Split::Train } else { Split::Test };
        let dir = base.join(split.as_str());
        fs::create_dir_all(&dir)?;
        let name = format!("{}_{}_{k:03}.bvh", clip.subject, clip.action);
        fs::write(dir.join(name), write_bvh(skeleton, clip))?;
    }
    Ok(())
}
