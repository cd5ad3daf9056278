pub mod eval;
pub mod generate;
pub mod loss_compare;
pub mod prepare;
pub mod stats;
pub mod train;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use qmotion::dataset::{build_manifest, read_cache, Dataset, DatasetManifest};
use qmotion::{Error, Result};
use sha2::{Digest, Sha256};

use crate::DataArgs;

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Cache stored next to a manifest.
pub fn cache_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("qnds")
}

pub struct Loaded {
    pub manifest: DatasetManifest,
    pub dataset: Dataset,
}

/// Reads the cache next to `--manifest` when present, otherwise loads and
/// preprocesses the clips the manifest lists.
pub fn load_data(args: &DataArgs) -> Result<Loaded> {
    let manifest = match (&args.manifest, &args.data) {
        (Some(m), _) => {
            if !m.is_file() {
                return Err(Error::MissingData(vec![m.clone()]));
            }
            DatasetManifest::load_file(m)?
        }
        (None, Some(d)) => build_manifest(d, args.protocol)?,
        (None, None) => return Err(Error::Config("pass --manifest or --data".into())),
    };
    let cache = args.manifest.as_deref().map(cache_path).filter(|p| p.is_file());
    let dataset = match cache {
        Some(p) => {
            log::info!("reading cache {}", p.display());
            read_cache(&mut BufReader::new(File::open(p)?))?
        }
        None => manifest.load()?,
    };
    Ok(Loaded { manifest, dataset })
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    Ok(())
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    create_parent(path)?;
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    crate::report::csv_err(e)
}

/// `<path>.<suffix>` next to `path`, e.g. `pose.metrics.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}
