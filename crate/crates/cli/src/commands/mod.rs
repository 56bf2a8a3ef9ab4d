//! One module per subcommand. Each takes the resolved configuration and
//! the output directory and writes its files there.

pub mod ablate;
pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod synth;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use maga_core::net::Sample;
use maga_core::synth::{make_dataset, read_manifest, read_pgm, read_ppm, read_trimap, ImagePair};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn sample_from_pair(p: ImagePair) -> Sample {
    Sample { image: p.image, trimap: p.trimap, alpha: p.alpha, fg: Some(p.fg), bg: Some(p.bg) }
}

/// A sample with the name used in reports.
pub struct Named {
    pub name: String,
    pub sample: Sample,
}

/// Reads every entry of a dataset manifest. Names are the image paths as
/// written in the manifest.
pub fn load_manifest(path: &Path) -> CliResult<Vec<Named>> {
    if !path.is_file() {
        return Err(CliError::Io(
            path.to_path_buf(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset manifest not found"),
        ));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    read_manifest(path)?
        .into_iter()
        .map(|e| {
            let name = e.image.strip_prefix(base).unwrap_or(&e.image).display().to_string();
            let sample = Sample {
                image: read_ppm(&e.image)?,
                trimap: read_trimap(&e.trimap)?,
                alpha: read_pgm(&e.alpha)?,
                fg: None,
                bg: None,
            };
            Ok(Named { name, sample })
        })
        .collect()
}

/// Training data: the manifest when one is configured, otherwise
/// `data.n` synthesized pairs at the network's resolution.
pub fn training_samples(cfg: &RunConfig) -> CliResult<Vec<Named>> {
    if !cfg.data.manifest.is_empty() {
        return load_manifest(Path::new(&cfg.data.manifest));
    }
    let pairs = make_dataset(cfg.data.n, cfg.seed, cfg.net.height, cfg.net.width)?;
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(i, p)| Named { name: format!("synth/{i:04}"), sample: sample_from_pair(p) })
        .collect())
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| CliError::Failed(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(bad)?;
    for r in rows {
        w.write_record(r).map_err(bad)?;
    }
    w.into_inner().map_err(|e| CliError::Failed(format!("csv encoding failed: {e}")))
}

/// `path`, or an error naming the key when it is empty.
pub fn required_path(value: &str, key: &str) -> CliResult<PathBuf> {
    if value.is_empty() {
        return Err(CliError::Usage(format!("{key} must be set")));
    }
    Ok(PathBuf::from(value))
}
