use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

/// JSON sidecar written next to the CSV tables of a run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub id: String,
    pub kind: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub version: &'static str,
    pub threads: usize,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, threads: usize) -> Self {
        Self {
            id: cfg.id(),
            kind: cfg.kind.name().into(),
            config_hash: cfg.hash(),
            root_seed: cfg.seeds.root,
            version: env!("CARGO_PKG_VERSION"),
            threads,
            timings: BTreeMap::new(),
            files: Vec::new(),
            metadata: BTreeMap::new(),
            config: cfg.clone(),
        }
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(f))
}

/// Write `rows` to `dir/name` with a header taken from the row type.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    serde_json::to_writer_pretty(create(&path)?, manifest)?;
    Ok(path)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}
