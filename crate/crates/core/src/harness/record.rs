use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::AlgorithmConfig;
use crate::diagnostics::{MetricsRow, CSV_HEADER};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { t: usize },
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub name: String,
    pub config: AlgorithmConfig,
    pub rows: Vec<MetricsRow>,
    pub status: RunStatus,
    pub bits_cum: u64,
}

impl RunRecord {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Unsupported(format!("csv buffer: {e}")))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("{}: unexpected columns {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let text = serde_json::to_string(value)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let file = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One run as listed in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub name: String,
    pub csv: PathBuf,
    pub rows: usize,
    #[serde(flatten)]
    pub status: RunStatus,
    pub bits_cum: u64,
    pub config: AlgorithmConfig,
    #[serde(default)]
    pub final_metrics: Option<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub config_hash: String,
    /// Hash of graph, objective and master seed; runs are comparable only
    /// when this matches.
    pub problem_hash: String,
    pub runs: Vec<ManifestRun>,
    /// Sweep only: best cell per algorithm by final gradient norm.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub best: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut s = serde_json::to_vec_pretty(self)?;
        s.push(b'\n');
        Ok(s)
    }

    /// Reads back every run's CSV, resolving paths against `dir`.
    pub fn records(&self, dir: &Path) -> Result<Vec<RunRecord>> {
        self.runs
            .iter()
            .map(|r| {
                let rows = read_csv(&dir.join(&r.csv))?;
                if rows.len() != r.rows {
                    return Err(Error::Config(format!(
                        "{}: manifest lists {} rows, file has {}",
                        r.csv.display(),
                        r.rows,
                        rows.len()
                    )));
                }
                Ok(RunRecord {
                    name: r.name.clone(),
                    config: r.config.clone(),
                    rows,
                    status: r.status,
                    bits_cum: r.bits_cum,
                })
            })
            .collect()
    }
}
