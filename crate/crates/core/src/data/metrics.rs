//! Metrics CSV with a fixed header. A `.lock` file next to the CSV marks the
//! single active writer.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 15] = [
    "run_id",
    "epoch",
    "step",
    "estimator",
    "tau",
    "eta",
    "beta",
    "K",
    "seed",
    "train_neg_elbo",
    "test_neg_elbo",
    "bias_cosine",
    "sample_var",
    "sample_std",
    "wall_ms",
];

/// One CSV row. Columns that do not apply to a row are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub epoch: f64,
    pub step: u64,
    pub estimator: String,
    pub tau: f64,
    pub eta: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub train_neg_elbo: Option<f64>,
    pub test_neg_elbo: Option<f64>,
    pub bias_cosine: Option<f64>,
    pub sample_var: Option<f64>,
    pub sample_std: Option<f64>,
    pub wall_ms: Option<u64>,
}

/// Appends rows to a metrics file, writing the header only when the file is
/// new or empty. Only one writer per file may exist at a time.
pub struct MetricsWriter {
    csv: csv::Writer<File>,
    lock: PathBuf,
}

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    path.with_file_name(name)
}

impl MetricsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let lock = lock_path(path);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(Error::WriterBusy(path.to_path_buf())),
            Err(e) => return Err(e.into()),
        }
        let opened = Self::open_locked(path);
        if opened.is_err() {
            let _ = std::fs::remove_file(&lock);
        }
        opened.map(|csv| Self { csv, lock })
    }

    fn open_locked(path: &Path) -> Result<csv::Writer<File>> {
        let existing = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        if existing > 0 {
            let mut first = String::new();
            BufReader::new(File::open(path)?).read_line(&mut first)?;
            if first.trim_end() != METRICS_HEADER.join(",") {
                return Err(Error::MetricsHeader { path: path.to_path_buf() });
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if existing == 0 {
            csv.write_record(METRICS_HEADER).map_err(csv_err)?;
        }
        Ok(csv)
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.csv.serialize(row).map_err(csv_err)?;
        self.csv.flush()?;
        Ok(())
    }

    pub fn write_all(&mut self, rows: &[MetricsRow]) -> Result<()> {
        rows.iter().try_for_each(|r| self.write(r))
    }
}

impl Drop for MetricsWriter {
    fn drop(&mut self) {
        let _ = self.csv.flush();
        let _ = std::fs::remove_file(&self.lock);
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header != METRICS_HEADER {
        return Err(Error::MetricsHeader { path: path.to_path_buf() });
    }
    reader.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Writes `rows` to a fresh file (truncating) under the single-writer lock.
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    MetricsWriter::open(path)?.write_all(rows)
}
