//! Output files. Every CSV starts with '#' provenance lines (version, seed,
//! resolved config as one JSON line) followed by the header row; every
//! JSON document carries a "provenance" object.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::error::Result;
use crate::VERSION;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Self {
        Provenance { version: VERSION.to_string(), seed: cfg.seed, config: cfg.clone() }
    }
}

/// A single pass/fail check reported by a run.
#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Gate {
    /// Passes when value <= threshold.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Gate { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Gate { name: name.into(), value: ok as u8 as f64, threshold: 1.0, pass: ok }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub gates: Vec<Gate>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(dir: &Path, name: &str, prov: &Provenance, header: &[&str]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "# {}", prov.version)?;
        writeln!(out, "# seed = {}", prov.seed)?;
        writeln!(out, "# config = {}", serde_json::to_string(&prov.config)?)?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header)?;
        Ok(CsvSink { writer, path })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        self.writer.write_record(values.iter().map(|v| fmt_f64(*v)))?;
        Ok(())
    }

    pub fn raw_row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, prov: &Provenance, body: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut out, &WithProvenance { provenance: prov, body })?;
    writeln!(out)?;
    out.flush()?;
    Ok(path)
}
