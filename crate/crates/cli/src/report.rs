//! Report files and manifests. A run assembles every output in memory and
//! only then commits them: each file goes to a temporary sibling and is
//! renamed into place, so an interrupted or failed run never replaces a
//! complete report with a partial one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sparsedef::data::sha256_hex;

use crate::config::ExperimentConfig;

/// `git describe` of the source tree at build time, if available.
pub const GIT_DESCRIBE: &str = env!("SPARSEDEF_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub git: String,
    pub parallel: bool,
    pub config: ExperimentConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Default)]
pub struct ReportSet {
    files: Vec<(String, Vec<u8>)>,
    inputs: Vec<FileDigest>,
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = partial_path(path);
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).with_context(|| format!("moving report into {}", path.display()))
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// CSV with a header row; every row must match the header width.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

impl ReportSet {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, json_bytes(value)?);
        Ok(())
    }

    pub fn add_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.add(name, csv_bytes(header, rows)?);
        Ok(())
    }

    pub fn input(&mut self, name: impl Into<String>, sha256: impl Into<String>) {
        self.inputs.push(FileDigest {
            name: name.into(),
            sha256: sha256.into(),
        });
    }

    pub fn has_input(&self, name: &str) -> bool {
        self.inputs.iter().any(|d| d.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Stages every file, then renames them into `config.out` and writes
    /// `<command>.manifest.json` last.
    pub fn commit(self, command: &str, config: &ExperimentConfig) -> Result<Manifest> {
        let dir = &config.out;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let target = dir.join(name);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            let tmp = partial_path(&target);
            write_synced(&tmp, bytes)?;
            staged.push((tmp, target));
        }
        for (tmp, target) in staged {
            fs::rename(&tmp, &target).with_context(|| format!("moving report into {}", target.display()))?;
        }
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            git: GIT_DESCRIBE.to_string(),
            parallel: sparsedef::par::is_parallel(),
            config: config.clone(),
            inputs: self.inputs,
            outputs: self
                .files
                .iter()
                .map(|(name, bytes)| FileDigest {
                    name: name.clone(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
        };
        write_atomic(&dir.join(format!("{command}.manifest.json")), &json_bytes(&manifest)?)?;
        Ok(manifest)
    }
}

/// Human-readable progress, including wall-clock timings, goes to stderr and
/// to `<out>/run.log`; it is kept out of the reproducible reports.
pub fn log(config: &ExperimentConfig, line: &str) {
    eprintln!("{line}");
    if fs::create_dir_all(&config.out).is_ok() {
        if let Ok(mut f) = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(config.out.join("run.log"))
        {
            let _ = writeln!(f, "{line}");
        }
    }
}
