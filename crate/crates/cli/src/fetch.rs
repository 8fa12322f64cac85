//! Dataset acquisition: download the gzipped IDX archives or import local
//! copies, and accept a file only if its size and SHA-256 match the
//! recorded values.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flate2::read::GzDecoder;
use sparsedef::data::{sha256_hex, MNIST_FILES};

use crate::report::write_atomic;

/// Mirror serving `<name>.gz` for each canonical file name.
pub const DEFAULT_BASE_URL: &str = "https://storage.googleapis.com/cvdf-datasets/mnist";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Url(String),
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    AlreadyPresent,
    Fetched,
}

fn gunzip(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes).read_to_end(&mut out)?;
    Ok(out)
}

fn from_dir(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let raw = dir.join(name);
    if raw.is_file() {
        return fs::read(&raw).with_context(|| format!("reading {}", raw.display()));
    }
    let gz = dir.join(format!("{name}.gz"));
    let bytes = fs::read(&gz).with_context(|| format!("neither {} nor {} is readable", raw.display(), gz.display()))?;
    gunzip(&bytes).with_context(|| format!("decompressing {}", gz.display()))
}

fn from_url(base: &str, name: &str) -> Result<Vec<u8>> {
    let url = format!("{}/{name}.gz", base.trim_end_matches('/'));
    let resp = ureq::get(&url).call().with_context(|| format!("downloading {url}"))?;
    let mut bytes = Vec::new();
    resp.into_reader()
        .read_to_end(&mut bytes)
        .with_context(|| format!("reading {url}"))?;
    gunzip(&bytes).with_context(|| format!("decompressing {url}"))
}

fn verify(name: &str, bytes: &[u8], size: u64, sha: &str) -> Result<()> {
    if bytes.len() as u64 != size {
        bail!("{name}: expected {size} bytes, got {}", bytes.len());
    }
    let got = sha256_hex(bytes);
    if got != sha {
        bail!("{name}: SHA-256 mismatch (expected {sha}, got {got})");
    }
    Ok(())
}

/// Ensures all four files in `dest` are present and verified.
pub fn fetch(dest: &Path, source: &Source) -> Result<Vec<(String, Outcome)>> {
    let mut done = Vec::new();
    for (name, size, sha) in MNIST_FILES {
        let target = dest.join(name);
        if let Ok(existing) = fs::read(&target) {
            if verify(name, &existing, size, sha).is_ok() {
                done.push((name.to_string(), Outcome::AlreadyPresent));
                continue;
            }
        }
        let bytes = match source {
            Source::Url(base) => from_url(base, name)?,
            Source::Dir(dir) => from_dir(dir, name)?,
        };
        verify(name, &bytes, size, sha)?;
        write_atomic(&target, &bytes)?;
        done.push((name.to_string(), Outcome::Fetched));
    }
    Ok(done)
}
