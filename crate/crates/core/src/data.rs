//! MNIST ingestion from IDX files.
//!
//! Images are stored flattened row-major with pixels scaled to `[0, 1]`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory that holds the IDX files.
pub const DATA_DIR_ENV: &str = "SPARSEDEF_DATA";

/// Canonical uncompressed MNIST files: (name, size in bytes, sha256).
pub const MNIST_FILES: [(&str, u64, &str); 4] = [
    (
        "train-images-idx3-ubyte",
        47_040_016,
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        "train-labels-idx1-ubyte",
        60_008,
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        "t10k-images-idx3-ubyte",
        7_840_016,
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        "t10k-labels-idx1-ubyte",
        10_008,
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x} at offset 0 (expected {expected:#010x})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated at offset {offset} (need {needed} more bytes)")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is not a digit")]
    BadLabel { index: usize, label: u8 },
    #[error("digits must be distinct values in 0..=9 (got {0} and {1})")]
    BadPair(u8, u8),
    #[error("no samples with digits {0} or {1}")]
    EmptyResult(u8, u8),
    #[error("{path}: checksum mismatch (expected {expected}, got {got})")]
    Checksum {
        path: PathBuf,
        expected: String,
        got: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }

    pub fn image_file(self) -> String {
        format!("{}-images-idx3-ubyte", self.prefix())
    }

    pub fn label_file(self) -> String {
        format!("{}-labels-idx1-ubyte", self.prefix())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labeled images sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        split: Split,
        rows: usize,
        cols: usize,
        pixels: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        let dim = rows * cols;
        if dim == 0 || pixels.len() != dim * labels.len() {
            return Err(DataError::CountMismatch {
                images: if dim == 0 { 0 } else { pixels.len() / dim },
                labels: labels.len(),
            });
        }
        Ok(Self {
            split,
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            split: self.split,
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.dim()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Applies `f` to every image, keeping labels.
    pub fn map_images<E, F>(&self, f: F) -> Result<Dataset, E>
    where
        E: Send,
        F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync + Send,
    {
        let mapped = crate::par::try_map_indexed(self.len(), |i| f(self.image(i)))?;
        Ok(Dataset {
            split: self.split,
            rows: self.rows,
            cols: self.cols,
            pixels: mapped.concat(),
            labels: self.labels.clone(),
        })
    }
}

/// Two-class subset with labels `+1` (first digit) and `-1` (second digit).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    pub positive: u8,
    pub negative: u8,
    dim: usize,
    pixels: Vec<f64>,
    labels: Vec<f64>,
    /// Index of each sample in the source dataset.
    pub origin: Vec<usize>,
}

impl BinaryDataset {
    /// Builds a binary set directly from images and `±1` labels.
    pub fn from_parts(dim: usize, pixels: Vec<f64>, labels: Vec<f64>) -> Result<Self, DataError> {
        if dim == 0 || pixels.len() != dim * labels.len() {
            return Err(DataError::CountMismatch {
                images: if dim == 0 { 0 } else { pixels.len() / dim },
                labels: labels.len(),
            });
        }
        let origin = (0..labels.len()).collect();
        Ok(Self {
            positive: 1,
            negative: 0,
            dim,
            pixels,
            labels,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.dim..(i + 1) * self.dim]
    }

    /// `+1.0` or `-1.0`.
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn map_images<E, F>(&self, f: F) -> Result<BinaryDataset, E>
    where
        E: Send,
        F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync + Send,
    {
        let mapped = crate::par::try_map_indexed(self.len(), |i| f(self.image(i)))?;
        Ok(BinaryDataset {
            pixels: mapped.concat(),
            ..self.clone()
        })
    }
}

/// Keeps samples labeled `a` or `b`, in original order.
pub fn filter_pair(d: &Dataset, a: u8, b: u8) -> Result<BinaryDataset, DataError> {
    if a == b || a > 9 || b > 9 {
        return Err(DataError::BadPair(a, b));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut origin = Vec::new();
    for i in 0..d.len() {
        let l = d.label(i);
        if l == a || l == b {
            pixels.extend_from_slice(d.image(i));
            labels.push(if l == a { 1.0 } else { -1.0 });
            origin.push(i);
        }
    }
    if labels.is_empty() {
        return Err(DataError::EmptyResult(a, b));
    }
    Ok(BinaryDataset {
        positive: a,
        negative: b,
        dim: d.dim(),
        pixels,
        labels,
        origin,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.offset + n;
        if end > self.bytes.len() {
            return Err(DataError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.offset,
                needed: end - self.bytes.len(),
            });
        }
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DataError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::BadMagic {
                path: self.path.to_path_buf(),
                found,
                expected,
            });
        }
        Ok(())
    }
}

/// Parses an IDX image file: returns (count, rows, cols, raw bytes).
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let mut cur = Cursor {
        path,
        bytes,
        offset: 0,
    };
    cur.magic(IMAGE_MAGIC)?;
    let n = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let raw = cur.take(n * rows * cols)?.to_vec();
    Ok((n, rows, cols, raw))
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let mut cur = Cursor {
        path,
        bytes,
        offset: 0,
    };
    cur.magic(LABEL_MAGIC)?;
    let n = cur.u32()? as usize;
    Ok(cur.take(n)?.to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset, DataError> {
    let (n, rows, cols, raw) = parse_idx_images(images_path, &read(images_path)?)?;
    let labels = parse_idx_labels(labels_path, &read(labels_path)?)?;
    if labels.len() != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(DataError::BadLabel { index, label });
    }
    let pixels = raw.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(split, rows, cols, pixels, labels)
}

/// Loads one split from a directory holding the canonical file names.
pub fn load_split(dir: &Path, split: Split) -> Result<Dataset, DataError> {
    load_idx(&dir.join(split.image_file()), &dir.join(split.label_file()), split)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks every canonical file in `dir` against its recorded checksum.
pub fn verify_dir(dir: &Path) -> Result<(), DataError> {
    for (name, _, expected) in MNIST_FILES {
        let path = dir.join(name);
        let got = sha256_hex(&read(&path)?);
        if got != expected {
            return Err(DataError::Checksum {
                path,
                expected: expected.to_string(),
                got,
            });
        }
    }
    Ok(())
}
