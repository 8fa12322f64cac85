//! Weight file format.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SPDFMDL\0"
//! 8       4     format version, u32 little-endian
//! 12      4     header length H, u32 little-endian
//! 16      H     header, UTF-8 JSON (see ModelHeader)
//! 16+H    8·P   parameters, f64 little-endian, P = header.param_count
//! ```
//!
//! Network parameters are stored layer by layer, weights before biases; a
//! linear model stores `w` followed by `b`. Values round-trip bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, LinearModel, ModelError, Network, TrainConfig};

pub const MAGIC: &[u8; 8] = b"SPDFMDL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Network,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: ModelKind,
    /// Present for networks.
    pub architecture: Option<Architecture>,
    /// Input dimension for linear models.
    pub dim: Option<usize>,
    pub param_count: usize,
    pub train_config: Option<TrainConfig>,
}

fn encode(header: &ModelHeader, params: &[f64]) -> Result<Vec<u8>, ModelError> {
    let json = serde_json::to_vec(header).map_err(|e| ModelError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<(ModelHeader, Vec<f64>), ModelError> {
    let fail = |msg: String| Err(ModelError::Format(msg));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return fail("bad magic".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return fail(format!("unsupported format version {version}"));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let Some(json) = bytes.get(16..16 + hlen) else {
        return fail("truncated header".into());
    };
    let header: ModelHeader =
        serde_json::from_slice(json).map_err(|e| ModelError::Format(e.to_string()))?;
    let body = &bytes[16 + hlen..];
    if body.len() != 8 * header.param_count {
        return fail(format!(
            "expected {} parameter bytes, found {}",
            8 * header.param_count,
            body.len()
        ));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, params))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    fs::write(path, bytes).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, ModelError> {
    fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn network_bytes(net: &Network, config: Option<&TrainConfig>) -> Result<Vec<u8>, ModelError> {
    let header = ModelHeader {
        kind: ModelKind::Network,
        architecture: Some(net.architecture().clone()),
        dim: Some(net.input_len()),
        param_count: net.param_count(),
        train_config: config.cloned(),
    };
    encode(&header, &net.params())
}

pub fn save_network(path: &Path, net: &Network, config: Option<&TrainConfig>) -> Result<(), ModelError> {
    write(path, &network_bytes(net, config)?)
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<(Network, ModelHeader), ModelError> {
    let (header, params) = decode(bytes)?;
    let (ModelKind::Network, Some(arch)) = (header.kind, header.architecture.clone()) else {
        return Err(ModelError::Format("file does not hold a network".into()));
    };
    let mut net = Network::new(arch, 0)?;
    net.set_params(&params)?;
    Ok((net, header))
}

pub fn load_network(path: &Path) -> Result<(Network, ModelHeader), ModelError> {
    network_from_bytes(&read(path)?)
}

pub fn linear_bytes(model: &LinearModel, config: Option<&TrainConfig>) -> Result<Vec<u8>, ModelError> {
    let header = ModelHeader {
        kind: ModelKind::Linear,
        architecture: None,
        dim: Some(model.dim()),
        param_count: model.dim() + 1,
        train_config: config.cloned(),
    };
    let mut params = model.w.clone();
    params.push(model.b);
    encode(&header, &params)
}

pub fn save_linear(path: &Path, model: &LinearModel, config: Option<&TrainConfig>) -> Result<(), ModelError> {
    write(path, &linear_bytes(model, config)?)
}

pub fn linear_from_bytes(bytes: &[u8]) -> Result<(LinearModel, ModelHeader), ModelError> {
    let (header, mut params) = decode(bytes)?;
    if header.kind != ModelKind::Linear || params.is_empty() {
        return Err(ModelError::Format("file does not hold a linear model".into()));
    }
    let b = params.pop().expect("non-empty");
    Ok((LinearModel::new(params, b), header))
}

pub fn load_linear(path: &Path) -> Result<(LinearModel, ModelHeader), ModelError> {
    linear_from_bytes(&read(path)?)
}
