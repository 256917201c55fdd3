//! Single-file model checkpoints.
//!
//! Layout: the 8-byte magic `MOBFCKPT`, a little-endian u32 header length,
//! the JSON header, the SHA-256 of the header bytes, then every parameter
//! as a little-endian f32 in layout order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mobfuse_core::recon::{Architecture, LayerGroup, Model};

use crate::io::{self, IoError};

const MAGIC: &[u8; 8] = b"MOBFCKPT";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}: not a checkpoint")]
    Magic(String),
    #[error("{0}: header hash mismatch")]
    HeaderHash(String),
    #[error("{path}: {msg}")]
    Corrupt { path: String, msg: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub architecture: Architecture,
    /// Half-open parameter index range of each layer group.
    pub layer_groups: BTreeMap<LayerGroup, [usize; 2]>,
    pub param_count: usize,
    pub params_sha256: String,
    /// Whatever produced the parameters (training or transfer settings).
    pub training: Value,
    pub seed: u64,
}

fn params_bytes(params: &[f32]) -> Vec<u8> {
    params.iter().flat_map(|p| p.to_le_bytes()).collect()
}

pub fn encode(model: &Model, training: Value, seed: u64) -> Vec<u8> {
    let body = params_bytes(model.params());
    let header = CheckpointHeader {
        version: VERSION,
        architecture: *model.architecture(),
        layer_groups: LayerGroup::ALL
            .iter()
            .map(|&g| {
                let r = model.group_range(g);
                (g, [r.start, r.end])
            })
            .collect(),
        param_count: model.param_count(),
        params_sha256: io::sha256_hex(&body),
        training,
        seed,
    };
    let h = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + 4 + h.len() + 32 + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(&sha2_raw(&h));
    out.extend_from_slice(&body);
    out
}

fn sha2_raw(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

pub fn decode(bytes: &[u8], name: &str) -> Result<(Model, CheckpointHeader), CheckpointError> {
    let corrupt = |msg: &str| CheckpointError::Corrupt {
        path: name.into(),
        msg: msg.into(),
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::Magic(name.into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let hend = 12 + hlen;
    if bytes.len() < hend + 32 {
        return Err(corrupt("truncated header"));
    }
    let h = &bytes[12..hend];
    if sha2_raw(h)[..] != bytes[hend..hend + 32] {
        return Err(CheckpointError::HeaderHash(name.into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(h).map_err(|e| corrupt(&e.to_string()))?;
    if header.version != VERSION {
        return Err(corrupt(&format!("unsupported version {}", header.version)));
    }
    let body = &bytes[hend + 32..];
    if body.len() != header.param_count * 4 {
        return Err(corrupt("parameter block length does not match the header"));
    }
    if io::sha256_hex(body) != header.params_sha256 {
        return Err(corrupt("parameter hash mismatch"));
    }
    let params: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let model =
        Model::from_params(header.architecture, params).map_err(|e| corrupt(&e.to_string()))?;
    for (&g, r) in &header.layer_groups {
        let actual = model.group_range(g);
        if [actual.start, actual.end] != *r {
            return Err(corrupt("layer group map does not match the architecture"));
        }
    }
    Ok((model, header))
}

pub fn save(path: &Path, model: &Model, training: Value, seed: u64) -> Result<(), CheckpointError> {
    io::write_bytes(path, &encode(model, training, seed))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, CheckpointHeader), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes, &path.display().to_string())
}
