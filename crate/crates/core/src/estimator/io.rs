//! Model file format.
//!
//! Layout: magic `WSAF`, one version byte, a length-prefixed UTF-8 JSON
//! header (architecture, embedding config), parameters as little-endian f32
//! in declaration order, and a trailing CRC-32 of everything after the
//! version byte.

use std::fs;
use std::path::Path;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{ArchDescriptor, EstimatorError, Model};
use crate::phoc::PhocConfig;

const MAGIC: &[u8; 4] = b"WSAF";
const VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    desc: ArchDescriptor,
    phoc: PhocConfig,
}

fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xedb8_8320 & mask);
        }
    }
    !crc
}

/// Writes a model file. Parameters are stored as f32 regardless of the
/// in-memory float type.
pub fn save_model<F: Float>(model: &Model<F>, path: impl AsRef<Path>) -> Result<(), EstimatorError> {
    let header = serde_json::to_vec(&Header {
        desc: model.desc.clone(),
        phoc: model.phoc.clone(),
    })
    .expect("header serializes");
    let mut payload = Vec::with_capacity(4 + header.len() + model.params.len() * 4);
    payload.extend_from_slice(&(header.len() as u32).to_le_bytes());
    payload.extend_from_slice(&header);
    for &p in &model.params {
        payload.extend_from_slice(&(p.to_f32().unwrap()).to_le_bytes());
    }
    let mut out = Vec::with_capacity(payload.len() + 9);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&payload).to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

/// Reads a model file written by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<Model<f32>, EstimatorError> {
    let data = fs::read(path)?;
    let malformed = |m: &str| EstimatorError::MalformedModel(m.into());
    if data.len() < 13 || &data[..4] != MAGIC {
        return Err(malformed("missing magic"));
    }
    if data[4] != VERSION {
        return Err(EstimatorError::VersionMismatch(data[4]));
    }
    let payload = &data[5..data.len() - 4];
    let stored = u32::from_le_bytes(data[data.len() - 4..].try_into().unwrap());
    if crc32(payload) != stored {
        return Err(EstimatorError::ChecksumMismatch);
    }
    let header_len =
        u32::from_le_bytes(payload.get(..4).ok_or_else(|| malformed("short header"))?.try_into().unwrap())
            as usize;
    let header_bytes = payload
        .get(4..4 + header_len)
        .ok_or_else(|| malformed("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| EstimatorError::MalformedModel(format!("bad header: {e}")))?;
    let param_bytes = &payload[4 + header_len..];
    if param_bytes.len() % 4 != 0 {
        return Err(malformed("ragged parameter block"));
    }
    let params: Vec<f32> = param_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Model::from_parts(header.desc, header.phoc, params)
}
