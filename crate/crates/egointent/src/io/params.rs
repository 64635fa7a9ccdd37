//! Binary format for trained scorer parameters.
//!
//! Layout: `EGOI` magic, u32 version, then for each of the three layers
//! u32 input channels, u32 output channels, u32 kernel size, then every
//! coordinate f64 little-endian in declared order (layer by layer,
//! weights then biases), followed by an FNV-1a 64 checksum.

use std::path::Path;

use super::{seal, ByteReader};
use crate::error::{Error, Result};
use crate::learner::{ConvLayer, LearnerParams};

const MAGIC: &[u8; 4] = b"EGOI";
const VERSION: u32 = 1;
const WHAT: &str = "scorer parameters";

pub fn render_params(params: &LearnerParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut bytes = Vec::with_capacity(44 + params.coord_count() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    for layer in [&params.conv1, &params.conv2, &params.conv3] {
        bytes.extend_from_slice(&(layer.in_ch as u32).to_le_bytes());
        bytes.extend_from_slice(&(layer.out_ch as u32).to_le_bytes());
        bytes.extend_from_slice(&(layer.k as u32).to_le_bytes());
    }
    for i in 0..params.coord_count() {
        bytes.extend_from_slice(&params.get_coord(i).to_le_bytes());
    }
    Ok(seal(bytes))
}

pub fn save_params(params: &LearnerParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_params(params)?)?;
    Ok(())
}

pub fn parse_params(bytes: &[u8]) -> Result<LearnerParams> {
    let mut r = ByteReader::checked(bytes, WHAT)?;
    r.magic(MAGIC)?;
    let version = r.u32_le()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let mut layers = Vec::with_capacity(3);
    for _ in 0..3 {
        let in_ch = r.u32_le()? as usize;
        let out_ch = r.u32_le()? as usize;
        let k = r.u32_le()? as usize;
        if in_ch == 0 || out_ch == 0 || k == 0 || k % 2 == 0 || in_ch > 4096 || out_ch > 4096 {
            return Err(Error::CorruptArtifact(format!(
                "{WHAT}: implausible layer shape {in_ch}x{out_ch} k={k}"
            )));
        }
        layers.push(ConvLayer::zeros(in_ch, out_ch, k));
    }
    let mut params = match <[ConvLayer; 3]>::try_from(layers) {
        Ok([conv1, conv2, conv3]) => LearnerParams {
            conv1,
            conv2,
            conv3,
        },
        Err(_) => unreachable!("exactly three layers"),
    };
    for i in 0..params.coord_count() {
        let v = r.f64_le()?;
        params.set_coord(i, v);
    }
    r.finish()?;
    params
        .validate()
        .map_err(|e| Error::CorruptArtifact(format!("{WHAT}: {e}")))?;
    Ok(params)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<LearnerParams> {
    parse_params(&std::fs::read(path)?)
}
