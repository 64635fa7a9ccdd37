//! Binary format for location prior artifacts.
//!
//! Layout: `EGOP` magic, u32 version, u32 width, u32 height, u64 image
//! count, then width*height f64 mask values row-major, all little-endian,
//! followed by an FNV-1a 64 checksum of everything before it.

use std::path::Path;

use super::{seal, ByteReader};
use crate::error::{Error, Result};
use crate::grid::{GridDims, HeatMap};
use crate::priors::LocationPriorArtifact;

const MAGIC: &[u8; 4] = b"EGOP";
const VERSION: u32 = 1;
const WHAT: &'static str = "location prior";

pub fn render_prior(prior: &LocationPriorArtifact) -> Result<Vec<u8>> {
    prior.validate()?;
    let mut bytes = Vec::with_capacity(24 + prior.mean_mask.as_slice().len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(prior.dims.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(prior.dims.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&prior.image_count.to_le_bytes());
    for &v in prior.mean_mask.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(seal(bytes))
}

pub fn save_prior(prior: &LocationPriorArtifact, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_prior(prior)?)?;
    Ok(())
}

pub fn parse_prior(bytes: &[u8]) -> Result<LocationPriorArtifact> {
    let mut r = ByteReader::checked(bytes, WHAT)?;
    r.magic(MAGIC)?;
    let version = r.u32_le()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let width = r.u32_le()? as usize;
    let height = r.u32_le()? as usize;
    let image_count = r.u64_le()?;
    let dims = GridDims::new(width, height)
        .map_err(|e| Error::CorruptArtifact(format!("{WHAT}: {e}")))?;
    let mut values = Vec::with_capacity(dims.pixel_count());
    for _ in 0..dims.pixel_count() {
        values.push(r.f64_le()?);
    }
    r.finish()?;
    let mean_mask = HeatMap::from_values(dims, values)
        .map_err(|e| Error::CorruptArtifact(format!("{WHAT}: {e}")))?;
    let prior = LocationPriorArtifact {
        dims,
        mean_mask,
        image_count,
    };
    prior
        .validate()
        .map_err(|e| Error::CorruptArtifact(format!("{WHAT}: {e}")))?;
    Ok(prior)
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<LocationPriorArtifact> {
    parse_prior(&std::fs::read(path)?)
}
