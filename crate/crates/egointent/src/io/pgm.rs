//! 8-bit binary PGM (P5) export and import for heat maps and rendered
//! frames. Values in [0,1] quantize to bytes by round-half-up; loading
//! maps byte b to b/255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridDims, HeatMap};

pub fn render_pgm(map: &HeatMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(32 + map.as_slice().len());
    out.extend_from_slice(
        format!("P5\n{} {}\n255\n", map.dims().width(), map.dims().height()).as_bytes(),
    );
    for &v in map.as_slice() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!(
                "pixel value {v} outside [0,1] cannot be quantized"
            )));
        }
        out.push((255.0 * v + 0.5).floor() as u8);
    }
    Ok(out)
}

pub fn save_pgm(map: &HeatMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_pgm(map)?)?;
    Ok(())
}

pub fn parse_pgm(bytes: &[u8]) -> Result<HeatMap> {
    let corrupt = |msg: &str| Error::CorruptArtifact(format!("pgm image: {msg}"));
    // Header: three whitespace-separated tokens after the magic, with
    // optional `#` comment lines, then exactly one whitespace byte.
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(corrupt("not a binary pgm (P5) file"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        while pos < bytes.len() {
            match bytes[pos] {
                b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("digits are utf-8")
            .parse()
            .map_err(|_| corrupt("header value out of range"))?;
    }
    match bytes.get(pos) {
        Some(b' ' | b'\t' | b'\r' | b'\n') => pos += 1,
        _ => return Err(corrupt("malformed header")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(corrupt("only 8-bit images are supported"));
    }
    let dims = GridDims::new(width, height).map_err(|e| corrupt(&e.to_string()))?;
    let payload = &bytes[pos..];
    if payload.len() != dims.pixel_count() {
        return Err(corrupt("payload size does not match header"));
    }
    let values = payload.iter().map(|&b| b as f64 / 255.0).collect();
    HeatMap::from_values(dims, values).map_err(|e| corrupt(&e.to_string()))
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<HeatMap> {
    parse_pgm(&std::fs::read(path)?)
}

/// Equal-weight blend of a rendered frame and a heat map, for visual
/// inspection of predictions.
pub fn overlay(image: &HeatMap, map: &HeatMap) -> Result<HeatMap> {
    if image.dims() != map.dims() {
        return Err(Error::invalid(format!(
            "overlay size mismatch: image {}x{}, map {}x{}",
            image.dims().width(),
            image.dims().height(),
            map.dims().width(),
            map.dims().height()
        )));
    }
    let values = image
        .as_slice()
        .iter()
        .zip(map.as_slice())
        .map(|(&a, &b)| 0.5 * a + 0.5 * b)
        .collect();
    HeatMap::from_values(image.dims(), values)
}
