//! File formats for datasets, artifacts, and reports.
//!
//! Text formats (datasets, evaluation records) print floats in Rust's
//! shortest round-trip form, so save followed by load reproduces every
//! value bit for bit. Binary artifacts (location priors, scorer
//! parameters) are little-endian with a trailing FNV-1a 64 checksum over
//! everything before it; loads reject bad magic, unsupported versions,
//! truncation, trailing bytes, and checksum mismatches.

pub mod dataset;
pub mod params;
pub mod pgm;
pub mod prior;
pub mod report;

use crate::error::{Error, Result};

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Cursor over a checksummed binary artifact. `what` names the artifact
/// kind in error messages.
struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    /// Verifies the trailing checksum, then positions the cursor over the
    /// protected prefix.
    fn checked(buf: &'a [u8], what: &'static str) -> Result<Self> {
        if buf.len() < 8 {
            return Err(Error::CorruptArtifact(format!("{what}: truncated")));
        }
        let (body, tail) = buf.split_at(buf.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        if fnv1a64(body) != stored {
            return Err(Error::CorruptArtifact(format!("{what}: checksum mismatch")));
        }
        Ok(ByteReader {
            buf: body,
            pos: 0,
            what,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptArtifact(format!("{}: truncated", self.what)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        if self.take(4)? != expected {
            return Err(Error::CorruptArtifact(format!(
                "{}: unrecognized file magic",
                self.what
            )));
        }
        Ok(())
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptArtifact(format!(
                "{}: trailing bytes",
                self.what
            )));
        }
        Ok(())
    }
}

/// Appends the FNV-1a checksum of everything written so far.
fn seal(mut bytes: Vec<u8>) -> Vec<u8> {
    let sum = fnv1a64(&bytes);
    bytes.extend_from_slice(&sum.to_le_bytes());
    bytes
}
