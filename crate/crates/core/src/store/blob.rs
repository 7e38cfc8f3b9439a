//! Headerless little-endian f32 blobs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_f32_blob(path: &Path, expected_len: Option<usize>) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} bytes is not a whole number of f32 values",
            path.display(),
            bytes.len()
        )));
    }
    if let Some(n) = expected_len {
        if bytes.len() != n * 4 {
            return Err(Error::ShapeMismatch(format!(
                "{}: expected {} bytes ({n} f32 values), found {}",
                path.display(),
                n * 4,
                bytes.len()
            )));
        }
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f32_blob(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
