//! Binary PGM (P5, maxval 255) reader and writer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::GrayRaster;

pub fn load_gray_raster(path: impl AsRef<Path>) -> Result<GrayRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn write_gray_raster(path: impl AsRef<Path>, raster: &GrayRaster) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(raster)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(raster: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.w, raster.h).into_bytes();
    out.extend_from_slice(&raster.values);
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayRaster> {
    let header_err = |message: &str| Error::PgmHeader {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(header_err("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(header_err("header ends early")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(header_err("expected a decimal header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| header_err("header field out of range"))?;
    }
    let [w, h, maxval] = fields;
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(header_err("missing whitespace after maxval")),
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: format!("maxval {maxval} (only 255 is supported)"),
        });
    }
    if w == 0 || h == 0 {
        return Err(header_err("zero-sized raster"));
    }
    let expected = h
        .checked_mul(w)
        .ok_or_else(|| header_err("raster dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    GrayRaster::new(h, w, payload[..expected].to_vec())
}
