//! Row-major pixel containers shared by the loaders, post-processing and
//! metrics.

use crate::error::{Error, Result};

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    pub h: usize,
    pub w: usize,
    pub values: Vec<u8>,
}

impl GrayRaster {
    pub fn new(h: usize, w: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::SizeMismatch(format!(
                "raster {h}x{w} needs {} values, got {}",
                h * w,
                values.len()
            )));
        }
        Ok(Self { h, w, values })
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.w + x]
    }
}

/// Binary raster; every value is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub h: usize,
    pub w: usize,
    pub values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::SizeMismatch(format!(
                "mask {h}x{w} needs {} values, got {}",
                h * w,
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(
                "binary mask values must be 0 or 1".into(),
            ));
        }
        Ok(Self { h, w, values })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            values: vec![0; h * w],
        }
    }

    pub fn ones(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            values: vec![1; h * w],
        }
    }

    /// Any nonzero gray value is foreground.
    pub fn from_gray(raster: &GrayRaster) -> Self {
        Self {
            h: raster.h,
            w: raster.w,
            values: raster.values.iter().map(|&v| u8::from(v > 0)).collect(),
        }
    }

    /// Render as 0/255 for PGM export.
    pub fn to_gray(&self) -> GrayRaster {
        GrayRaster {
            h: self.h,
            w: self.w,
            values: self.values.iter().map(|&v| v * 255).collect(),
        }
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.w + x]
    }
}

/// Per-pixel anomaly scores for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f32>,
}

impl AnomalyMap {
    pub fn new(h: usize, w: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::SizeMismatch(format!(
                "anomaly map {h}x{w} needs {} values, got {}",
                h * w,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "anomaly map has non-finite value at pixel {i}"
            )));
        }
        Ok(Self { h, w, values })
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.values
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.w + x]
    }
}
