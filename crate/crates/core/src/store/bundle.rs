use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which half of the combined design a bundle feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    /// Patch scores become pixel maps.
    Segmentation,
    /// Patch scores become image scores; global features drive re-scoring.
    Classification,
}

impl std::fmt::Display for Purpose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Purpose::Segmentation => "segmentation",
            Purpose::Classification => "classification",
        })
    }
}

/// Patch features of one backbone layer, laid out image-major, then
/// patch-major (row-major over the grid), then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    layer_id: i64,
    dim: usize,
    data: Vec<f32>,
}

impl LayerFeatures {
    pub fn new(layer_id: i64, dim: usize, data: Vec<f32>) -> Self {
        Self {
            layer_id,
            dim,
            data,
        }
    }

    pub fn layer_id(&self) -> i64 {
        self.layer_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// One global descriptor per image, row-major `n_images × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeatures {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl GlobalFeatures {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }
}

/// Validated patch features for every test image.
///
/// Construction checks every invariant, so any value of this type has
/// consistent shapes and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    purpose: Purpose,
    n_images: usize,
    grid_h: usize,
    grid_w: usize,
    layers: Vec<LayerFeatures>,
    global: Option<GlobalFeatures>,
}

impl FeatureBundle {
    pub fn new(
        purpose: Purpose,
        n_images: usize,
        grid_h: usize,
        grid_w: usize,
        layers: Vec<LayerFeatures>,
        global: Option<GlobalFeatures>,
    ) -> Result<Self> {
        if n_images < 2 {
            return Err(Error::ShapeMismatch(format!(
                "a bundle needs at least 2 images, got {n_images}"
            )));
        }
        if grid_h == 0 || grid_w == 0 {
            return Err(Error::ShapeMismatch("patch grid must be non-empty".into()));
        }
        if layers.is_empty() {
            return Err(Error::ShapeMismatch(
                "a bundle needs at least one layer".into(),
            ));
        }
        let n_patches = grid_h * grid_w;
        let mut seen = HashSet::new();
        for layer in &layers {
            if !seen.insert(layer.layer_id) {
                return Err(Error::ShapeMismatch(format!(
                    "layer id {} appears twice",
                    layer.layer_id
                )));
            }
            if layer.dim == 0 {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} has zero feature dimension",
                    layer.layer_id
                )));
            }
            let expected = n_images * n_patches * layer.dim;
            if layer.data.len() != expected {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}: expected {expected} values ({n_images}x{n_patches}x{}), got {}",
                    layer.layer_id,
                    layer.dim,
                    layer.data.len()
                )));
            }
            if let Some(pos) = layer.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer_id: layer.layer_id,
                    image: pos / (n_patches * layer.dim),
                });
            }
        }
        if let Some(g) = &global {
            if g.dim == 0 || g.data.len() != n_images * g.dim {
                return Err(Error::ShapeMismatch(format!(
                    "global features: expected {n_images} rows of dim {}, got {} values",
                    g.dim,
                    g.data.len()
                )));
            }
            for i in 0..n_images {
                let row = g.row(i);
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGlobal { image: i });
                }
                if row.iter().all(|&v| v == 0.0) {
                    return Err(Error::ZeroNormRow { image: i });
                }
            }
        }
        Ok(Self {
            purpose,
            n_images,
            grid_h,
            grid_w,
            layers,
            global,
        })
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn layers(&self) -> &[LayerFeatures] {
        &self.layers
    }

    pub fn global_features(&self) -> Option<&GlobalFeatures> {
        self.global.as_ref()
    }

    /// Feature vector of one patch.
    pub fn patch(&self, layer: usize, image: usize, patch: usize) -> &[f32] {
        let l = &self.layers[layer];
        let start = (image * self.n_patches() + patch) * l.dim;
        &l.data[start..start + l.dim]
    }
}
