//! Local neighborhood aggregation with multiple degrees.
//!
//! Each patch feature is replaced by the mean of the features in the `r×r`
//! window centered on it. Windows are clipped at the grid border and the
//! mean runs over the cells that remain, so the grid keeps its size and a
//! constant field stays constant. The aggregated vectors are then scaled to
//! unit length so that `1 − ⟨a, b⟩` is a cosine distance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::FeatureBundle;

/// Default degrees of the final configuration.
pub const DEFAULT_DEGREES: [usize; 2] = [1, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedLayer {
    pub layer_id: i64,
    pub dim: usize,
    /// `n_images × n_patches × dim`, same layout as the source layer.
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedBundle {
    pub degree: usize,
    pub n_images: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub layers: Vec<AggregatedLayer>,
    pub normalized: bool,
}

impl AggregatedBundle {
    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// All patch vectors of one image in one layer, `n_patches × dim`.
    pub fn image(&self, layer: usize, image: usize) -> &[f32] {
        let l = &self.layers[layer];
        let stride = self.n_patches() * l.dim;
        &l.data[image * stride..(image + 1) * stride]
    }

    pub fn patch(&self, layer: usize, image: usize, patch: usize) -> &[f32] {
        let dim = self.layers[layer].dim;
        &self.image(layer, image)[patch * dim..(patch + 1) * dim]
    }
}

pub fn check_degree(r: usize, grid_h: usize, grid_w: usize) -> Result<()> {
    if r == 0 || r % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "aggregation degree must be odd and positive, got {r}"
        )));
    }
    if r > grid_h.min(grid_w) {
        return Err(Error::InvalidArgument(format!(
            "aggregation degree {r} exceeds the {grid_h}x{grid_w} patch grid"
        )));
    }
    Ok(())
}

/// Clipped-window mean followed by L2 normalization of every patch vector.
pub fn aggregate(bundle: &FeatureBundle, r: usize) -> Result<AggregatedBundle> {
    aggregate_impl(bundle, r, true)
}

/// Clipped-window mean without the normalization step.
pub fn aggregate_unnormalized(bundle: &FeatureBundle, r: usize) -> Result<AggregatedBundle> {
    aggregate_impl(bundle, r, false)
}

fn aggregate_impl(bundle: &FeatureBundle, r: usize, normalize: bool) -> Result<AggregatedBundle> {
    let (gh, gw) = (bundle.grid_h(), bundle.grid_w());
    check_degree(r, gh, gw)?;
    let n_patches = gh * gw;
    let layers = bundle
        .layers()
        .iter()
        .map(|layer| {
            let dim = layer.dim();
            let stride = n_patches * dim;
            let mut out = vec![0f32; layer.data().len()];
            out.par_chunks_mut(stride)
                .zip(layer.data().par_chunks(stride))
                .for_each(|(dst, src)| aggregate_image(src, dst, gh, gw, dim, r, normalize));
            AggregatedLayer {
                layer_id: layer.layer_id(),
                dim,
                data: out,
            }
        })
        .collect();
    Ok(AggregatedBundle {
        degree: r,
        n_images: bundle.n_images(),
        grid_h: gh,
        grid_w: gw,
        layers,
        normalized: normalize,
    })
}

fn aggregate_image(
    src: &[f32],
    dst: &mut [f32],
    gh: usize,
    gw: usize,
    dim: usize,
    r: usize,
    normalize: bool,
) {
    let half = r / 2;
    let mut acc = vec![0f64; dim];
    for y in 0..gh {
        let (y0, y1) = (y.saturating_sub(half), (y + half).min(gh - 1));
        for x in 0..gw {
            let (x0, x1) = (x.saturating_sub(half), (x + half).min(gw - 1));
            acc.fill(0.0);
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let p = (yy * gw + xx) * dim;
                    for (a, &v) in acc.iter_mut().zip(&src[p..p + dim]) {
                        *a += f64::from(v);
                    }
                }
            }
            let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            let mut scale = 1.0 / count;
            if normalize {
                let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt() / count;
                // A zero mean vector stays zero; it sits at distance 1 from everything.
                if norm > 0.0 {
                    scale /= norm;
                }
            }
            let out = &mut dst[(y * gw + x) * dim..(y * gw + x + 1) * dim];
            for (o, a) in out.iter_mut().zip(&acc) {
                *o = (a * scale) as f32;
            }
        }
    }
}
