#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsad_core::raster::{AnomalyMap, BinaryMask};
use zsad_core::store::{GlobalFeatures, LayerFeatures};
use zsad_core::{FeatureBundle, Purpose};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

pub fn bundle_from(
    n: usize,
    gh: usize,
    gw: usize,
    layers: Vec<(usize, Vec<f32>)>,
) -> FeatureBundle {
    let layers = layers
        .into_iter()
        .enumerate()
        .map(|(i, (dim, data))| LayerFeatures::new(6 * i as i64 + 5, dim, data))
        .collect();
    FeatureBundle::new(Purpose::Segmentation, n, gh, gw, layers, None).unwrap()
}

pub fn random_bundle(
    rng: &mut ChaCha8Rng,
    n: usize,
    gh: usize,
    gw: usize,
    dims: &[usize],
) -> FeatureBundle {
    let layers = dims
        .iter()
        .map(|&d| (d, uniform_vec(rng, n * gh * gw * d)))
        .collect();
    bundle_from(n, gh, gw, layers)
}

pub fn random_global(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> GlobalFeatures {
    GlobalFeatures {
        dim,
        data: uniform_vec(rng, n * dim),
    }
}

/// Scores drawn from a handful of levels so that ties occur.
pub fn tied_scores(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<f64> {
    (0..n)
        .map(|_| f64::from(rng.random_range(0..levels)) / 4.0)
        .collect()
}

/// Labels with at least one of each class.
pub fn mixed_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    labels[0] = 0;
    labels[n - 1] = 1;
    labels
}

pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, levels: u32) -> AnomalyMap {
    let values = (0..h * w)
        .map(|_| rng.random_range(0..levels) as f32 / levels as f32)
        .collect();
    AnomalyMap::new(h, w, values).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    let values = (0..h * w).map(|_| u8::from(rng.random_bool(p))).collect();
    BinaryMask::new(h, w, values).unwrap()
}

/// A mask made of a few random axis-aligned rectangles.
pub fn blob_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, n_rects: usize) -> BinaryMask {
    let mut mask = BinaryMask::zeros(h, w);
    for _ in 0..n_rects {
        let (rh, rw) = (
            rng.random_range(1..=h / 3 + 1),
            rng.random_range(1..=w / 3 + 1),
        );
        let (y0, x0) = (rng.random_range(0..=h - rh), rng.random_range(0..=w - rw));
        for y in y0..y0 + rh {
            mask.values[y * w + x0..y * w + x0 + rw].fill(1);
        }
    }
    mask
}
