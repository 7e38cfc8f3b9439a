//! Mutual scoring.
//!
//! A patch is scored against every other test image: for each other image
//! take the cosine distance to its closest patch, then average the `K`
//! smallest of those per-image minima. Normal patches recur across the test
//! set and find close counterparts almost everywhere; anomalous ones do not.
//!
//! The all-pairs distance kernel is the hot loop. It runs in tiles of query
//! and key patches sized from a memory budget, and in parallel over query
//! images. Each dot product is accumulated in a fixed order, so results do
//! not depend on tile sizes or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lnamd::AggregatedBundle;

pub const DEFAULT_INTERVAL_FRACTION: f64 = 0.3;
pub const DEFAULT_MEM_BUDGET_BYTES: usize = 1 << 30;

/// Upper bound on a tile side, keeps key tiles cache resident.
const MAX_TILE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsmConfig {
    /// Fraction of the other images whose minima are averaged.
    pub interval_fraction: f64,
    /// Bound on the distance-tile working set, shared by all workers.
    pub mem_budget_bytes: usize,
}

impl Default for MsmConfig {
    fn default() -> Self {
        Self {
            interval_fraction: DEFAULT_INTERVAL_FRACTION,
            mem_budget_bytes: DEFAULT_MEM_BUDGET_BYTES,
        }
    }
}

impl MsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_fraction > 0.0 && self.interval_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "interval_fraction must lie in (0, 1], got {}",
                self.interval_fraction
            )));
        }
        if self.mem_budget_bytes == 0 {
            return Err(Error::InvalidArgument(
                "memory budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of smallest per-image minima averaged, `max(1, ⌊f·others⌋)`.
    pub fn interval_len(&self, n_others: usize) -> usize {
        ((self.interval_fraction * n_others as f64).floor() as usize).clamp(1, n_others.max(1))
    }

    fn tile_sides(&self, n_patches: usize) -> (usize, usize) {
        let workers = rayon::current_num_threads().max(1);
        let per_worker = (self.mem_budget_bytes / workers).max(4);
        let side = ((per_worker / 4) as f64).sqrt() as usize;
        let side = side.clamp(1, MAX_TILE).min(n_patches);
        (side, side)
    }
}

/// Per-patch minimum distances of one query image, `n_patches × (n_images − 1)`.
/// Column `c` is the `c`-th other image in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// Scores of one (layer, degree) pair, `n_images × n_patches`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSlice {
    pub layer_id: i64,
    pub degree: usize,
    pub n_images: usize,
    pub n_patches: usize,
    pub scores: Vec<f64>,
}

impl ScoreSlice {
    pub fn image(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_patches..(i + 1) * self.n_patches]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchScoreSet {
    pub n_images: usize,
    pub n_patches: usize,
    pub slices: Vec<ScoreSlice>,
    /// Entrywise mean over all slices.
    pub combined: Vec<f64>,
}

impl PatchScoreSet {
    pub fn image(&self, i: usize) -> &[f64] {
        &self.combined[i * self.n_patches..(i + 1) * self.n_patches]
    }
}

fn check_input(agg: &AggregatedBundle) -> Result<()> {
    if agg.n_images < 2 {
        return Err(Error::InvalidArgument(
            "mutual scoring needs at least two images".into(),
        ));
    }
    if !agg.normalized {
        return Err(Error::InvalidArgument(
            "mutual scoring expects unit-normalized patch vectors".into(),
        ));
    }
    Ok(())
}

/// Fixed-order f32 dot product with eight independent accumulators.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    for k in chunks * 8..a.len() {
        acc[k - chunks * 8] += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// For every patch of `query`, the largest dot product with any patch of
/// `keys`, computed tile by tile.
fn max_dots(
    query: &[f32],
    keys: &[f32],
    dim: usize,
    tile: (usize, usize),
    out: &mut [f32],
    buf: &mut Vec<f32>,
) {
    let nq = query.len() / dim;
    let nk = keys.len() / dim;
    out.fill(f32::NEG_INFINITY);
    let (tq, tk) = tile;
    buf.resize(tq * tk, 0.0);
    for q0 in (0..nq).step_by(tq) {
        let q1 = (q0 + tq).min(nq);
        for k0 in (0..nk).step_by(tk) {
            let k1 = (k0 + tk).min(nk);
            let width = k1 - k0;
            for q in q0..q1 {
                let qv = &query[q * dim..(q + 1) * dim];
                let row = &mut buf[(q - q0) * width..(q - q0 + 1) * width];
                for (slot, k) in row.iter_mut().zip(k0..k1) {
                    *slot = dot(qv, &keys[k * dim..(k + 1) * dim]);
                }
            }
            for q in q0..q1 {
                let row = &buf[(q - q0) * width..(q - q0 + 1) * width];
                let m = row.iter().copied().fold(out[q], f32::max);
                out[q] = m;
            }
        }
    }
}

#[inline]
fn to_distance(max_dot: f32) -> f64 {
    (1.0 - f64::from(max_dot)).clamp(0.0, 2.0)
}

fn cross_distances(
    agg: &AggregatedBundle,
    layer: usize,
    query: usize,
    tile: (usize, usize),
) -> DistanceMatrix {
    let n_patches = agg.n_patches();
    let dim = agg.layers[layer].dim;
    let cols = agg.n_images - 1;
    let q = agg.image(layer, query);
    let mut data = vec![0f64; n_patches * cols];
    let mut best = vec![0f32; n_patches];
    let mut buf = Vec::new();
    for (col, j) in (0..agg.n_images).filter(|&j| j != query).enumerate() {
        max_dots(q, agg.image(layer, j), dim, tile, &mut best, &mut buf);
        for (p, &m) in best.iter().enumerate() {
            data[p * cols + col] = to_distance(m);
        }
    }
    DistanceMatrix {
        rows: n_patches,
        cols,
        data,
    }
}

/// Minimum cosine distance from each patch of `query_image` to every other image.
pub fn min_cross_distances(
    agg: &AggregatedBundle,
    layer: usize,
    query_image: usize,
    cfg: &MsmConfig,
) -> Result<DistanceMatrix> {
    check_input(agg)?;
    if layer >= agg.layers.len() || query_image >= agg.n_images {
        return Err(Error::InvalidArgument(
            "layer or image index out of range".into(),
        ));
    }
    Ok(cross_distances(
        agg,
        layer,
        query_image,
        cfg.tile_sides(agg.n_patches()),
    ))
}

/// Mean of the `k` smallest entries. Ties are broken by column index, which
/// leaves the mean unchanged but fixes the summation order.
pub fn interval_average(row: &[f64], k: usize) -> f64 {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx[..k].iter().map(|&c| row[c]).sum::<f64>() / k as f64
}

/// One score slice per layer of `agg`.
pub fn mutual_score(agg: &AggregatedBundle, cfg: &MsmConfig) -> Result<Vec<ScoreSlice>> {
    check_input(agg)?;
    cfg.validate()?;
    let n_patches = agg.n_patches();
    let k = cfg.interval_len(agg.n_images - 1);
    let tile = cfg.tile_sides(n_patches);
    let slices = (0..agg.layers.len())
        .map(|layer| {
            let per_image: Vec<Vec<f64>> = (0..agg.n_images)
                .into_par_iter()
                .map(|i| {
                    let dist = cross_distances(agg, layer, i, tile);
                    (0..n_patches)
                        .map(|p| interval_average(dist.row(p), k))
                        .collect()
                })
                .collect();
            ScoreSlice {
                layer_id: agg.layers[layer].layer_id,
                degree: agg.degree,
                n_images: agg.n_images,
                n_patches,
                scores: per_image.concat(),
            }
        })
        .collect();
    Ok(slices)
}

/// Entrywise arithmetic mean of all slices.
pub fn combine(slices: Vec<ScoreSlice>) -> Result<PatchScoreSet> {
    let first = slices
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to combine".into()))?;
    let (n_images, n_patches) = (first.n_images, first.n_patches);
    if let Some(bad) = slices.iter().find(|s| {
        s.n_images != n_images || s.n_patches != n_patches || s.scores.len() != n_images * n_patches
    }) {
        return Err(Error::ShapeMismatch(format!(
            "score slice (layer {}, degree {}) is {}x{}, expected {n_images}x{n_patches}",
            bad.layer_id, bad.degree, bad.n_images, bad.n_patches
        )));
    }
    let mut combined = vec![0f64; n_images * n_patches];
    for s in &slices {
        for (c, v) in combined.iter_mut().zip(&s.scores) {
            *c += v;
        }
    }
    let count = slices.len() as f64;
    combined.iter_mut().for_each(|c| *c /= count);
    Ok(PatchScoreSet {
        n_images,
        n_patches,
        slices,
        combined,
    })
}
