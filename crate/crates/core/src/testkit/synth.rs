//! Seeded synthetic test sets with planted anomalies.
//!
//! Normal patches sit near one of `n_clusters` centers. The centers are the
//! first standard basis vectors, so they are exactly orthogonal, and each
//! grid position draws its center once for the whole set: the same
//! structure recurs in every image. Anomalous images carry a square block of
//! patches pointing away from every center by at least `anomaly_offset` in
//! cosine distance.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`)
//! and Gaussian noise from `rand_distr::StandardNormal`, both portable and
//! fully determined by the seed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayRaster};
use crate::store::{
    save_bundle, save_ground_truth, write_gray_raster, DatasetManifest, FeatureBundle,
    GlobalFeatures, GroundTruth, LayerFeatures, Purpose,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_images: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub n_clusters: usize,
    /// Fraction of images with a planted block; `round(rate · n_images)` images.
    pub anomaly_rate: f64,
    /// Minimum cosine distance of planted vectors from every center.
    pub anomaly_offset: f64,
    pub seed: u64,
    pub n_layers: usize,
    /// Side of the planted square block, in patches.
    pub block: usize,
    /// Pixels per patch side in the rasters and masks.
    pub patch_px: usize,
    /// Norm of the Gaussian perturbation added to normal patches.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_images: 32,
            grid_h: 14,
            grid_w: 14,
            dim: 64,
            n_clusters: 4,
            anomaly_rate: 0.25,
            anomaly_offset: 0.8,
            seed: 7,
            n_layers: 2,
            block: 3,
            patch_px: 16,
            noise: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_images < 2 {
            return bad(format!("n_images must be >= 2, got {}", self.n_images));
        }
        if self.grid_h == 0
            || self.grid_w == 0
            || self.dim == 0
            || self.n_layers == 0
            || self.patch_px == 0
        {
            return bad("grid, dim, n_layers and patch_px must be positive".into());
        }
        if self.n_clusters == 0 {
            return bad("n_clusters must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.anomaly_rate) {
            return bad(format!(
                "anomaly_rate must lie in [0, 1), got {}",
                self.anomaly_rate
            ));
        }
        if !(self.anomaly_offset > 0.0) {
            return bad(format!(
                "anomaly_offset must be positive, got {}",
                self.anomaly_offset
            ));
        }
        if self.block == 0 || self.block > self.grid_h.min(self.grid_w) {
            return bad(format!("block {} does not fit the grid", self.block));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be >= 0".into());
        }
        if self.n_clusters > self.dim {
            return Err(Error::Infeasible(format!(
                "{} orthogonal centers do not fit in dimension {}",
                self.n_clusters, self.dim
            )));
        }
        self.anomaly_mix().map(|_| ())
    }

    pub fn n_anomalous(&self) -> usize {
        (self.anomaly_rate * self.n_images as f64).round() as usize
    }

    pub fn image_h(&self) -> usize {
        self.grid_h * self.patch_px
    }

    pub fn image_w(&self) -> usize {
        self.grid_w * self.patch_px
    }

    /// Weights `(alpha, beta)` of a planted vector `−alpha·m + beta·u`, where
    /// `m` is the normalized sum of the centers and `u` a unit vector
    /// orthogonal to all of them. Its cosine distance to every center is
    /// `1 + alpha/√C`.
    fn anomaly_mix(&self) -> Result<(f64, f64)> {
        let c = self.n_clusters as f64;
        let has_complement = self.dim > self.n_clusters;
        let alpha = if has_complement {
            (self.anomaly_offset - 1.0).max(0.0) * c.sqrt()
        } else {
            1.0
        };
        let reach = 1.0 + alpha / c.sqrt();
        if alpha > 1.0 || self.anomaly_offset > reach + 1e-12 || self.anomaly_offset > 2.0 {
            return Err(Error::Infeasible(format!(
                "no direction lies {} (cosine distance) from {} orthogonal centers in dimension {}",
                self.anomaly_offset, self.n_clusters, self.dim
            )));
        }
        Ok((alpha, (1.0 - alpha * alpha).max(0.0).sqrt()))
    }
}

/// Everything generated for one synthetic test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub image_ids: Vec<String>,
    pub segmentation: FeatureBundle,
    /// Same patch features as `segmentation`, plus global features.
    pub classification: FeatureBundle,
    pub ground_truth: GroundTruth,
    pub rasters: Vec<GrayRaster>,
    /// Top-left patch of each planted block, `None` for normal images.
    pub blocks: Vec<Option<(usize, usize)>>,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn synth_bundle(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let (alpha, beta) = spec.anomaly_mix()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (gh, gw, d, c) = (spec.grid_h, spec.grid_w, spec.dim, spec.n_clusters);
    let n_patches = gh * gw;

    let center_of: Vec<usize> = (0..n_patches).map(|_| rng.random_range(0..c)).collect();

    let mut order: Vec<usize> = (0..spec.n_images).collect();
    order.shuffle(&mut rng);
    let mut anomalous = order[..spec.n_anomalous()].to_vec();
    anomalous.sort_unstable();

    // Blocks stay off the outer ring of patches when the grid allows it, so
    // they fall inside the raster's foreground object.
    let inner = |g: usize| {
        if g >= spec.block + 2 {
            (1, g - 1 - spec.block)
        } else {
            (0, g - spec.block)
        }
    };
    let (ylo, yhi) = inner(gh);
    let (xlo, xhi) = inner(gw);
    let blocks: Vec<Option<(usize, usize)>> = (0..spec.n_images)
        .map(|i| {
            anomalous
                .binary_search(&i)
                .ok()
                .map(|_| (rng.random_range(ylo..=yhi), rng.random_range(xlo..=xhi)))
        })
        .collect();
    let in_block = |i: usize, p: usize| {
        blocks[i].is_some_and(|(by, bx)| {
            let (y, x) = (p / gw, p % gw);
            (by..by + spec.block).contains(&y) && (bx..bx + spec.block).contains(&x)
        })
    };

    let mean_center: Vec<f64> = (0..d)
        .map(|k| if k < c { 1.0 / (c as f64).sqrt() } else { 0.0 })
        .collect();
    let noise_scale = spec.noise / (d as f64).sqrt();
    let mut layers = Vec::with_capacity(spec.n_layers);
    let mut v = vec![0f64; d];
    for l in 0..spec.n_layers {
        let mut data = Vec::with_capacity(spec.n_images * n_patches * d);
        for i in 0..spec.n_images {
            for p in 0..n_patches {
                if in_block(i, p) {
                    let mut u = vec![0f64; d - c];
                    if !u.is_empty() {
                        while u.iter().all(|&x| x == 0.0) {
                            u.iter_mut().for_each(|x| *x = gaussian(&mut rng));
                        }
                        normalize(&mut u);
                    }
                    for k in 0..d {
                        let orth = if k >= c { u[k - c] } else { 0.0 };
                        v[k] = -alpha * mean_center[k] + beta * orth;
                    }
                } else {
                    for (k, x) in v.iter_mut().enumerate() {
                        *x = noise_scale * gaussian(&mut rng)
                            + if k == center_of[p] { 1.0 } else { 0.0 };
                    }
                }
                normalize(&mut v);
                data.extend(v.iter().map(|&x| x as f32));
            }
        }
        layers.push(LayerFeatures::new((6 * l + 5) as i64, d, data));
    }

    // Global descriptor: mean patch vector of the deepest layer.
    let last = layers.last().expect("at least one layer").data();
    let mut global = Vec::with_capacity(spec.n_images * d);
    for i in 0..spec.n_images {
        let img = &last[i * n_patches * d..(i + 1) * n_patches * d];
        for k in 0..d {
            let s: f64 = img.chunks_exact(d).map(|p| f64::from(p[k])).sum();
            global.push((s / n_patches as f64) as f32);
        }
    }

    let segmentation = FeatureBundle::new(
        Purpose::Segmentation,
        spec.n_images,
        gh,
        gw,
        layers.clone(),
        None,
    )?;
    let classification = FeatureBundle::new(
        Purpose::Classification,
        spec.n_images,
        gh,
        gw,
        layers,
        Some(GlobalFeatures {
            dim: d,
            data: global,
        }),
    )?;

    let (h, w, px) = (spec.image_h(), spec.image_w(), spec.patch_px);
    let labels = blocks.iter().map(|b| u8::from(b.is_some())).collect();
    let masks = blocks
        .iter()
        .map(|b| {
            let mut m = BinaryMask::zeros(h, w);
            if let Some((by, bx)) = *b {
                for y in by * px..(by + spec.block) * px {
                    m.values[y * w + bx * px..y * w + (bx + spec.block) * px].fill(1);
                }
            }
            Some(m)
        })
        .collect();
    let ground_truth = GroundTruth::new(labels, masks, h, w)?;

    let raster = {
        let values = (0..h * w)
            .map(|q| {
                let (y, x) = (q / w / px, q % w / px);
                let border = gh > 2 && gw > 2 && (y == 0 || x == 0 || y == gh - 1 || x == gw - 1);
                if border {
                    40
                } else {
                    200
                }
            })
            .collect();
        GrayRaster::new(h, w, values)?
    };

    Ok(SynthDataset {
        spec: spec.clone(),
        image_ids: (0..spec.n_images).map(|i| format!("img_{i:04}")).collect(),
        segmentation,
        classification,
        ground_truth,
        rasters: vec![raster; spec.n_images],
        blocks,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes blobs, labels, masks, rasters and a manifest declaring both
/// bundles. The bundles share their layer blobs. Returns the manifest path.
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest =
        DatasetManifest::new(ds.image_ids.clone(), ds.spec.image_h(), ds.spec.image_w());
    manifest.class_name = Some("synthetic".into());
    let cls = save_bundle(&ds.classification, dir, "features")?;
    let mut seg = cls.clone();
    seg.purpose = Purpose::Segmentation;
    seg.global_blob_path = None;
    manifest.bundles = vec![seg, cls];
    save_ground_truth(&mut manifest, dir, &ds.ground_truth)?;
    let rasters = dir.join("rasters");
    fs::create_dir_all(&rasters).map_err(|e| Error::io(&rasters, e))?;
    for (id, r) in ds.image_ids.iter().zip(&ds.rasters) {
        write_gray_raster(rasters.join(format!("{id}.pgm")), r)?;
    }
    manifest.rasters_dir = Some("rasters".into());
    let spec_path = dir.join("synth_spec.json");
    fs::write(
        &spec_path,
        serde_json::to_string_pretty(&ds.spec).expect("spec serializes") + "\n",
    )
    .map_err(|e| Error::io(&spec_path, e))?;
    let path = dir.join(MANIFEST_FILE);
    manifest.write(&path)?;
    Ok(path)
}
