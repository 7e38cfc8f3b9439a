//! On-disk interchange: a JSON manifest next to raw little-endian f32 blobs
//! (one per layer, image-major then patch-major then channel) and binary
//! PGM rasters for masks and grayscale images.

pub mod blob;
mod bundle;
mod manifest;
pub mod pgm;
mod truth;

use std::fs;
use std::path::{Path, PathBuf};

pub use bundle::{FeatureBundle, GlobalFeatures, LayerFeatures, Purpose};
pub use manifest::{BundleEntry, DatasetManifest, DimSpec, LAYER_PLACEHOLDER};
pub use pgm::{load_gray_raster, write_gray_raster};
pub use truth::{read_labels_csv, write_labels_csv, GroundTruth};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayRaster};

/// Loads the bundle of the given purpose declared by a manifest file.
pub fn load_bundle(manifest_path: impl AsRef<Path>, purpose: Purpose) -> Result<FeatureBundle> {
    let manifest = DatasetManifest::read(manifest_path)?;
    load_bundle_from(&manifest, purpose)
}

pub fn load_bundle_from(manifest: &DatasetManifest, purpose: Purpose) -> Result<FeatureBundle> {
    let entry = manifest.bundle(purpose)?;
    let n = manifest.n_images();
    let n_patches = entry.grid_h * entry.grid_w;
    let mut layers = Vec::with_capacity(entry.layer_ids.len());
    for (li, &layer_id) in entry.layer_ids.iter().enumerate() {
        let dim = entry.dim_of(li)?;
        let path = manifest.resolve(&entry.blob_path_for(layer_id));
        let data = blob::read_f32_blob(&path, Some(n * n_patches * dim))?;
        layers.push(LayerFeatures::new(layer_id, dim, data));
    }
    let global = match &entry.global_blob_path {
        Some(rel) => {
            let path = manifest.resolve(rel);
            let data = blob::read_f32_blob(&path, None)?;
            if data.is_empty() || data.len() % n != 0 {
                return Err(Error::ShapeMismatch(format!(
                    "{}: {} values cannot form {n} global feature rows",
                    path.display(),
                    data.len()
                )));
            }
            Some(GlobalFeatures {
                dim: data.len() / n,
                data,
            })
        }
        None => None,
    };
    FeatureBundle::new(purpose, n, entry.grid_h, entry.grid_w, layers, global)
}

/// Writes the blobs of `bundle` into `dir` as `{stem}_layer{id}.f32` (plus
/// `{stem}_global.f32`) and returns the manifest entry describing them.
pub fn save_bundle(bundle: &FeatureBundle, dir: &Path, stem: &str) -> Result<BundleEntry> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let template = format!("{stem}_layer{LAYER_PLACEHOLDER}.f32");
    let mut dims = Vec::new();
    for layer in bundle.layers() {
        let rel = template.replace(LAYER_PLACEHOLDER, &layer.layer_id().to_string());
        blob::write_f32_blob(&dir.join(rel), layer.data())?;
        dims.push(layer.dim());
    }
    let global_blob_path = match bundle.global_features() {
        Some(g) => {
            let rel = format!("{stem}_global.f32");
            blob::write_f32_blob(&dir.join(&rel), &g.data)?;
            Some(rel)
        }
        None => None,
    };
    let dim = if dims.iter().all(|&d| d == dims[0]) {
        DimSpec::Uniform(dims[0])
    } else {
        DimSpec::PerLayer(dims)
    };
    Ok(BundleEntry {
        purpose: bundle.purpose(),
        layer_ids: bundle
            .layers()
            .iter()
            .map(LayerFeatures::layer_id)
            .collect(),
        grid_h: bundle.grid_h(),
        grid_w: bundle.grid_w(),
        dim,
        blob_path: template,
        global_blob_path,
    })
}

fn image_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.pgm"))
}

pub fn load_ground_truth(manifest_path: impl AsRef<Path>) -> Result<GroundTruth> {
    let manifest = DatasetManifest::read(manifest_path)?;
    load_ground_truth_from(&manifest)
}

/// Labels are required; masks are read for every image whose
/// `<masks_dir>/<image_id>.pgm` exists.
pub fn load_ground_truth_from(manifest: &DatasetManifest) -> Result<GroundTruth> {
    let labels_rel = manifest
        .labels_path
        .as_deref()
        .ok_or_else(|| Error::manifest(manifest.base_dir(), "no labels_path declared"))?;
    let labels = read_labels_csv(&manifest.resolve(labels_rel), &manifest.image_ids)?;
    let mut masks = Vec::with_capacity(labels.len());
    let masks_dir = manifest.masks_dir.as_deref().map(|d| manifest.resolve(d));
    for id in &manifest.image_ids {
        let mask = match &masks_dir {
            Some(dir) => {
                let path = image_file(dir, id);
                if path.exists() {
                    Some(BinaryMask::from_gray(&load_gray_raster(&path)?))
                } else {
                    None
                }
            }
            None => None,
        };
        masks.push(mask);
    }
    GroundTruth::new(labels, masks, manifest.image_h, manifest.image_w)
}

/// Writes labels to `dir/labels.csv` and masks to `dir/masks/`, recording
/// both paths in the manifest.
pub fn save_ground_truth(
    manifest: &mut DatasetManifest,
    dir: &Path,
    gt: &GroundTruth,
) -> Result<()> {
    let masks_dir = dir.join("masks");
    fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    write_labels_csv(&dir.join("labels.csv"), &manifest.image_ids, &gt.labels)?;
    for (id, mask) in manifest.image_ids.iter().zip(&gt.masks) {
        if let Some(mask) = mask {
            write_gray_raster(image_file(&masks_dir, id), &mask.to_gray())?;
        }
    }
    manifest.labels_path = Some("labels.csv".into());
    manifest.masks_dir = Some("masks".into());
    Ok(())
}

/// Grayscale rasters for every image, sized as the manifest declares.
pub fn load_rasters(manifest: &DatasetManifest) -> Result<Vec<GrayRaster>> {
    let dir = manifest
        .rasters_dir
        .as_deref()
        .map(|d| manifest.resolve(d))
        .ok_or_else(|| {
            Error::Config("foreground masking needs rasters_dir in the manifest".into())
        })?;
    manifest
        .image_ids
        .iter()
        .map(|id| {
            let path = image_file(&dir, id);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "foreground masking needs raster {}",
                    path.display()
                )));
            }
            let raster = load_gray_raster(&path)?;
            if (raster.h, raster.w) != (manifest.image_h, manifest.image_w) {
                return Err(Error::SizeMismatch(format!(
                    "raster {} is {}x{}, manifest declares {}x{}",
                    path.display(),
                    raster.h,
                    raster.w,
                    manifest.image_h,
                    manifest.image_w
                )));
            }
            Ok(raster)
        })
        .collect()
}
