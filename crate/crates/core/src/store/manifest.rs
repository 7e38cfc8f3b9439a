use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bundle::Purpose;
use crate::error::{Error, Result};

/// Placeholder in `blob_path` replaced by each layer id.
pub const LAYER_PLACEHOLDER: &str = "{layer}";

/// Feature dimensionality, either shared by all layers or listed per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimSpec {
    Uniform(usize),
    PerLayer(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub purpose: Purpose,
    pub layer_ids: Vec<i64>,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: DimSpec,
    /// Relative to the manifest directory. Must contain `{layer}` when the
    /// bundle has more than one layer.
    pub blob_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_blob_path: Option<String>,
}

impl BundleEntry {
    pub fn dim_of(&self, layer_index: usize) -> Result<usize> {
        match &self.dim {
            DimSpec::Uniform(d) => Ok(*d),
            DimSpec::PerLayer(ds) => ds.get(layer_index).copied().ok_or_else(|| {
                Error::ShapeMismatch(format!(
                    "dim list has {} entries for {} layers",
                    ds.len(),
                    self.layer_ids.len()
                ))
            }),
        }
    }

    pub fn blob_path_for(&self, layer_id: i64) -> String {
        self.blob_path
            .replace(LAYER_PLACEHOLDER, &layer_id.to_string())
    }
}

/// JSON description of a test set and the files that accompany it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub image_ids: Vec<String>,
    pub image_h: usize,
    pub image_w: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
    #[serde(default)]
    pub bundles: Vec<BundleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rasters_dir: Option<String>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(image_ids: Vec<String>, image_h: usize, image_w: usize) -> Self {
        Self {
            image_ids,
            image_h,
            image_w,
            class_name: None,
            bundles: Vec::new(),
            labels_path: None,
            masks_dir: None,
            rasters_dir: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::manifest(path, e.to_string()))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate(path)?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.image_h == 0 || self.image_w == 0 {
            return Err(Error::manifest(
                path,
                "image_h and image_w must be positive",
            ));
        }
        let mut seen = HashSet::new();
        for id in &self.image_ids {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(Error::manifest(path, format!("invalid image id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::manifest(path, format!("duplicate image id {id:?}")));
            }
        }
        let mut purposes = HashSet::new();
        for b in &self.bundles {
            if !purposes.insert(b.purpose) {
                return Err(Error::manifest(path, format!("two {} bundles", b.purpose)));
            }
            if b.layer_ids.is_empty() {
                return Err(Error::manifest(
                    path,
                    format!("{} bundle lists no layers", b.purpose),
                ));
            }
            if b.layer_ids.len() > 1 && !b.blob_path.contains(LAYER_PLACEHOLDER) {
                return Err(Error::manifest(
                    path,
                    format!("multi-layer blob_path must contain {LAYER_PLACEHOLDER}"),
                ));
            }
            if let DimSpec::PerLayer(ds) = &b.dim {
                if ds.len() != b.layer_ids.len() {
                    return Err(Error::manifest(
                        path,
                        "dim list length differs from layer_ids",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Directory that relative paths are resolved against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn bundle(&self, purpose: Purpose) -> Result<&BundleEntry> {
        self.bundles
            .iter()
            .find(|b| b.purpose == purpose)
            .ok_or_else(|| Error::manifest(&self.base_dir, format!("no {purpose} bundle declared")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_manifest() {
        let text = r#"{
            "image_ids": ["a", "b"],
            "image_h": 12, "image_w": 10,
            "bundles": [{"purpose": "segmentation", "layer_ids": [5, 11],
                         "grid_h": 2, "grid_w": 2, "dim": [4, 8],
                         "blob_path": "seg_{layer}.f32"}]
        }"#;
        let m: DatasetManifest = serde_json::from_str(text).unwrap();
        m.validate(Path::new("m.json")).unwrap();
        let b = m.bundle(Purpose::Segmentation).unwrap();
        assert_eq!(b.dim_of(1).unwrap(), 8);
        assert_eq!(b.blob_path_for(11), "seg_11.f32");
        assert!(m.bundle(Purpose::Classification).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = DatasetManifest::new(vec!["x".into(), "x".into()], 4, 4);
        m.base_dir = PathBuf::from(".");
        assert!(m.validate(Path::new("m.json")).is_err());
    }

    #[test]
    fn multi_layer_needs_placeholder() {
        let mut m = DatasetManifest::new(vec!["x".into(), "y".into()], 4, 4);
        m.bundles.push(BundleEntry {
            purpose: Purpose::Segmentation,
            layer_ids: vec![1, 2],
            grid_h: 1,
            grid_w: 1,
            dim: DimSpec::Uniform(2),
            blob_path: "seg.f32".into(),
            global_blob_path: None,
        });
        assert!(m.validate(Path::new("m.json")).is_err());
    }
}
