use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Image labels plus optional pixel masks, in manifest image order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<u8>,
    /// `None` where no pixel truth exists for the image.
    pub masks: Vec<Option<BinaryMask>>,
}

impl GroundTruth {
    pub fn new(
        labels: Vec<u8>,
        masks: Vec<Option<BinaryMask>>,
        image_h: usize,
        image_w: usize,
    ) -> Result<Self> {
        if labels.len() != masks.len() {
            return Err(Error::SizeMismatch(format!(
                "{} labels but {} mask slots",
                labels.len(),
                masks.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::GroundTruth(format!("label of image {i} is not 0/1")));
        }
        for (i, mask) in masks.iter().enumerate() {
            let Some(mask) = mask else { continue };
            if (mask.h, mask.w) != (image_h, image_w) {
                return Err(Error::SizeMismatch(format!(
                    "mask of image {i} is {}x{}, manifest declares {image_h}x{image_w}",
                    mask.h, mask.w
                )));
            }
            if labels[i] == 0 && mask.count_ones() > 0 {
                return Err(Error::GroundTruth(format!(
                    "image {i} has anomalous mask pixels but label 0"
                )));
            }
        }
        Ok(Self { labels, masks })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Reads an `image_id,label` CSV whose rows follow `image_ids` exactly.
pub fn read_labels_csv(path: &Path, image_ids: &[String]) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "image_id,label" => {}
        _ => {
            return Err(Error::GroundTruth(format!(
                "{}: expected header 'image_id,label'",
                path.display()
            )))
        }
    }
    let mut labels = Vec::with_capacity(image_ids.len());
    for (row, line) in lines.enumerate() {
        let (id, label) = line.split_once(',').ok_or_else(|| {
            Error::GroundTruth(format!(
                "{}: row {} is not 'id,label'",
                path.display(),
                row + 1
            ))
        })?;
        let expected = image_ids.get(row).ok_or_else(|| {
            Error::SizeMismatch(format!("{}: more rows than image ids", path.display()))
        })?;
        if id.trim() != expected {
            return Err(Error::SizeMismatch(format!(
                "{}: row {} is {:?}, manifest order expects {expected:?}",
                path.display(),
                row + 1,
                id.trim()
            )));
        }
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::GroundTruth(format!(
                    "{}: label {other:?} for {id} is not 0/1",
                    path.display()
                )))
            }
        };
        labels.push(label);
    }
    if labels.len() != image_ids.len() {
        return Err(Error::SizeMismatch(format!(
            "{}: {} label rows for {} images",
            path.display(),
            labels.len(),
            image_ids.len()
        )));
    }
    Ok(labels)
}

pub fn write_labels_csv(path: &Path, image_ids: &[String], labels: &[u8]) -> Result<()> {
    let mut text = String::from("image_id,label\n");
    for (id, l) in image_ids.iter().zip(labels) {
        text.push_str(&format!("{id},{l}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_mask() -> BinaryMask {
        let mut m = BinaryMask::zeros(4, 4);
        for i in [5, 6, 9] {
            m.values[i] = 1;
        }
        m
    }

    #[test]
    fn valid_pair() {
        let gt = GroundTruth::new(
            vec![0, 1],
            vec![Some(BinaryMask::zeros(4, 4)), Some(blob_mask())],
            4,
            4,
        )
        .unwrap();
        assert_eq!(gt.masks[1].as_ref().unwrap().count_ones(), 3);
    }

    #[test]
    fn normal_label_with_defect_pixels() {
        let err = GroundTruth::new(vec![0], vec![Some(blob_mask())], 4, 4);
        assert!(matches!(err, Err(Error::GroundTruth(_))));
    }

    #[test]
    fn mask_size_must_match_manifest() {
        let err = GroundTruth::new(vec![1], vec![Some(BinaryMask::zeros(10, 10))], 12, 12);
        assert!(matches!(err, Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn labels_csv_must_follow_manifest_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(&path, "image_id,label\nb,1\na,0\n").unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(read_labels_csv(&path, &ids).is_err());
        write_labels_csv(&path, &ids, &[0, 1]).unwrap();
        assert_eq!(read_labels_csv(&path, &ids).unwrap(), vec![0, 1]);
    }
}
