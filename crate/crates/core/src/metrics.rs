//! Evaluation metrics and the weighted final score.
//!
//! Image metrics use one score per image. Pixel metrics pool every pixel of
//! every image that carries a ground-truth mask. F1 is maximized over
//! thresholds; AUPRO integrates the per-region overlap curve up to an FPR
//! limit and normalizes by that limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::label_components;
use crate::raster::{AnomalyMap, BinaryMask};
use crate::store::GroundTruth;

pub const DEFAULT_FPR_LIMIT: f64 = 0.3;
pub const DEFAULT_PRO_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub img_auroc: f64,
    pub img_ap: f64,
    pub img_f1: f64,
    pub pix_auroc: f64,
    pub pix_aupro: f64,
    pub pix_ap: f64,
    pub pix_f1: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            img_auroc: 1.2,
            img_ap: 1.1,
            img_f1: 1.1,
            pix_auroc: 1.0,
            pix_aupro: 1.4,
            pix_ap: 1.3,
            pix_f1: 1.3,
        }
    }
}

impl MetricWeights {
    /// Order: image AUROC, AP, F1, then pixel AUROC, AUPRO, AP, F1.
    pub fn from_array(w: [f64; 7]) -> Result<Self> {
        let weights = Self {
            img_auroc: w[0],
            img_ap: w[1],
            img_f1: w[2],
            pix_auroc: w[3],
            pix_aupro: w[4],
            pix_ap: w[5],
            pix_f1: w[6],
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.img_auroc,
            self.img_ap,
            self.img_f1,
            self.pix_auroc,
            self.pix_aupro,
            self.pix_ap,
            self.pix_f1,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(
                "metric weights must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The seven metric values, in the same order as [`MetricWeights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub img_auroc: f64,
    pub img_ap: f64,
    pub img_f1: f64,
    pub pix_auroc: f64,
    pub pix_aupro: f64,
    pub pix_ap: f64,
    pub pix_f1: f64,
}

impl MetricValues {
    pub fn from_array(v: [f64; 7]) -> Self {
        Self {
            img_auroc: v[0],
            img_ap: v[1],
            img_f1: v[2],
            pix_auroc: v[3],
            pix_aupro: v[4],
            pix_ap: v[5],
            pix_f1: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.img_auroc,
            self.img_ap,
            self.img_f1,
            self.pix_auroc,
            self.pix_aupro,
            self.pix_ap,
            self.pix_f1,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub values: MetricValues,
    pub final_score: f64,
    pub weights: MetricWeights,
    pub n_images: usize,
    pub n_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuproConfig {
    pub fpr_limit: f64,
    pub steps: usize,
}

impl Default for AuproConfig {
    fn default() -> Self {
        Self {
            fpr_limit: DEFAULT_FPR_LIMIT,
            steps: DEFAULT_PRO_STEPS,
        }
    }
}

impl AuproConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fpr_limit > 0.0 && self.fpr_limit <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fpr_limit must lie in (0, 1], got {}",
                self.fpr_limit
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidArgument(
                "AUPRO needs at least 2 steps".into(),
            ));
        }
        Ok(())
    }
}

fn check_inputs(labels: &[u8], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Cumulative (tp, fp) after each group of tied scores, highest scores first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
}

pub fn threshold_sweep(labels: &[u8], scores: &[f64]) -> Vec<SweepPoint> {
    let order = descending(scores);
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            points.push(SweepPoint {
                threshold: scores[i],
                tp,
                fp,
            });
        }
    }
    points
}

/// Mann–Whitney AUROC, ties count one half.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = check_inputs(labels, scores)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    let mut area = 0.0;
    for p in threshold_sweep(labels, scores) {
        let (dtp, dfp) = (p.tp - prev_tp, p.fp - prev_fp);
        // positives in this group beat every negative below it, tie with the group
        area += dtp as f64 * (neg - p.fp) as f64 + 0.5 * dtp as f64 * dfp as f64;
        prev_tp = p.tp;
        prev_fp = p.fp;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// Step-integrated precision over recall, one step per tie group.
pub fn average_precision(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, _) = check_inputs(labels, scores)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "AP needs at least one positive".into(),
        ));
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for p in threshold_sweep(labels, scores) {
        let recall = p.tp as f64 / pos as f64;
        let precision = p.tp as f64 / (p.tp + p.fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Best F1 over thresholds `score >= t`, `t` ranging over the unique scores.
pub fn f1_max(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, _) = check_inputs(labels, scores)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "F1 needs at least one positive".into(),
        ));
    }
    Ok(threshold_sweep(labels, scores)
        .iter()
        .map(|p| 2.0 * p.tp as f64 / (p.tp + p.fp + pos) as f64)
        .fold(0.0, f64::max))
}

/// Area under `(x, y)` up to `limit`, interpolating the crossing segment.
/// Points must be sorted by `x`.
pub fn trapezoid_clipped(points: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y_at = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y_at) / 2.0;
            break;
        }
    }
    area
}

/// PRO curve as `(fpr, pro)` points, starting from the empty prediction at
/// `(0, 0)`, thresholds at `steps` evenly spaced quantiles of the pooled
/// map values.
pub fn pro_curve(
    masks: &[&BinaryMask],
    maps: &[&AnomalyMap],
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    if masks.len() != maps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} masks but {} maps",
            masks.len(),
            maps.len()
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(
            "AUPRO needs at least 2 steps".into(),
        ));
    }
    let mut values = Vec::new();
    let mut region = Vec::new();
    let mut region_sizes = Vec::new();
    for (mask, map) in masks.iter().zip(maps) {
        if (mask.h, mask.w) != (map.h, map.w) {
            return Err(Error::SizeMismatch(format!(
                "mask {}x{} vs map {}x{}",
                mask.h, mask.w, map.h, map.w
            )));
        }
        let comps = label_components(mask);
        let offset = region_sizes.len() as u32;
        region.extend(
            comps
                .labels
                .iter()
                .map(|&l| if l == 0 { 0 } else { l + offset }),
        );
        region_sizes.extend(comps.sizes);
        values.extend(map.values.iter().map(|&v| f64::from(v)));
    }
    if region_sizes.is_empty() {
        return Err(Error::UndefinedMetric(
            "AUPRO needs at least one anomalous region".into(),
        ));
    }
    let n_normal = region.iter().filter(|&&r| r == 0).count();
    if n_normal == 0 {
        return Err(Error::UndefinedMetric(
            "AUPRO needs at least one normal pixel".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("anomaly maps must be finite".into()));
    }

    let order = descending(&values);
    let n = values.len();
    let mut thresholds: Vec<f64> = (0..steps)
        .map(|k| {
            let rank = (k as f64 / (steps - 1) as f64 * (n - 1) as f64).round() as usize;
            values[order[n - 1 - rank]]
        })
        .collect();
    thresholds.sort_unstable_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let n_regions = region_sizes.len() as f64;
    let mut curve = vec![(0.0, 0.0)];
    let (mut fp, mut pro_sum, mut next) = (0usize, 0f64, 0usize);
    for t in thresholds {
        while next < n && values[order[next]] >= t {
            match region[order[next]] {
                0 => fp += 1,
                r => pro_sum += 1.0 / region_sizes[r as usize - 1] as f64,
            }
            next += 1;
        }
        curve.push((fp as f64 / n_normal as f64, pro_sum / n_regions));
    }
    Ok(curve)
}

pub fn aupro(masks: &[&BinaryMask], maps: &[&AnomalyMap], cfg: &AuproConfig) -> Result<f64> {
    cfg.validate()?;
    let curve = pro_curve(masks, maps, cfg.steps)?;
    Ok(trapezoid_clipped(&curve, cfg.fpr_limit) / cfg.fpr_limit)
}

/// Weighted mean of the seven metrics.
pub fn final_score(values: &MetricValues, weights: &MetricWeights) -> f64 {
    let (w, v) = (weights.to_array(), values.to_array());
    let num: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
    num / w.iter().sum::<f64>()
}

/// Pixel labels and scores pooled over every image that has a mask.
pub fn pool_pixels(gt: &GroundTruth, maps: &[AnomalyMap]) -> Result<(Vec<u8>, Vec<f64>)> {
    if maps.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} maps for {} images",
            maps.len(),
            gt.len()
        )));
    }
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (i, (mask, map)) in gt.masks.iter().zip(maps).enumerate() {
        let Some(mask) = mask else { continue };
        if (mask.h, mask.w) != (map.h, map.w) {
            return Err(Error::SizeMismatch(format!(
                "image {i}: mask {}x{} vs map {}x{}",
                mask.h, mask.w, map.h, map.w
            )));
        }
        labels.extend_from_slice(&mask.values);
        scores.extend(map.values.iter().map(|&v| f64::from(v)));
    }
    Ok((labels, scores))
}

pub fn evaluate_all(
    gt: &GroundTruth,
    maps: &[AnomalyMap],
    image_scores: &[f64],
    weights: &MetricWeights,
    aupro_cfg: &AuproConfig,
) -> Result<MetricReport> {
    weights.validate()?;
    if image_scores.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} image scores for {} images",
            image_scores.len(),
            gt.len()
        )));
    }
    let (pix_labels, pix_scores) = pool_pixels(gt, maps)?;
    let (masks, mask_maps): (Vec<&BinaryMask>, Vec<&AnomalyMap>) = gt
        .masks
        .iter()
        .zip(maps)
        .filter_map(|(m, map)| m.as_ref().map(|m| (m, map)))
        .unzip();
    let values = MetricValues {
        img_auroc: roc_auc(&gt.labels, image_scores)?,
        img_ap: average_precision(&gt.labels, image_scores)?,
        img_f1: f1_max(&gt.labels, image_scores)?,
        pix_auroc: roc_auc(&pix_labels, &pix_scores)?,
        pix_aupro: aupro(&masks, &mask_maps, aupro_cfg)?,
        pix_ap: average_precision(&pix_labels, &pix_scores)?,
        pix_f1: f1_max(&pix_labels, &pix_scores)?,
    };
    Ok(MetricReport {
        final_score: final_score(&values, weights),
        values,
        weights: *weights,
        n_images: gt.len(),
        n_pixels: pix_labels.len(),
    })
}
