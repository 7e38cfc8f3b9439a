//! End-to-end orchestration: score, write predictions, evaluate.
//!
//! Stage order is aggregation → mutual scoring → maps (upsample, smooth,
//! optional foreground mask) for the segmentation bundle, and aggregation →
//! mutual scoring → top-2 image score → re-scoring for the classification
//! bundle.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::lnamd::aggregate;
use crate::metrics::{
    evaluate_all, pool_pixels, pro_curve, threshold_sweep, AuproConfig, MetricReport, MetricWeights,
};
use crate::msm::{combine, mutual_score, PatchScoreSet};
use crate::postprocess::{apply_mask, foreground_mask, image_score_top2, upsample_map};
use crate::raster::{AnomalyMap, BinaryMask};
use crate::rscin::{build_affinity, rescore, ImageScoreVector};
use crate::store::{
    blob, load_bundle_from, load_ground_truth_from, load_rasters, DatasetManifest, FeatureBundle,
    GlobalFeatures, Purpose,
};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const SCORES_CSV: &str = "scores.csv";
pub const MAPS_DIR: &str = "maps";
pub const CONFIG_ECHO: &str = "resolved_config.toml";
pub const PATCH_SCORES_BLOB: &str = "patch_scores.f32";
pub const REPORT_JSON: &str = "report.json";
pub const CURVES_CSV: &str = "curves.csv";

/// Wall-clock guard checked between stages.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    pub fn new(limit_secs: Option<f64>) -> Self {
        Self {
            start: Instant::now(),
            limit: limit_secs.map(Duration::from_secs_f64),
        }
    }

    pub fn check(&self, stage: &str) -> Result<()> {
        match self.limit {
            Some(limit) if self.start.elapsed() > limit => Err(Error::TimeLimit {
                limit_secs: limit.as_secs_f64(),
                stage: stage.to_string(),
            }),
            _ => Ok(()),
        }
    }
}

/// Mutual scores of every (layer, degree) pair, combined.
pub fn score_patches(
    bundle: &FeatureBundle,
    cfg: &PipelineConfig,
    deadline: &Deadline,
) -> Result<PatchScoreSet> {
    let msm_cfg = cfg.msm();
    let mut slices = Vec::new();
    for &r in &cfg.degrees {
        deadline.check(&format!("{} aggregation r={r}", bundle.purpose()))?;
        let agg = aggregate(bundle, r)?;
        deadline.check(&format!("{} mutual scoring r={r}", bundle.purpose()))?;
        slices.extend(mutual_score(&agg, &msm_cfg)?);
    }
    combine(slices)
}

/// Mean patch vector of the last layer, for bundles without global features.
fn pooled_global(bundle: &FeatureBundle) -> GlobalFeatures {
    let layer = bundle.layers().last().expect("bundle has layers");
    let (p, d) = (bundle.n_patches(), layer.dim());
    let mut data = Vec::with_capacity(bundle.n_images() * d);
    for i in 0..bundle.n_images() {
        let img = &layer.data()[i * p * d..(i + 1) * p * d];
        for k in 0..d {
            let s: f64 = img.chunks_exact(d).map(|v| f64::from(v[k])).sum();
            data.push((s / p as f64) as f32);
        }
    }
    GlobalFeatures { dim: d, data }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunWarnings {
    pub rescore_degenerate_rows: usize,
    pub rescore_clamped_windows: Vec<usize>,
    pub degenerate_foreground_masks: usize,
    pub global_features_pooled: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub image_ids: Vec<String>,
    pub image_h: usize,
    pub image_w: usize,
    pub maps: Vec<AnomalyMap>,
    pub scores: ImageScoreVector,
    pub segmentation_scores: PatchScoreSet,
    pub warnings: RunWarnings,
}

/// Scores a test set given its two manifests (which may be the same file).
pub fn run(
    seg_manifest: &Path,
    cls_manifest: &Path,
    cfg: &PipelineConfig,
    deadline: &Deadline,
) -> Result<RunOutput> {
    cfg.validate()?;
    let seg_m = DatasetManifest::read(seg_manifest)?;
    let cls_m = DatasetManifest::read(cls_manifest)?;
    if seg_m.image_ids != cls_m.image_ids {
        return Err(Error::SizeMismatch(
            "segmentation and classification manifests list different images or orders".into(),
        ));
    }
    let rasters = if cfg.mask_applies(seg_m.class_name.as_deref()) {
        Some(load_rasters(&seg_m)?)
    } else {
        None
    };
    let seg = load_bundle_from(&seg_m, Purpose::Segmentation)?;
    let cls = load_bundle_from(&cls_m, Purpose::Classification)?;

    let seg_scores = score_patches(&seg, cfg, deadline)?;
    let same_features = seg.grid_h() == cls.grid_h()
        && seg.grid_w() == cls.grid_w()
        && seg.layers() == cls.layers();
    let cls_scores = if same_features {
        seg_scores.clone()
    } else {
        score_patches(&cls, cfg, deadline)?
    };

    deadline.check("anomaly maps")?;
    let (h, w) = (seg_m.image_h, seg_m.image_w);
    let masks: Option<Vec<(BinaryMask, bool)>> = match &rasters {
        Some(rs) => Some(
            rs.par_iter()
                .map(|r| {
                    foreground_mask(r, cfg.mask_margin_fraction).map(|f| (f.mask, f.degenerate))
                })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let maps: Vec<AnomalyMap> = (0..seg.n_images())
        .into_par_iter()
        .map(|i| {
            let map = upsample_map(
                seg_scores.image(i),
                seg.grid_h(),
                seg.grid_w(),
                h,
                w,
                cfg.sigma,
            )?;
            match &masks {
                Some(ms) => apply_mask(&map, &ms[i].0),
                None => Ok(map),
            }
        })
        .collect::<Result<_>>()?;

    deadline.check("image scores")?;
    let raw: Vec<f64> = (0..cls.n_images())
        .map(|i| image_score_top2(cls_scores.image(i), cfg.w2))
        .collect::<Result<_>>()?;
    let (global, pooled) = match cls.global_features() {
        Some(g) => (g.clone(), false),
        None => {
            log::warn!("classification bundle has no global features; using mean-pooled patches");
            (pooled_global(&cls), true)
        }
    };
    let affinity = build_affinity(&global)?;
    let outcome = rescore(&raw, &affinity, &cfg.rscin())?;

    Ok(RunOutput {
        image_ids: seg_m.image_ids.clone(),
        image_h: h,
        image_w: w,
        maps,
        scores: ImageScoreVector {
            raw,
            refined: outcome.refined,
        },
        segmentation_scores: seg_scores,
        warnings: RunWarnings {
            rescore_degenerate_rows: outcome.degenerate_rows,
            rescore_clamped_windows: outcome.clamped_windows,
            degenerate_foreground_masks: masks.map_or(0, |ms| ms.iter().filter(|m| m.1).count()),
            global_features_pooled: pooled,
        },
    })
}

/// Description of a prediction directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub image_ids: Vec<String>,
    pub image_h: usize,
    pub image_w: usize,
    /// One headerless little-endian f32 blob per image, `<maps_dir>/<id>.f32`.
    pub maps_dir: String,
    pub scores_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg_manifest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cls_manifest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_scores: Option<PatchScoresEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warnings: Option<RunWarnings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchScoresEntry {
    pub blob_path: String,
    pub n_images: usize,
    pub n_patches: usize,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes maps and scores in the prediction layout read by [`read_predictions`].
pub fn write_predictions(
    out_dir: &Path,
    image_ids: &[String],
    maps: &[AnomalyMap],
    scores: &ImageScoreVector,
    mut manifest_extra: RunManifest,
) -> Result<PathBuf> {
    let maps_dir = out_dir.join(MAPS_DIR);
    fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;
    for (id, map) in image_ids.iter().zip(maps) {
        blob::write_f32_blob(&maps_dir.join(format!("{id}.f32")), &map.values)?;
    }
    let mut csv = String::from("image_id,raw_score,refined_score\n");
    for ((id, raw), refined) in image_ids.iter().zip(&scores.raw).zip(&scores.refined) {
        csv.push_str(&format!("{id},{raw},{refined}\n"));
    }
    write_text(&out_dir.join(SCORES_CSV), &csv)?;
    manifest_extra.image_ids = image_ids.to_vec();
    manifest_extra.maps_dir = MAPS_DIR.into();
    manifest_extra.scores_path = SCORES_CSV.into();
    let path = out_dir.join(RUN_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest_extra).expect("run manifest serializes");
    write_text(&path, &(text + "\n"))?;
    Ok(path)
}

/// Runs the pipeline inside a thread pool of `cfg.threads` workers and
/// writes every artifact to `out_dir`. On a runtime-limit abort, artifacts
/// already written are removed.
pub fn run_to_dir(
    seg_manifest: &Path,
    cls_manifest: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let deadline = Deadline::new(cfg.time_limit_secs);
    let output = pool.install(|| run(seg_manifest, cls_manifest, cfg, &deadline))?;
    let written = write_run(out_dir, seg_manifest, cls_manifest, cfg, &output)
        .and_then(|_| deadline.check("writing artifacts"));
    if let Err(e) = written {
        if matches!(e, Error::TimeLimit { .. }) {
            remove_artifacts(out_dir);
        }
        return Err(e);
    }
    Ok(output)
}

fn write_run(
    out_dir: &Path,
    seg: &Path,
    cls: &Path,
    cfg: &PipelineConfig,
    output: &RunOutput,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let patch_scores = if cfg.dump_patch_scores {
        let s = &output.segmentation_scores;
        let values: Vec<f32> = s.combined.iter().map(|&v| v as f32).collect();
        blob::write_f32_blob(&out_dir.join(PATCH_SCORES_BLOB), &values)?;
        Some(PatchScoresEntry {
            blob_path: PATCH_SCORES_BLOB.into(),
            n_images: s.n_images,
            n_patches: s.n_patches,
        })
    } else {
        None
    };
    write_text(&out_dir.join(CONFIG_ECHO), &cfg.to_toml())?;
    let manifest = RunManifest {
        image_ids: Vec::new(),
        image_h: output.image_h,
        image_w: output.image_w,
        maps_dir: String::new(),
        scores_path: String::new(),
        seg_manifest: Some(seg.display().to_string()),
        cls_manifest: Some(cls.display().to_string()),
        patch_scores,
        config: Some(cfg.clone()),
        warnings: Some(output.warnings.clone()),
    };
    write_predictions(
        out_dir,
        &output.image_ids,
        &output.maps,
        &output.scores,
        manifest,
    )?;
    Ok(())
}

/// Removes the files a run writes into `out_dir`, leaving anything else.
pub fn remove_artifacts(out_dir: &Path) {
    let _ = fs::remove_dir_all(out_dir.join(MAPS_DIR));
    for f in [SCORES_CSV, RUN_MANIFEST, CONFIG_ECHO, PATCH_SCORES_BLOB] {
        let _ = fs::remove_file(out_dir.join(f));
    }
}

#[derive(Debug, Clone)]
pub struct Predictions {
    pub manifest: RunManifest,
    pub maps: Vec<AnomalyMap>,
    pub scores: ImageScoreVector,
}

pub fn read_predictions(pred_dir: &Path) -> Result<Predictions> {
    let path = pred_dir.join(RUN_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::manifest(&path, e.to_string()))?;
    let (h, w) = (manifest.image_h, manifest.image_w);
    let maps = manifest
        .image_ids
        .iter()
        .map(|id| {
            let p = pred_dir.join(&manifest.maps_dir).join(format!("{id}.f32"));
            AnomalyMap::new(h, w, blob::read_f32_blob(&p, Some(h * w))?)
        })
        .collect::<Result<Vec<_>>>()?;
    let scores_path = pred_dir.join(&manifest.scores_path);
    let text = fs::read_to_string(&scores_path).map_err(|e| Error::io(&scores_path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("image_id,raw_score,refined_score") {
        return Err(Error::manifest(
            &scores_path,
            "expected header image_id,raw_score,refined_score",
        ));
    }
    let (mut raw, mut refined) = (Vec::new(), Vec::new());
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                Error::manifest(&scores_path, format!("row {}: bad number {s:?}", row + 1))
            })
        };
        if fields.len() != 3 || manifest.image_ids.get(row).map(String::as_str) != Some(fields[0]) {
            return Err(Error::SizeMismatch(format!(
                "{}: row {} does not match image order",
                scores_path.display(),
                row + 1
            )));
        }
        raw.push(parse(fields[1])?);
        refined.push(parse(fields[2])?);
    }
    if refined.len() != manifest.image_ids.len() {
        return Err(Error::SizeMismatch(format!(
            "{}: {} score rows for {} images",
            scores_path.display(),
            refined.len(),
            manifest.image_ids.len()
        )));
    }
    Ok(Predictions {
        manifest,
        maps,
        scores: ImageScoreVector { raw, refined },
    })
}

/// One row of the curves CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub curve: &'static str,
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

const MAX_PIXEL_CURVE_POINTS: usize = 1000;

fn thin<T: Clone>(points: Vec<T>, max: usize) -> Vec<T> {
    if points.len() <= max {
        return points;
    }
    let step = points.len().div_ceil(max);
    let last = points.last().cloned();
    let mut out: Vec<T> = points.into_iter().step_by(step).collect();
    out.extend(last);
    out
}

fn roc_pr_points(
    labels: &[u8],
    scores: &[f64],
    roc: &'static str,
    pr: &'static str,
    max: usize,
) -> Vec<CurvePoint> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let sweep = thin(threshold_sweep(labels, scores), max);
    let mut out = Vec::new();
    for p in &sweep {
        out.push(CurvePoint {
            curve: roc,
            threshold: p.threshold,
            x: p.fp as f64 / neg,
            y: p.tp as f64 / pos,
        });
    }
    for p in &sweep {
        out.push(CurvePoint {
            curve: pr,
            threshold: p.threshold,
            x: p.tp as f64 / pos,
            y: p.tp as f64 / (p.tp + p.fp) as f64,
        });
    }
    out
}

/// Evaluates a prediction directory against a ground-truth manifest.
pub fn evaluate_dir(
    pred_dir: &Path,
    gt_manifest: &Path,
    weights: &MetricWeights,
    aupro_cfg: &AuproConfig,
) -> Result<(MetricReport, Vec<CurvePoint>)> {
    let preds = read_predictions(pred_dir)?;
    let manifest = DatasetManifest::read(gt_manifest)?;
    if preds.manifest.image_ids != manifest.image_ids {
        return Err(Error::SizeMismatch(
            "prediction and ground-truth image ids are not aligned".into(),
        ));
    }
    if (preds.manifest.image_h, preds.manifest.image_w) != (manifest.image_h, manifest.image_w) {
        return Err(Error::SizeMismatch(format!(
            "prediction maps are {}x{}, ground truth is {}x{}",
            preds.manifest.image_h, preds.manifest.image_w, manifest.image_h, manifest.image_w
        )));
    }
    let gt = load_ground_truth_from(&manifest)?;
    let report = evaluate_all(&gt, &preds.maps, &preds.scores.refined, weights, aupro_cfg)?;

    let mut curves = roc_pr_points(
        &gt.labels,
        &preds.scores.refined,
        "image_roc",
        "image_pr",
        usize::MAX,
    );
    let (pix_labels, pix_scores) = pool_pixels(&gt, &preds.maps)?;
    curves.extend(roc_pr_points(
        &pix_labels,
        &pix_scores,
        "pixel_roc",
        "pixel_pr",
        MAX_PIXEL_CURVE_POINTS,
    ));
    let (masks, maps): (Vec<&BinaryMask>, Vec<&AnomalyMap>) = gt
        .masks
        .iter()
        .zip(&preds.maps)
        .filter_map(|(m, map)| m.as_ref().map(|m| (m, map)))
        .unzip();
    for (x, y) in pro_curve(&masks, &maps, aupro_cfg.steps)? {
        curves.push(CurvePoint {
            curve: "pro",
            threshold: f64::NAN,
            x,
            y,
        });
    }
    Ok((report, curves))
}

pub fn write_report(out_dir: &Path, report: &MetricReport, curves: &[CurvePoint]) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    write_text(&out_dir.join(REPORT_JSON), &(text + "\n"))?;
    let mut csv = String::from("curve,threshold,x,y\n");
    for p in curves {
        let t = if p.threshold.is_nan() {
            String::new()
        } else {
            p.threshold.to_string()
        };
        csv.push_str(&format!("{},{t},{},{}\n", p.curve, p.x, p.y));
    }
    write_text(&out_dir.join(CURVES_CSV), &csv)
}
