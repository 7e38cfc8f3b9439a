//! Exhaustive reference implementations.
//!
//! Everything here is deliberately naive and shares no code with the
//! production paths it checks: plain f64 loops, full sorts, quadratic pair
//! counting, and a separate union-find region labeling.

use crate::error::{Error, Result};
use crate::lnamd::AggregatedBundle;
use crate::raster::{AnomalyMap, BinaryMask};
use crate::rscin::Affinity;
use crate::store::FeatureBundle;

pub const MAX_ORACLE_IMAGES: usize = 8;
pub const MAX_ORACLE_PATCHES: usize = 64;

fn guard(n_images: usize, n_patches: usize) -> Result<()> {
    if n_images > MAX_ORACLE_IMAGES || n_patches > MAX_ORACLE_PATCHES {
        return Err(Error::TooLarge(format!(
            "{n_images} images × {n_patches} patches (limit {MAX_ORACLE_IMAGES} × {MAX_ORACLE_PATCHES})"
        )));
    }
    Ok(())
}

/// Window mean by testing every grid cell for membership.
pub fn oracle_lnamd(bundle: &FeatureBundle, r: usize, normalize: bool) -> Vec<Vec<f64>> {
    let (gh, gw) = (bundle.grid_h(), bundle.grid_w());
    let half = (r / 2) as i64;
    let mut out = Vec::new();
    for (li, layer) in bundle.layers().iter().enumerate() {
        let dim = layer.dim();
        let mut data = Vec::new();
        for i in 0..bundle.n_images() {
            for y in 0..gh as i64 {
                for x in 0..gw as i64 {
                    let mut sum = vec![0f64; dim];
                    let mut count = 0f64;
                    for yy in 0..gh as i64 {
                        for xx in 0..gw as i64 {
                            if (yy - y).abs() <= half && (xx - x).abs() <= half {
                                let p = bundle.patch(li, i, (yy * gw as i64 + xx) as usize);
                                for k in 0..dim {
                                    sum[k] += f64::from(p[k]);
                                }
                                count += 1.0;
                            }
                        }
                    }
                    let mut mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
                    if normalize {
                        let n = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n > 0.0 {
                            mean.iter_mut().for_each(|v| *v /= n);
                        }
                    }
                    data.extend(mean);
                }
            }
        }
        out.push(data);
    }
    out
}

fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut d = 0f64;
    for k in 0..a.len() {
        d += f64::from(a[k]) * f64::from(b[k]);
    }
    1.0 - d
}

/// `result[p][c]`: min distance from patch `p` of `query` to the `c`-th other image.
pub fn oracle_min_cross_distances(
    agg: &AggregatedBundle,
    layer: usize,
    query: usize,
) -> Result<Vec<Vec<f64>>> {
    guard(agg.n_images, agg.n_patches())?;
    let mut rows = Vec::new();
    for p in 0..agg.n_patches() {
        let mut row = Vec::new();
        for j in 0..agg.n_images {
            if j == query {
                continue;
            }
            let mut best = f64::INFINITY;
            for q in 0..agg.n_patches() {
                let d = cosine_distance(agg.patch(layer, query, p), agg.patch(layer, j, q));
                if d < best {
                    best = d;
                }
            }
            row.push(best);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Per-layer `n_images × n_patches` scores.
pub fn oracle_msm(agg: &AggregatedBundle, interval_fraction: f64) -> Result<Vec<Vec<f64>>> {
    guard(agg.n_images, agg.n_patches())?;
    let others = agg.n_images - 1;
    let mut k = (interval_fraction * others as f64).floor() as usize;
    if k < 1 {
        k = 1;
    }
    let mut out = Vec::new();
    for layer in 0..agg.layers.len() {
        let mut scores = Vec::new();
        for i in 0..agg.n_images {
            for mut row in oracle_min_cross_distances(agg, layer, i)? {
                row.sort_by(|a, b| a.partial_cmp(b).unwrap());
                scores.push(row[..k].iter().sum::<f64>() / k as f64);
            }
        }
        out.push(scores);
    }
    Ok(out)
}

pub fn oracle_rescore(raw: &[f64], s: &Affinity, windows: &[usize]) -> Vec<f64> {
    let n = raw.len();
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            for &k in windows {
                let k = k.min(n);
                // pick self, then repeatedly the most similar unused image
                let mut chosen = vec![i];
                while chosen.len() < k {
                    let mut best: Option<usize> = None;
                    for j in 0..n {
                        if chosen.contains(&j) {
                            continue;
                        }
                        if best.is_none() || s.get(i, j) > s.get(i, best.unwrap()) {
                            best = Some(j);
                        }
                    }
                    chosen.push(best.unwrap());
                }
                let wsum: f64 = chosen.iter().map(|&j| s.get(i, j)).sum();
                total += if wsum > 0.0 {
                    chosen.iter().map(|&j| s.get(i, j) * raw[j]).sum::<f64>() / wsum
                } else {
                    raw[i]
                };
            }
            total / windows.len() as f64
        })
        .collect()
}

/// Quadratic pair counting.
pub fn oracle_roc_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn unique_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

fn confusion_at(labels: &[u8], scores: &[f64], t: f64) -> (f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    for i in 0..labels.len() {
        if scores[i] >= t {
            if labels[i] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
    }
    (tp, fp)
}

pub fn oracle_average_precision(labels: &[u8], scores: &[f64]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in unique_desc(scores) {
        let (tp, fp) = confusion_at(labels, scores, t);
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

pub fn oracle_f1_max(labels: &[u8], scores: &[f64]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut best = 0.0;
    for t in unique_desc(scores) {
        let (tp, fp) = confusion_at(labels, scores, t);
        let precision = tp / (tp + fp);
        let recall = tp / pos;
        let f1 = if tp > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if f1 > best {
            best = f1;
        }
    }
    best
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// 8-connected regions as lists of pixel indices, via union-find.
pub fn oracle_regions(mask: &BinaryMask) -> Vec<Vec<usize>> {
    let (h, w) = (mask.h, mask.w);
    let mut parent: Vec<usize> = (0..h * w).collect();
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) == 0 {
                continue;
            }
            for (dy, dx) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
                let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                    continue;
                }
                if mask.get(ny as usize, nx as usize) == 1 {
                    let a = find(&mut parent, y * w + x);
                    let b = find(&mut parent, ny as usize * w + nx as usize);
                    parent[a] = b;
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut regions: Vec<Vec<usize>> = Vec::new();
    for p in 0..h * w {
        if mask.values[p] == 0 {
            continue;
        }
        let r = find(&mut parent, p);
        match roots.iter().position(|&x| x == r) {
            Some(k) => regions[k].push(p),
            None => {
                roots.push(r);
                regions.push(vec![p]);
            }
        }
    }
    regions
}

/// AUPRO over every unique map value as a threshold.
pub fn oracle_aupro(masks: &[&BinaryMask], maps: &[&AnomalyMap], fpr_limit: f64) -> f64 {
    let regions: Vec<Vec<Vec<usize>>> = masks.iter().map(|m| oracle_regions(m)).collect();
    let n_regions: usize = regions.iter().map(Vec::len).sum();
    let n_normal: usize = masks
        .iter()
        .map(|m| m.values.iter().filter(|&&v| v == 0).count())
        .sum();
    let all: Vec<f64> = maps
        .iter()
        .flat_map(|m| m.values.iter().map(|&v| f64::from(v)))
        .collect();
    let mut points = vec![(0.0, 0.0)];
    for t in unique_desc(&all) {
        let mut fp = 0usize;
        let mut pro = 0.0;
        for (k, (mask, map)) in masks.iter().zip(maps).enumerate() {
            for p in 0..mask.values.len() {
                if mask.values[p] == 0 && f64::from(map.values[p]) >= t {
                    fp += 1;
                }
            }
            for region in &regions[k] {
                let hit = region
                    .iter()
                    .filter(|&&p| f64::from(map.values[p]) >= t)
                    .count();
                pro += hit as f64 / region.len() as f64;
            }
        }
        points.push((fp as f64 / n_normal as f64, pro / n_regions as f64));
    }
    let mut area = 0.0;
    for k in 1..points.len() {
        let (x0, y0) = points[k - 1];
        let (x1, y1) = points[k];
        if x0 >= fpr_limit {
            break;
        }
        if x1 <= fpr_limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (fpr_limit - x0) / (x1 - x0);
            area += (fpr_limit - x0) * (y0 + y) / 2.0;
            break;
        }
    }
    area / fpr_limit
}
