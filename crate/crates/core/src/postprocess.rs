//! From patch scores to pixel maps and image scores.
//!
//! Patch grids are upsampled bilinearly (patch centers at `(y + 0.5)·h/grid_h`,
//! clamped at the edges) and smoothed with a Gaussian. Optionally a
//! foreground mask built from the grayscale image pins every pixel outside
//! the object margin to the map minimum.

use crate::error::{Error, Result};
use crate::imgproc::{dilate_disk, label_components, otsu_threshold};
use crate::raster::{AnomalyMap, BinaryMask, GrayRaster};

pub const DEFAULT_SIGMA: f64 = 4.0;
pub const DEFAULT_MARGIN_FRACTION: f64 = 0.05;
pub const DEFAULT_SECOND_WEIGHT: f64 = 0.25;

/// Gaussian kernels are truncated at this many standard deviations.
const TRUNCATE: f64 = 4.0;

pub fn upsample_map(
    patch_scores: &[f64],
    grid_h: usize,
    grid_w: usize,
    h: usize,
    w: usize,
    sigma: f64,
) -> Result<AnomalyMap> {
    if patch_scores.len() != grid_h * grid_w || grid_h == 0 || grid_w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} patch scores for a {grid_h}x{grid_w} grid",
            patch_scores.len()
        )));
    }
    if h < grid_h || w < grid_w {
        return Err(Error::InvalidArgument(format!(
            "target {h}x{w} is smaller than the {grid_h}x{grid_w} grid"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let ys: Vec<(usize, usize, f64)> = (0..h).map(|py| source_coord(py, h, grid_h)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..w).map(|px| source_coord(px, w, grid_w)).collect();
    let mut values = vec![0f64; h * w];
    for (py, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (px, &(x0, x1, fx)) in xs.iter().enumerate() {
            let at = |y: usize, x: usize| patch_scores[y * grid_w + x];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            values[py * w + px] = top * (1.0 - fy) + bottom * fy;
        }
    }
    if sigma > 0.0 {
        values = gaussian_blur(&values, h, w, sigma);
    }
    AnomalyMap::new(h, w, values.into_iter().map(|v| v as f32).collect())
}

/// Pixel `p` of `size` pixels mapped into a grid of `cells`: the two
/// neighboring cell indices and the interpolation weight of the second.
fn source_coord(p: usize, size: usize, cells: usize) -> (usize, usize, f64) {
    let s = ((p as f64 + 0.5) * cells as f64 / size as f64 - 0.5).clamp(0.0, (cells - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(cells - 1);
    (i0, i1, s - i0 as f64)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (TRUNCATE * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(values: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0f64; h * w];
    for y in 0..h {
        let row = &values[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * row[clamp(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * tmp[clamp(y as isize + k as isize - radius, h) * w + x])
                .sum();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask {
    pub mask: BinaryMask,
    /// The raster had a single intensity; the mask is all ones.
    pub degenerate: bool,
    /// Polarity came from the larger-area side instead of the center pixel.
    pub used_fallback: bool,
}

/// Object mask: Otsu split, polarity from the center pixel, largest
/// 8-connected component, then a disk dilation of radius
/// `round(margin_fraction · min(h, w))`.
pub fn foreground_mask(raster: &GrayRaster, margin_fraction: f64) -> Result<ForegroundMask> {
    if !(0.0..0.5).contains(&margin_fraction) {
        return Err(Error::InvalidArgument(format!(
            "margin_fraction must lie in [0, 0.5), got {margin_fraction}"
        )));
    }
    let (h, w) = (raster.h, raster.w);
    let Some(t) = otsu_threshold(raster) else {
        log::warn!("raster has a single intensity; foreground mask is all ones");
        return Ok(ForegroundMask {
            mask: BinaryMask::ones(h, w),
            degenerate: true,
            used_fallback: false,
        });
    };
    let side = |upper: bool| BinaryMask {
        h,
        w,
        values: raster
            .values
            .iter()
            .map(|&v| u8::from((v > t) == upper))
            .collect(),
    };
    let center = (h / 2) * w + w / 2;
    let center_upper = raster.values[center] > t;
    let largest_of = |mask: &BinaryMask| {
        let comps = label_components(mask);
        let keep = comps.largest().map(|c| c as u32 + 1);
        let values = comps
            .labels
            .iter()
            .map(|&l| u8::from(Some(l) == keep))
            .collect();
        BinaryMask { h, w, values }
    };
    let mut used_fallback = false;
    let mut object = largest_of(&side(center_upper));
    if object.values[center] == 0 {
        // Center sits on a fragment; take the side covering more pixels.
        let upper = side(true);
        let upper_area = upper.count_ones();
        let larger_is_upper = upper_area * 2 >= h * w;
        object = largest_of(&side(larger_is_upper));
        used_fallback = true;
    }
    let radius = (margin_fraction * h.min(w) as f64).round() as usize;
    Ok(ForegroundMask {
        mask: dilate_disk(&object, radius),
        degenerate: false,
        used_fallback,
    })
}

/// Pixels outside the mask take the minimum of the whole map.
pub fn apply_mask(map: &AnomalyMap, mask: &BinaryMask) -> Result<AnomalyMap> {
    if (map.h, map.w) != (mask.h, mask.w) {
        return Err(Error::SizeMismatch(format!(
            "map is {}x{}, mask is {}x{}",
            map.h, map.w, mask.h, mask.w
        )));
    }
    let floor = map.min();
    let values = map
        .values
        .iter()
        .zip(&mask.values)
        .map(|(&v, &m)| if m == 1 { v } else { floor })
        .collect();
    Ok(AnomalyMap {
        h: map.h,
        w: map.w,
        values,
    })
}

/// `s(1) + w2·s(2)` over the two largest patch scores.
pub fn image_score_top2(patch_scores: &[f64], w2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w2) {
        return Err(Error::InvalidArgument(format!(
            "w2 must lie in [0, 1], got {w2}"
        )));
    }
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &s in patch_scores {
        if s > first {
            second = first;
            first = s;
        } else if s > second {
            second = s;
        }
    }
    match patch_scores.len() {
        0 => Err(Error::InvalidArgument("no patch scores".into())),
        1 => Ok(first),
        _ => Ok(first + w2 * second),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_gives_constant_map() {
        for sigma in [0.0, 1.5, 4.0] {
            let m = upsample_map(&[0.3; 6], 2, 3, 9, 11, sigma).unwrap();
            assert!(
                m.values.iter().all(|&v| (v - 0.3).abs() < 1e-6),
                "sigma {sigma}"
            );
        }
        let m = upsample_map(&[0.7], 1, 1, 5, 4, 2.0).unwrap();
        assert!(m.values.iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn two_by_two_to_four_by_four() {
        // Patch centers land on pixel coordinates 1 and 3; pixel centers sit
        // at source positions -0.25, 0.25, 0.75, 1.25, clamped into [0, 1].
        let m = upsample_map(&[0.0, 1.0, 1.0, 0.0], 2, 2, 4, 4, 0.0).unwrap();
        let f = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (fy, fx) = (f[y], f[x]);
                let expected = (1.0 - fy) * fx + fy * (1.0 - fx);
                assert!(
                    (f64::from(m.get(y, x)) - expected).abs() < 1e-7,
                    "({y},{x})"
                );
            }
        }
    }

    #[test]
    fn target_smaller_than_grid_rejected() {
        assert!(upsample_map(&[0.0; 4], 2, 2, 1, 4, 0.0).is_err());
    }

    #[test]
    fn apply_mask_examples() {
        let map = AnomalyMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = BinaryMask::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(
            apply_mask(&map, &mask).unwrap().values,
            vec![1.0, 1.0, 1.0, 4.0]
        );
        assert_eq!(apply_mask(&map, &BinaryMask::ones(2, 2)).unwrap(), map);
        assert_eq!(
            apply_mask(&map, &BinaryMask::zeros(2, 2)).unwrap().values,
            vec![1.0; 4]
        );
        assert!(apply_mask(&map, &BinaryMask::ones(1, 4)).is_err());
    }

    #[test]
    fn top2_examples() {
        assert!((image_score_top2(&[0.9, 0.8, 0.1], 0.25).unwrap() - 1.1).abs() < 1e-12);
        assert_eq!(image_score_top2(&[0.1, 0.9, 0.8], 0.0).unwrap(), 0.9);
        assert_eq!(image_score_top2(&[0.7], 0.25).unwrap(), 0.7);
        assert!(image_score_top2(&[], 0.25).is_err());
        // duplicates of the maximum count as the second score
        assert_eq!(image_score_top2(&[0.5, 0.5], 1.0).unwrap(), 1.0);
    }

    fn centered_square(size: usize, lo: usize, hi: usize) -> GrayRaster {
        let values = (0..size * size)
            .map(|p| {
                let (y, x) = (p / size, p % size);
                if (lo..hi).contains(&y) && (lo..hi).contains(&x) {
                    210
                } else {
                    30
                }
            })
            .collect();
        GrayRaster::new(size, size, values).unwrap()
    }

    #[test]
    fn square_mask_without_margin() {
        let r = centered_square(100, 30, 70);
        let fg = foreground_mask(&r, 0.0).unwrap();
        assert!(!fg.degenerate && !fg.used_fallback);
        let expected: Vec<u8> = r.values.iter().map(|&v| u8::from(v == 210)).collect();
        assert_eq!(fg.mask.values, expected);
    }

    #[test]
    fn square_mask_dilated_by_margin() {
        let r = centered_square(100, 30, 70);
        let fg = foreground_mask(&r, 0.05).unwrap();
        for y in 0..100i64 {
            for x in 0..100i64 {
                // squared distance from (y, x) to the square [30, 69]²
                let dy = (30 - y).max(y - 69).max(0);
                let dx = (30 - x).max(x - 69).max(0);
                let inside = dy * dy + dx * dx <= 25;
                assert_eq!(
                    fg.mask.get(y as usize, x as usize) == 1,
                    inside,
                    "({y},{x})"
                );
            }
        }
    }

    #[test]
    fn dark_object_on_bright_background() {
        let mut r = centered_square(40, 10, 30);
        r.values.iter_mut().for_each(|v| *v = 240 - *v);
        let fg = foreground_mask(&r, 0.0).unwrap();
        assert_eq!(fg.mask.count_ones(), 400);
        assert_eq!(fg.mask.get(20, 20), 1);
    }

    #[test]
    fn uniform_raster_is_degenerate() {
        let r = GrayRaster::new(5, 5, vec![90; 25]).unwrap();
        let fg = foreground_mask(&r, 0.05).unwrap();
        assert!(fg.degenerate);
        assert_eq!(fg.mask, BinaryMask::ones(5, 5));
        assert!(foreground_mask(&r, 0.5).is_err());
    }

    #[test]
    fn small_fragments_are_dropped() {
        let mut r = centered_square(40, 10, 30);
        r.values[0] = 210;
        r.values[39] = 210;
        let fg = foreground_mask(&r, 0.0).unwrap();
        assert_eq!(fg.mask.count_ones(), 400);
        assert_eq!(fg.mask.values[0], 0);
    }
}
