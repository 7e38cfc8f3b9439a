//! Small raster routines: Otsu threshold, 8-connected labeling, disk dilation.

use std::collections::VecDeque;

use crate::raster::{BinaryMask, GrayRaster};

/// Otsu threshold over an 8-bit histogram. Pixels `<= t` form the lower
/// class. `None` when the raster holds a single intensity.
pub fn otsu_threshold(raster: &GrayRaster) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in &raster.values {
        hist[v as usize] += 1;
    }
    let total = raster.values.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let (mut w0, mut sum0) = (0f64, 0f64);
    let mut best: Option<(f64, u8)> = None;
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, t as u8));
        }
    }
    best.map(|(_, t)| t)
}

/// 8-connected components of the ones of `mask`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// 0 for background, otherwise `1 + component index`.
    pub labels: Vec<u32>,
    /// Pixel count of each component.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Index of the largest component; the lowest label wins ties.
    pub fn largest(&self) -> Option<usize> {
        (0..self.sizes.len()).max_by(|&a, &b| self.sizes[a].cmp(&self.sizes[b]).then(b.cmp(&a)))
    }
}

pub fn label_components(mask: &BinaryMask) -> Components {
    let (h, w) = (mask.h, mask.w);
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if mask.values[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (y, x) = (p / w, p % w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask.values[q] == 1 && labels[q] == 0 {
                        labels[q] = label;
                        queue.push_back(q);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// Dilation by the disk `dx² + dy² <= r²`.
pub fn dilate_disk(mask: &BinaryMask, r: usize) -> BinaryMask {
    if r == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.h, mask.w);
    // prefix[y][x] = ones in row y before column x
    let prefix: Vec<Vec<u32>> = (0..h)
        .map(|y| {
            let mut acc = 0u32;
            std::iter::once(0)
                .chain(mask.values[y * w..(y + 1) * w].iter().map(|&v| {
                    acc += u32::from(v);
                    acc
                }))
                .collect()
        })
        .collect();
    let ri = r as isize;
    let half_widths: Vec<usize> = (-ri..=ri)
        .map(|dy| (((r * r) as isize - dy * dy) as f64).sqrt().floor() as usize)
        .collect();
    let mut out = BinaryMask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let hit = (-ri..=ri).any(|dy| {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    return false;
                }
                let hw = half_widths[(dy + ri) as usize];
                let x0 = x.saturating_sub(hw);
                let x1 = (x + hw + 1).min(w);
                let row = &prefix[sy as usize];
                row[x1] > row[x0]
            });
            if hit {
                out.values[y * w + x] = 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn otsu_splits_two_levels() {
        let mut v = vec![20u8; 50];
        v.extend(vec![200u8; 50]);
        let r = GrayRaster::new(10, 10, v).unwrap();
        let t = otsu_threshold(&r).unwrap();
        assert!((20..200).contains(&t));
    }

    #[test]
    fn otsu_on_uniform_raster_is_none() {
        let r = GrayRaster::new(3, 3, vec![7; 9]).unwrap();
        assert_eq!(otsu_threshold(&r), None);
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let m = BinaryMask::new(3, 3, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        let c = label_components(&m);
        assert_eq!(c.sizes, vec![3]);
        let m = BinaryMask::new(2, 3, vec![1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(label_components(&m).sizes, vec![1, 2]);
        assert_eq!(label_components(&m).largest(), Some(1));
    }

    #[test]
    fn dilation_matches_distance_rule() {
        let mut m = BinaryMask::zeros(11, 11);
        m.values[5 * 11 + 5] = 1;
        let d = dilate_disk(&m, 3);
        for y in 0..11i32 {
            for x in 0..11i32 {
                let inside = (y - 5).pow(2) + (x - 5).pow(2) <= 9;
                assert_eq!(d.get(y as usize, x as usize) == 1, inside, "({y},{x})");
            }
        }
    }
}
