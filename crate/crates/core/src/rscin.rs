//! Image-level re-scoring over a constrained neighborhood graph.
//!
//! Each image's score is replaced by a similarity-weighted average of the
//! raw scores of its `k` most similar images (itself included), for several
//! window sizes `k`, and the per-window results are averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::GlobalFeatures;

pub const DEFAULT_WINDOWS: [usize; 3] = [1, 8, 9];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RscinConfig {
    pub windows: Vec<usize>,
}

impl Default for RscinConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
        }
    }
}

impl RscinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one re-scoring window is required".into(),
            ));
        }
        if self.windows.contains(&0) {
            return Err(Error::InvalidArgument(
                "re-scoring windows must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dense `n × n` similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Affinity {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        (0..n).for_each(|i| data[i * n + i] = 1.0);
        Self { n, data }
    }

    /// Square matrix from row-major values; entries must lie in `[0, 1]`.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "affinity needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "affinities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { n, data })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScoreVector {
    pub raw: Vec<f64>,
    pub refined: Vec<f64>,
}

/// Result of [`rescore`] along with the anomalies it had to work around.
#[derive(Debug, Clone, PartialEq)]
pub struct RescoreOutcome {
    pub refined: Vec<f64>,
    /// Rows whose neighborhood weights summed to zero and kept their raw score.
    pub degenerate_rows: usize,
    /// Windows larger than the number of images, clamped to it.
    pub clamped_windows: Vec<usize>,
}

/// `S[i][j] = max(0, cos(g_i, g_j))` with an exact unit diagonal.
pub fn build_affinity(global: &GlobalFeatures) -> Result<Affinity> {
    let n = global.n_rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            global
                .row(i)
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroNormRow { image: i });
    }
    let mut data = vec![0f64; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in i + 1..n {
            let d: f64 = global
                .row(i)
                .iter()
                .zip(global.row(j))
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
            let s = (d / (norms[i] * norms[j])).clamp(0.0, 1.0);
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    Ok(Affinity { n, data })
}

/// Neighborhood order of row `i`: self first, then by similarity descending,
/// ties by index.
fn neighbor_order(s: &Affinity, i: usize) -> Vec<usize> {
    let row = s.row(i);
    let mut others: Vec<usize> = (0..s.n).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    std::iter::once(i).chain(others).collect()
}

pub fn rescore(raw: &[f64], s: &Affinity, cfg: &RscinConfig) -> Result<RescoreOutcome> {
    cfg.validate()?;
    let n = raw.len();
    if s.n != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} scores but a {}x{} affinity",
            s.n, s.n
        )));
    }
    let mut clamped_windows = Vec::new();
    let windows: Vec<usize> = cfg
        .windows
        .iter()
        .map(|&k| {
            if k > n {
                clamped_windows.push(k);
                n
            } else {
                k
            }
        })
        .collect();
    if !clamped_windows.is_empty() {
        log::warn!("re-scoring windows {clamped_windows:?} exceed {n} images; clamped");
    }
    let mut degenerate_rows = 0;
    let mut refined = vec![0f64; n];
    for (i, out) in refined.iter_mut().enumerate() {
        let order = neighbor_order(s, i);
        let mut total = 0.0;
        for &k in &windows {
            let hood = &order[..k];
            let weight_sum: f64 = hood.iter().map(|&j| s.get(i, j)).sum();
            total += if weight_sum > 0.0 {
                hood.iter().map(|&j| s.get(i, j) * raw[j]).sum::<f64>() / weight_sum
            } else {
                degenerate_rows += 1;
                raw[i]
            };
        }
        *out = total / windows.len() as f64;
    }
    if degenerate_rows > 0 {
        log::warn!("{degenerate_rows} re-scoring neighborhoods had zero weight; kept raw scores");
    }
    Ok(RescoreOutcome {
        refined,
        degenerate_rows,
        clamped_windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global(rows: &[&[f32]]) -> GlobalFeatures {
        GlobalFeatures {
            dim: rows[0].len(),
            data: rows.concat(),
        }
    }

    #[test]
    fn identical_rows_give_all_ones() {
        let s = build_affinity(&global(&[&[1.0, 2.0], &[1.0, 2.0]])).unwrap();
        for v in &s.data {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_rows_give_identity() {
        let s = build_affinity(&global(&[&[1.0, 0.0], &[0.0, 3.0]])).unwrap();
        assert_eq!(s, Affinity::identity(2));
    }

    #[test]
    fn anti_parallel_rows_clamp_to_zero() {
        let s = build_affinity(&global(&[&[1.0, 1.0], &[-2.0, -2.0]])).unwrap();
        assert_eq!(s.data, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_row_rejected() {
        assert!(build_affinity(&global(&[&[1.0, 1.0], &[0.0, 0.0]])).is_err());
    }

    #[test]
    fn window_one_is_identity() {
        let s = Affinity::from_rows(2, vec![1.0; 4]).unwrap();
        let cfg = RscinConfig { windows: vec![1] };
        assert_eq!(
            rescore(&[0.3, 0.9], &s, &cfg).unwrap().refined,
            vec![0.3, 0.9]
        );
    }

    #[test]
    fn two_neighbor_average() {
        let s = Affinity::from_rows(2, vec![1.0; 4]).unwrap();
        let out = rescore(&[0.0, 1.0], &s, &RscinConfig { windows: vec![2] }).unwrap();
        assert_eq!(out.refined, vec![0.5, 0.5]);
        let out = rescore(
            &[0.0, 1.0],
            &s,
            &RscinConfig {
                windows: vec![1, 2],
            },
        )
        .unwrap();
        assert_eq!(out.refined, vec![0.25, 0.75]);
    }

    #[test]
    fn oversized_windows_are_clamped() {
        let s = Affinity::from_rows(2, vec![1.0; 4]).unwrap();
        let out = rescore(&[0.0, 1.0], &s, &RscinConfig::default()).unwrap();
        assert_eq!(out.clamped_windows, vec![8, 9]);
        // windows {1, 2, 2}
        assert!((out.refined[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_row_falls_back_to_raw() {
        // Row 0 puts zero weight on itself, which only hand-built matrices do.
        let s = Affinity::from_rows(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = rescore(&[0.2, 0.8], &s, &RscinConfig { windows: vec![2] }).unwrap();
        assert_eq!(out.degenerate_rows, 1);
        assert_eq!(out.refined, vec![0.2, 0.8]);
    }
}
