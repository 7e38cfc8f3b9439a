//! Flat TOML run configuration. Every key is optional; missing keys take the
//! defaults below, and CLI flags override file values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lnamd::DEFAULT_DEGREES;
use crate::metrics::{AuproConfig, MetricWeights, DEFAULT_FPR_LIMIT, DEFAULT_PRO_STEPS};
use crate::msm::{MsmConfig, DEFAULT_INTERVAL_FRACTION};
use crate::postprocess::{DEFAULT_MARGIN_FRACTION, DEFAULT_SECOND_WEIGHT, DEFAULT_SIGMA};
use crate::rscin::{RscinConfig, DEFAULT_WINDOWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub degrees: Vec<usize>,
    pub interval_fraction: f64,
    pub windows: Vec<usize>,
    /// Weight of the second-highest patch score in the image score.
    pub w2: f64,
    /// Gaussian smoothing of the upsampled maps, in pixels.
    pub sigma: f64,
    /// Apply the foreground mask to every class.
    pub mask_enabled: bool,
    /// Apply the foreground mask when the manifest's `class_name` is listed.
    pub mask_classes: Vec<String>,
    pub mask_margin_fraction: f64,
    pub weight_img_auroc: f64,
    pub weight_img_ap: f64,
    pub weight_img_f1: f64,
    pub weight_pix_auroc: f64,
    pub weight_pix_aupro: f64,
    pub weight_pix_ap: f64,
    pub weight_pix_f1: f64,
    pub fpr_limit: f64,
    pub pro_steps: usize,
    pub mem_budget_mib: usize,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_secs: Option<f64>,
    /// Also write the combined segmentation patch scores.
    pub dump_patch_scores: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = MetricWeights::default();
        Self {
            degrees: DEFAULT_DEGREES.to_vec(),
            interval_fraction: DEFAULT_INTERVAL_FRACTION,
            windows: DEFAULT_WINDOWS.to_vec(),
            w2: DEFAULT_SECOND_WEIGHT,
            sigma: DEFAULT_SIGMA,
            mask_enabled: false,
            mask_classes: Vec::new(),
            mask_margin_fraction: DEFAULT_MARGIN_FRACTION,
            weight_img_auroc: w.img_auroc,
            weight_img_ap: w.img_ap,
            weight_img_f1: w.img_f1,
            weight_pix_auroc: w.pix_auroc,
            weight_pix_aupro: w.pix_aupro,
            weight_pix_ap: w.pix_ap,
            weight_pix_f1: w.pix_f1,
            fpr_limit: DEFAULT_FPR_LIMIT,
            pro_steps: DEFAULT_PRO_STEPS,
            mem_budget_mib: 1024,
            threads: 0,
            time_limit_secs: None,
            dump_patch_scores: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.degrees.is_empty() {
            return fail("degrees must not be empty".into());
        }
        if let Some(r) = self.degrees.iter().find(|&&r| r == 0 || r % 2 == 0) {
            return fail(format!("degree {r} is not odd and positive"));
        }
        if !(0.0..0.5).contains(&self.mask_margin_fraction) {
            return fail("mask_margin_fraction must lie in [0, 0.5)".into());
        }
        if !(0.0..=1.0).contains(&self.w2) {
            return fail("w2 must lie in [0, 1]".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail("sigma must be >= 0".into());
        }
        if self.mem_budget_mib == 0 {
            return fail("mem_budget_mib must be positive".into());
        }
        if let Some(t) = self.time_limit_secs {
            if !(t > 0.0) {
                return fail("time_limit_secs must be positive".into());
            }
        }
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        wrap(self.msm().validate())?;
        wrap(self.rscin().validate())?;
        wrap(self.weights().validate())?;
        wrap(self.aupro().validate())?;
        Ok(())
    }

    pub fn msm(&self) -> MsmConfig {
        MsmConfig {
            interval_fraction: self.interval_fraction,
            mem_budget_bytes: self.mem_budget_mib.saturating_mul(1 << 20),
        }
    }

    pub fn rscin(&self) -> RscinConfig {
        RscinConfig {
            windows: self.windows.clone(),
        }
    }

    pub fn weights(&self) -> MetricWeights {
        MetricWeights {
            img_auroc: self.weight_img_auroc,
            img_ap: self.weight_img_ap,
            img_f1: self.weight_img_f1,
            pix_auroc: self.weight_pix_auroc,
            pix_aupro: self.weight_pix_aupro,
            pix_ap: self.weight_pix_ap,
            pix_f1: self.weight_pix_f1,
        }
    }

    pub fn set_weights(&mut self, w: &MetricWeights) {
        self.weight_img_auroc = w.img_auroc;
        self.weight_img_ap = w.img_ap;
        self.weight_img_f1 = w.img_f1;
        self.weight_pix_auroc = w.pix_auroc;
        self.weight_pix_aupro = w.pix_aupro;
        self.weight_pix_ap = w.pix_ap;
        self.weight_pix_f1 = w.pix_f1;
    }

    pub fn aupro(&self) -> AuproConfig {
        AuproConfig {
            fpr_limit: self.fpr_limit,
            steps: self.pro_steps,
        }
    }

    pub fn mask_applies(&self, class_name: Option<&str>) -> bool {
        self.mask_enabled || class_name.is_some_and(|c| self.mask_classes.iter().any(|m| m == c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_toml_roundtrip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.degrees, vec![1, 3]);
        assert_eq!(cfg.windows, vec![1, 8, 9]);
        assert_eq!(cfg.w2, 0.25);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg = PipelineConfig::from_toml("sigma = 2.0\nmask_classes = [\"pv\"]\n").unwrap();
        assert_eq!(cfg.sigma, 2.0);
        assert_eq!(cfg.interval_fraction, 0.3);
        assert!(cfg.mask_applies(Some("pv")));
        assert!(!cfg.mask_applies(Some("pill")));
        assert!(!cfg.mask_applies(None));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "degrees = [2]",
            "interval_fraction = 0.0",
            "windows = []",
            "w2 = 1.5",
            "weight_pix_f1 = 0.0",
            "fpr_limit = 1.5",
            "unknown_key = 1",
        ] {
            assert!(
                matches!(PipelineConfig::from_toml(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }
}
