//! Zero-shot anomaly scoring over precomputed patch features.
//!
//! The engine never sees pixels of the test images, only backbone patch
//! features for the whole unlabeled test set. Patches that recur across
//! many images are normal; patches that find no counterpart elsewhere are
//! anomalous.
//!
//! * [`store`]: manifests, f32 blobs, PGM rasters, ground truth.
//! * [`lnamd`]: multi-degree neighborhood aggregation of patch features.
//! * [`msm`]: mutual scoring of patches against every other image.
//! * [`rscin`]: image-score refinement over a top-k similarity graph.
//! * [`postprocess`]: pixel maps, foreground masking, top-2 image scores.
//! * [`metrics`]: AUROC, AP, F1-max, AUPRO and the weighted final score.
//! * [`testkit`]: synthetic data with planted anomalies and oracles.
//! * [`pipeline`]: the `run` and `eval` flows used by the CLI.

pub mod config;
pub mod error;
pub mod imgproc;
pub mod lnamd;
pub mod metrics;
pub mod msm;
pub mod pipeline;
pub mod postprocess;
pub mod raster;
pub mod rscin;
pub mod store;
pub mod testkit;

pub use config::PipelineConfig;
pub use error::{Error, ErrorKind, Result};
pub use lnamd::{aggregate, AggregatedBundle};
pub use metrics::{AuproConfig, MetricReport, MetricValues, MetricWeights};
pub use msm::{MsmConfig, PatchScoreSet};
pub use raster::{AnomalyMap, BinaryMask, GrayRaster};
pub use rscin::{ImageScoreVector, RscinConfig};
pub use store::{DatasetManifest, FeatureBundle, GroundTruth, Purpose};
