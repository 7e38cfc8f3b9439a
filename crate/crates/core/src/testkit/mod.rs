//! Synthetic data with planted anomalies, and brute-force oracles.

pub mod oracle;
mod synth;

pub use oracle::{
    oracle_aupro, oracle_average_precision, oracle_f1_max, oracle_lnamd,
    oracle_min_cross_distances, oracle_msm, oracle_regions, oracle_rescore, oracle_roc_auc,
};
pub use synth::{synth_bundle, write_dataset, SynthDataset, SynthSpec, MANIFEST_FILE};
