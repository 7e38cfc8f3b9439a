//! `zsad` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime-limit abort. Failures also print a one-line JSON error record
//! on standard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zsad_core::error::{Error, ErrorKind};
use zsad_core::metrics::MetricWeights;
use zsad_core::pipeline;
use zsad_core::postprocess::foreground_mask;
use zsad_core::store::{load_gray_raster, write_gray_raster};
use zsad_core::testkit::{synth_bundle, write_dataset, SynthSpec};
use zsad_core::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "zsad",
    version,
    about = "Zero-shot anomaly scoring over precomputed patch features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a test set: anomaly maps plus raw and refined image scores.
    Run(RunArgs),
    /// Evaluate a prediction directory against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic test set with planted anomalies.
    Synth(SynthArgs),
    /// Compute foreground masks for a directory of PGM rasters.
    Mask(MaskArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seg_manifest: PathBuf,
    /// Defaults to the segmentation manifest.
    #[arg(long)]
    cls_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Distance-tile memory budget in MiB.
    #[arg(long)]
    mem_budget: Option<usize>,
    /// Abort after this many seconds of wall-clock time.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Apply the foreground mask regardless of class.
    #[arg(long)]
    mask: bool,
    #[arg(long)]
    dump_patch_scores: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory written by `zsad run`.
    #[arg(long)]
    pred: PathBuf,
    /// Manifest with labels_path and masks_dir.
    #[arg(long)]
    gt_manifest: PathBuf,
    /// Where report.json and curves.csv go; defaults to the prediction directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seven comma-separated weights: img AUROC, AP, F1, pix AUROC, AUPRO, AP, F1.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    fpr_limit: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_images: Option<usize>,
    #[arg(long)]
    grid_h: Option<usize>,
    #[arg(long)]
    grid_w: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_clusters: Option<usize>,
    #[arg(long)]
    anomaly_rate: Option<f64>,
    #[arg(long)]
    anomaly_offset: Option<f64>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    block: Option<usize>,
    #[arg(long)]
    patch_px: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    rasters_dir: PathBuf,
    /// Dilation radius as a fraction of the shorter image side.
    #[arg(long, default_value_t = zsad_core::postprocess::DEFAULT_MARGIN_FRACTION)]
    margin: f64,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Error> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn parse_weights(text: &str) -> Result<MetricWeights, Error> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("--weights: {e}")))?;
    let arr: [f64; 7] = values.try_into().map_err(|v: Vec<f64>| {
        Error::InvalidArgument(format!("--weights needs 7 values, got {}", v.len()))
    })?;
    MetricWeights::from_array(arr)
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(m) = args.mem_budget {
        cfg.mem_budget_mib = m;
    }
    if args.time_limit.is_some() {
        cfg.time_limit_secs = args.time_limit;
    }
    cfg.mask_enabled |= args.mask;
    cfg.dump_patch_scores |= args.dump_patch_scores;
    cfg.validate()?;
    let cls = args.cls_manifest.as_deref().unwrap_or(&args.seg_manifest);
    let out = pipeline::run_to_dir(&args.seg_manifest, cls, &cfg, &args.out)?;
    log::info!(
        "wrote {} maps and scores to {}",
        out.maps.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(w) = &args.weights {
        cfg.set_weights(&parse_weights(w)?);
    }
    if let Some(f) = args.fpr_limit {
        cfg.fpr_limit = f;
    }
    cfg.validate()?;
    let (report, curves) =
        pipeline::evaluate_dir(&args.pred, &args.gt_manifest, &cfg.weights(), &cfg.aupro())?;
    pipeline::write_report(args.out.as_deref().unwrap_or(&args.pred), &report, &curves)?;
    println!("{:.4}", report.final_score);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_images: args.n_images.unwrap_or(d.n_images),
        grid_h: args.grid_h.unwrap_or(d.grid_h),
        grid_w: args.grid_w.unwrap_or(d.grid_w),
        dim: args.dim.unwrap_or(d.dim),
        n_clusters: args.n_clusters.unwrap_or(d.n_clusters),
        anomaly_rate: args.anomaly_rate.unwrap_or(d.anomaly_rate),
        anomaly_offset: args.anomaly_offset.unwrap_or(d.anomaly_offset),
        seed: args.seed.unwrap_or(d.seed),
        n_layers: args.n_layers.unwrap_or(d.n_layers),
        block: args.block.unwrap_or(d.block),
        patch_px: args.patch_px.unwrap_or(d.patch_px),
        noise: args.noise.unwrap_or(d.noise),
    };
    let ds = synth_bundle(&spec)?;
    let path = write_dataset(&ds, &args.out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_mask(args: MaskArgs) -> Result<(), Error> {
    let read_dir = |p: &Path| {
        fs::read_dir(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })
    };
    let mut inputs: Vec<PathBuf> = read_dir(&args.rasters_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    inputs.sort();
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    for input in inputs {
        let raster = load_gray_raster(&input)?;
        let fg = foreground_mask(&raster, args.margin)?;
        if fg.degenerate {
            eprintln!(
                "warning: {} has a single intensity; mask is all ones",
                input.display()
            );
        }
        let name = input.file_name().expect("read_dir entries have names");
        write_gray_raster(args.out.join(name), &fg.mask.to_gray())?;
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::TimeLimit => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Mask(a) => cmd_mask(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": { "code": e.code(), "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{record}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
