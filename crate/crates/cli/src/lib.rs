//! Argument parsing and subcommand dispatch for the `ladder` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ladder_core::analyzer::{
    analyze_segment, features_to_csv, load_segment, read_features_csv, AnalyzerError, InputFormat,
    RawGeometry, SegmentFeatures,
};
use ladder_core::gbt::GbtParams;
use ladder_core::ladder::{
    build_ladder, emit_encoder_commands, supported_resolutions_list, write_results_csv, FallbackPolicy,
    LadderConfig, LadderError, DEFAULT_BITRATES, DEFAULT_RESULTS_CSV,
};
use ladder_core::models::{ModelBundle, ModelError, Resolution};
use ladder_core::training::{
    evaluate_bundle, generate_synthetic_dataset, ingest_training_csv, split_by_segment, train_bundle,
    write_training_csv, MaeReport, SyntheticConfig, SyntheticOracle, TrainingError,
};
use thiserror::Error;

/// Time budgets at or above this many seconds mean "no limit".
pub const UNLIMITED_SECONDS: f64 = 9999.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Model(_) => 4,
        }
    }
}

impl From<AnalyzerError> for CliError {
    fn from(e: AnalyzerError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Io { .. }
            | TrainingError::Csv { .. }
            | TrainingError::MissingColumns(_)
            | TrainingError::InvalidRow { .. } => CliError::Io(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<LadderError> for CliError {
    fn from(e: LadderError) -> Self {
        match e {
            LadderError::InvalidConfig(_) | LadderError::UnknownCodec(_) | LadderError::NoResolutions(_) => {
                CliError::Usage(e.to_string())
            }
            LadderError::Output { .. } => CliError::Io(e.to_string()),
            LadderError::Model(_) => CliError::Model(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "ladder", version, about = "Per-segment bitrate ladder prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute complexity features of video segments.
    Analyze(AnalyzeArgs),
    /// Train a model bundle from a training CSV or synthetic data.
    Train(TrainArgs),
    /// Build bitrate ladders for analyzed segments.
    Build(BuildArgs),
    /// Write rate-quality and rate-time curves for plotting.
    ExportPlot(ExportPlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Pick from the file extension (`.y4m`, otherwise raw).
    Auto,
    Y4m,
    Raw,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Segment files (.y4m or raw planar YUV 4:2:0).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: Format,
    /// Raw input width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Raw input height.
    #[arg(long)]
    pub height: Option<usize>,
    /// Raw input bit depth (8 or 10).
    #[arg(long, default_value_t = 8)]
    pub bit_depth: u8,
    /// Feature CSV to append to.
    #[arg(long, default_value = "features.csv")]
    pub out: PathBuf,
    /// Segment id for a single input; defaults to the file stem.
    #[arg(long)]
    pub segment_id: Option<String>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "synthetic"]))]
pub struct TrainArgs {
    /// Training CSV.
    pub data: Option<PathBuf>,
    /// Generate this many synthetic segments instead of reading a CSV.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Bundle output directory.
    #[arg(long, default_value = "bundle")]
    pub out: PathBuf,
    /// Seed for the train/holdout split and synthetic generation.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 400)]
    pub trees: usize,
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    pub min_samples_leaf: usize,
    /// Also write the (synthetic or ingested) dataset to this CSV.
    #[arg(long)]
    pub dump_dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Feature CSV produced by `analyze`.
    pub features: PathBuf,
    /// Model bundle directory produced by `train`.
    pub bundle: PathBuf,
    /// Maximum encoding time per rung in seconds (9999 or "inf" for none).
    #[arg(long = "maxEncTime", default_value = "9999", value_parser = parse_seconds)]
    pub max_enc_time: f64,
    /// Maximum decoding time per rung in seconds (9999 or "inf" for none).
    #[arg(long = "maxDecTime", default_value = "9999", value_parser = parse_seconds)]
    pub max_dec_time: f64,
    #[arg(long, default_value = "vvenc")]
    pub codec: String,
    #[arg(long = "resultCsv", default_value = DEFAULT_RESULTS_CSV)]
    pub result_csv: PathBuf,
    /// Highest resolution considered, in luma lines.
    #[arg(long, default_value = "2160", value_parser = parse_resolution)]
    pub rmax: Resolution,
    /// XPSNR (dB) above which rungs count as perceptually lossless.
    #[arg(long = "maxQuality", default_value_t = 100.0, value_parser = parse_non_negative)]
    pub max_quality: f64,
    /// Minimum XPSNR gap (dB) between kept rungs; 0 keeps all.
    #[arg(long, default_value_t = 0.0, value_parser = parse_non_negative)]
    pub jnd: f64,
    /// What to do with a bitrate no resolution can meet the budgets for.
    #[arg(long, default_value = "drop", value_parser = parse_fallback)]
    pub fallback: FallbackPolicy,
    /// Target bitrates in Mbps, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_bitrate)]
    pub bitrates: Option<Vec<f64>>,
    /// Write encoder command lines for kept rungs to this file.
    #[arg(long)]
    pub commands: Option<PathBuf>,
    /// Source path pattern used in encoder commands; `{id}` is the segment id.
    #[arg(long, default_value = "{id}.y4m")]
    pub input: String,
}

#[derive(Debug, Args)]
pub struct ExportPlotArgs {
    pub features: PathBuf,
    pub bundle: PathBuf,
    /// Output directory for `<id>_rate_quality.csv` and `<id>_rate_enctime.csv`.
    #[arg(long, default_value = "plots")]
    pub out_dir: PathBuf,
    /// Lowest bitrate of the sweep (Mbps).
    #[arg(long, default_value_t = 0.1, value_parser = parse_bitrate)]
    pub min_bitrate: f64,
    /// Highest bitrate of the sweep (Mbps).
    #[arg(long, default_value_t = 20.0, value_parser = parse_bitrate)]
    pub max_bitrate: f64,
    /// Number of log-spaced bitrate points.
    #[arg(long, default_value_t = 48)]
    pub points: usize,
}

/// Seconds, or `inf`. Values of 9999 and above mean no limit.
pub fn parse_seconds(s: &str) -> Result<f64, String> {
    let v = match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "none" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|_| format!("not a number of seconds: {s:?}"))?,
    };
    if v.is_nan() || v <= 0.0 {
        return Err(format!("time budget must be positive, got {s}"));
    }
    Ok(if v >= UNLIMITED_SECONDS { f64::INFINITY } else { v })
}

pub fn parse_resolution(s: &str) -> Result<Resolution, String> {
    let unsupported =
        || format!("unsupported resolution {s:?}; expected one of {}", supported_resolutions_list());
    let lines: u32 = s.trim().trim_end_matches('p').parse().map_err(|_| unsupported())?;
    Resolution::new(lines).map_err(|_| unsupported())
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

fn parse_bitrate(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive bitrate in Mbps, got {s:?}")),
    }
}

fn parse_fallback(s: &str) -> Result<FallbackPolicy, String> {
    s.parse()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => analyze(&args),
        Command::Train(args) => train(&args),
        Command::Build(args) => build(&args),
        Command::ExportPlot(args) => export_plot(&args),
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    if args.segment_id.is_some() && args.inputs.len() > 1 {
        return Err(CliError::Usage("--segment-id needs exactly one input".into()));
    }
    for path in &args.inputs {
        let format = input_format(args, path)?;
        let seq = load_segment(path, format)?;
        let features = analyze_segment(&seq)?;
        let id = match &args.segment_id {
            Some(id) => id.clone(),
            None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        features_to_csv(&features, &id, &args.out)?;
        println!(
            "{id}: {} frames, E_Y={:.3} h={:.3} L_Y={:.3}",
            seq.frame_count(),
            features.e_y,
            features.h,
            features.l_y
        );
    }
    Ok(())
}

fn input_format(args: &AnalyzeArgs, path: &Path) -> Result<InputFormat, CliError> {
    let is_y4m = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    match args.format {
        Format::Y4m => Ok(InputFormat::Y4m),
        Format::Auto if is_y4m => Ok(InputFormat::Y4m),
        Format::Raw | Format::Auto => match (args.width, args.height) {
            (Some(width), Some(height)) => {
                Ok(InputFormat::Raw(RawGeometry { width, height, bit_depth: args.bit_depth }))
            }
            _ => Err(CliError::Usage(format!("{}: raw input needs --width and --height", path.display()))),
        },
    }
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--train-fraction must be in (0, 1), got {}",
            args.train_fraction
        )));
    }
    let params = GbtParams {
        max_depth: args.depth,
        n_trees: args.trees,
        learning_rate: args.learning_rate,
        min_samples_leaf: args.min_samples_leaf,
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let records = match (&args.data, args.synthetic) {
        (Some(path), _) => ingest_training_csv(path)?,
        (None, Some(n)) => {
            let cfg = SyntheticConfig { n_segments: n, seed: args.seed, ..SyntheticConfig::default() };
            generate_synthetic_dataset(&SyntheticOracle::default(), &cfg)
        }
        (None, None) => unreachable!("clap requires a data source"),
    };
    if let Some(path) = &args.dump_dataset {
        write_training_csv(&records, path)?;
    }
    let (train, holdout) = split_by_segment(&records, args.train_fraction, args.seed);
    let bundle = train_bundle(&train, &params, Some(args.seed))?;
    bundle.save_dir(&args.out)?;
    println!("trained on {} records, bundle written to {}", train.len(), args.out.display());
    if holdout.is_empty() {
        println!("no holdout segments; skipping evaluation");
    } else {
        print!("{}", format_report(&evaluate_bundle(&bundle, &holdout)?));
    }
    Ok(())
}

pub fn format_report(r: &MaeReport) -> String {
    let mut out = format!("holdout records: {}\n", r.records);
    for (name, s, unit) in [
        ("qp", r.qp, ""),
        ("xpsnr", r.xpsnr, " dB"),
        ("enc_time", r.enc_time, " s"),
        ("dec_time", r.dec_time, " s"),
    ] {
        let _ = writeln!(out, "{name:<9} MAE {:.4}{unit}  std {:.4}{unit}", s.mae, s.std);
    }
    let _ = writeln!(out, "enc_time relative MAE {:.2}%", 100.0 * r.enc_time_rel.mae);
    let _ = writeln!(out, "dec_time relative MAE {:.2}%", 100.0 * r.dec_time_rel.mae);
    out
}

fn load_inputs(
    features: &Path,
    bundle: &Path,
) -> Result<(Vec<(String, SegmentFeatures)>, ModelBundle), CliError> {
    let segments = read_features_csv(features)?;
    if segments.is_empty() {
        return Err(CliError::Io(format!("{}: no segments", features.display())));
    }
    Ok((segments, ModelBundle::load_dir(bundle)?))
}

fn build(args: &BuildArgs) -> Result<(), CliError> {
    let cfg = LadderConfig {
        bitrates: args.bitrates.clone().unwrap_or_else(|| DEFAULT_BITRATES.to_vec()),
        tau_e: args.max_enc_time,
        tau_d: args.max_dec_time,
        r_max: args.rmax,
        jnd: args.jnd,
        max_quality: args.max_quality,
        codec: args.codec.clone(),
        fallback: args.fallback,
        ..LadderConfig::default()
    };
    cfg.validate()?;
    let (segments, bundle) = load_inputs(&args.features, &args.bundle)?;
    let mut ladders = Vec::with_capacity(segments.len());
    for (id, features) in &segments {
        ladders.push(build_ladder(&bundle, features, &cfg, id)?);
    }
    write_results_csv(&ladders, &args.result_csv)?;

    if let Some(path) = &args.commands {
        let mut script = String::from("#!/bin/sh\nset -e\n");
        for ladder in &ladders {
            let input = args.input.replace("{id}", &ladder.segment_id);
            for cmd in emit_encoder_commands(ladder, &cfg, &input)? {
                script.push_str(&cmd);
                script.push('\n');
            }
        }
        fs::write(path, script).map_err(|e| io_error(path, e))?;
    }
    let kept: usize = ladders.iter().map(|l| l.kept().count()).sum();
    let total: usize = ladders.iter().map(|l| l.rungs.len()).sum();
    println!(
        "{} segments, {kept}/{total} rungs kept, results in {}",
        ladders.len(),
        args.result_csv.display()
    );
    Ok(())
}

fn export_plot(args: &ExportPlotArgs) -> Result<(), CliError> {
    if args.points < 2 || args.min_bitrate >= args.max_bitrate {
        return Err(CliError::Usage("need --points >= 2 and --min-bitrate < --max-bitrate".into()));
    }
    let (segments, bundle) = load_inputs(&args.features, &args.bundle)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    let step = (args.max_bitrate / args.min_bitrate).ln() / (args.points - 1) as f64;
    let bitrates: Vec<f64> = (0..args.points).map(|i| args.min_bitrate * (step * i as f64).exp()).collect();

    for (id, features) in &segments {
        let mut quality = String::from("resolution,bitrate_mbps,qp,pred_xpsnr\n");
        let mut time = String::from("resolution,bitrate_mbps,qp,pred_enc_time_s,pred_dec_time_s\n");
        for r in Resolution::all() {
            for &b in &bitrates {
                let p = bundle.predict(features, r, b)?;
                let _ = writeln!(quality, "{r},{b:.4},{},{:.4}", p.qp, p.xpsnr);
                let _ = writeln!(time, "{r},{b:.4},{},{:.3},{:.3}", p.qp, p.enc_time, p.dec_time);
            }
        }
        for (suffix, body) in [("rate_quality", quality), ("rate_enctime", time)] {
            let path = args.out_dir.join(format!("{id}_{suffix}.csv"));
            fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        }
    }
    println!("wrote curves for {} segments to {}", segments.len(), args.out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_parsing() {
        assert_eq!(parse_seconds("100").unwrap(), 100.0);
        assert_eq!(parse_seconds("9999").unwrap(), f64::INFINITY);
        assert_eq!(parse_seconds("inf").unwrap(), f64::INFINITY);
        assert!(parse_seconds("-5").is_err());
        assert!(parse_seconds("0").is_err());
        assert!(parse_seconds("soon").is_err());
    }

    #[test]
    fn resolution_parsing_lists_supported_set() {
        assert_eq!(parse_resolution("720").unwrap().lines(), 720);
        assert_eq!(parse_resolution("1080p").unwrap().lines(), 1080);
        let err = parse_resolution("999").unwrap_err();
        assert!(err.contains("{360,432,540,720,1080,1440,2160}"), "{err}");
    }

    #[test]
    fn build_defaults() {
        let cli = Cli::try_parse_from(["ladder", "build", "f.csv", "b"]).unwrap();
        let Command::Build(args) = cli.command else { panic!() };
        assert_eq!(args.max_enc_time, f64::INFINITY);
        assert_eq!(args.max_dec_time, f64::INFINITY);
        assert_eq!(args.codec, "vvenc");
        assert_eq!(args.result_csv, PathBuf::from("results.csv"));
        assert_eq!(args.rmax.lines(), 2160);
        assert_eq!(args.max_quality, 100.0);
        assert_eq!(args.jnd, 0.0);
        assert_eq!(args.fallback, FallbackPolicy::Drop);
    }

    #[test]
    fn unknown_and_invalid_flags_are_rejected() {
        assert!(Cli::try_parse_from(["ladder", "build", "f.csv", "b", "--maxEncTme", "5"]).is_err());
        assert!(Cli::try_parse_from(["ladder", "build", "f.csv", "b", "--jnd", "-1"]).is_err());
        assert!(Cli::try_parse_from(["ladder", "build", "f.csv", "b", "--rmax", "999"]).is_err());
        assert!(Cli::try_parse_from(["ladder", "train"]).is_err());
    }
}
