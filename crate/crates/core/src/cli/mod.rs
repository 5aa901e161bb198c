//! The `ctts` command line: `generate`, `train` and `evaluate`.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{ArimaOrder, BaselineKind};
use crate::data::{
    chronological_split, generate_synthetic, load_csv, make_windows, write_csv, DatasetSplit, SplitRatios,
    SyntheticConfig, DEFAULT_NEUTRAL_BAND, INPUT_LEN,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    baseline_records, build_report, ctts_records, majority_class, reports_to_csv, reports_to_table, BaselineSettings,
};
use crate::model::{Checkpoint, CttsConfig};
use crate::training::{fit_with_callback, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ctts",
    version,
    about = "Price-direction classifier with classical baselines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic regime-switching price series to CSV.
    Generate(GenerateArgs),
    /// Train on a price CSV and write a checkpoint and a per-epoch log.
    Train(TrainArgs),
    /// Score a checkpoint and the baselines on the test split.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prices per series.
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub series: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Price CSV with header `symbol,timestamp,price`.
    #[arg(long)]
    pub data: PathBuf,
    /// Steps between consecutive window starts.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    /// Per-epoch log CSV.
    #[arg(long, default_value = "train_log.csv")]
    pub out: PathBuf,
    /// Seeds initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_NEUTRAL_BAND)]
    pub neutral_band: f64,
    #[arg(long, default_value = "1,2,4", value_parser = parse_scales)]
    pub scales: Scales,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    #[arg(long, default_value_t = 7)]
    pub kmax: usize,
    #[arg(long, default_value_t = 16)]
    pub dmodel: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 15)]
    pub patience: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    /// Report CSV.
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    /// Comma-separated subset of `arima,ema,naive`.
    #[arg(long, default_value = "arima,ema,naive", value_parser = parse_baselines)]
    pub baselines: Baselines,
    #[arg(long, default_value = "2,1,1", value_parser = parse_order)]
    pub arima_orders: ArimaOrder,
    /// Defaults to the checkpoint's band; any other value is rejected.
    #[arg(long)]
    pub neutral_band: Option<f64>,
    #[arg(long, value_parser = parse_scales)]
    pub scales: Option<Scales>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub dmodel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scales(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Baselines(pub Vec<BaselineKind>);

fn parse_scales(s: &str) -> std::result::Result<Scales, String> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("bad scale `{x}`")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Scales)
}

fn parse_baselines(s: &str) -> std::result::Result<Baselines, String> {
    if s.trim().is_empty() {
        return Ok(Baselines(Vec::new()));
    }
    s.split(',')
        .map(|x| x.parse::<BaselineKind>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Baselines)
}

fn parse_order(s: &str) -> std::result::Result<ArimaOrder, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (program name first) and runs the command, writing progress
/// to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

/// Per-series generator seed.
pub fn series_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    if args.series == 0 {
        return Err(Error::InvalidArgument("--series must be positive".into()));
    }
    let series = (0..args.series)
        .map(|i| {
            let config = SyntheticConfig {
                symbol: format!("SYN{i}"),
                length: args.length,
                ..SyntheticConfig::default()
            };
            generate_synthetic(&config, series_seed(args.seed, i))
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&args.out, &series)?;
    let _ = writeln!(
        out,
        "wrote {} series of {} prices to {}",
        args.series,
        args.length,
        args.out.display()
    );
    Ok(())
}

/// CSV, windows and chronological split with the default ratios.
pub fn load_split(data: &DataArgs, neutral_band: f64) -> Result<DatasetSplit> {
    let series = load_csv(&data.data)?;
    let mut per_series = Vec::with_capacity(series.len());
    for s in &series {
        let w = make_windows(s, data.stride, neutral_band)?;
        if w.too_short {
            return Err(Error::Validation {
                symbol: s.symbol().to_string(),
                msg: format!("{} prices, need at least {}", s.len(), INPUT_LEN + 1),
            });
        }
        per_series.push(w.windows);
    }
    chronological_split(&per_series, SplitRatios::default())
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let model_config = CttsConfig {
        d_model: args.dmodel,
        k_max: args.kmax,
        scales: args.scales.0.clone(),
        num_segments: args.segments,
        neutral_band: args.neutral_band,
        seed: args.seed,
        ..CttsConfig::default()
    };
    model_config.validate()?;
    let train_config = TrainConfig {
        batch_size: args.batch,
        max_epochs: args.epochs,
        patience: args.patience,
        learning_rate: args.lr,
        seed: args.seed,
        threads: args.data.threads,
        ..TrainConfig::default()
    };
    train_config.validate()?;
    let split = load_split(&args.data, args.neutral_band)?;
    let (params, log) = fit_with_callback(&split, &model_config, &train_config, |p, _| {
        Checkpoint {
            config: model_config.clone(),
            params: p.clone(),
            train_seed: args.seed,
        }
        .save(&args.checkpoint)
    })?;
    Checkpoint {
        config: model_config.clone(),
        params,
        train_seed: args.seed,
    }
    .save(&args.checkpoint)?;
    log.save_csv(&args.out)?;
    let best = log.best().expect("training ran at least one epoch");
    let _ = writeln!(
        out,
        "trained {} epochs on {} windows; best epoch {}: val_loss {:.6} val_acc {:.4}",
        log.epochs.len(),
        split.train.len(),
        best.epoch,
        best.val_loss,
        best.val_acc
    );
    Ok(())
}

fn check_matches<T: PartialEq + std::fmt::Debug>(flag: &str, given: Option<T>, stored: T) -> Result<()> {
    match given {
        Some(g) if g != stored => Err(Error::Config(format!(
            "--{flag} {g:?} does not match the checkpoint value {stored:?}"
        ))),
        _ => Ok(()),
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let c = &ckpt.config;
    check_matches("dmodel", args.dmodel, c.d_model)?;
    check_matches("kmax", args.kmax, c.k_max)?;
    check_matches("segments", args.segments, c.num_segments)?;
    check_matches("scales", args.scales.as_ref().map(|s| &s.0), &c.scales)?;
    check_matches("neutral-band", args.neutral_band, c.neutral_band)?;

    let split = load_split(&args.data, c.neutral_band)?;
    if split.test.is_empty() || split.validation.is_empty() {
        return Err(Error::Split("no test or validation windows".into()));
    }
    let threads = args.data.threads;
    let mut reports = vec![build_report(
        "ctts",
        &ctts_records(&ckpt.params, c, &split.test, threads)?,
    )?];
    let settings = BaselineSettings {
        arima_order: args.arima_orders,
        neutral_band: c.neutral_band,
        naive_class: majority_class(&split.validation)?,
    };
    for &kind in &args.baselines.0 {
        let records = baseline_records(kind, &settings, &split.test, threads)?;
        reports.push(build_report(kind.name(), &records)?);
    }
    std::fs::write(&args.out, reports_to_csv(&reports)).map_err(|e| Error::io(&args.out, e))?;
    let _ = write!(out, "{}", reports_to_table(&reports));
    Ok(())
}
