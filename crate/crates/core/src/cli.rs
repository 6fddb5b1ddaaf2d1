//! `train`, `analyze` and `report` subcommands.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or parse failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiment::{
    fmt_real, parse_entries, plot_tables, read_report, run, trend_summary, write_report,
    ExperimentConfig,
};
use crate::metrics::{analyze_layer, read_dump, AnalysisOptions};
use crate::nn::save_model;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const ANALYZE_HEADER: &str = "dump,path,nc1,nc2_norms,nc2_angles,nc4";

#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct CliError {
    pub code: i32,
    #[source]
    pub error: Error,
}

impl CliError {
    fn usage(error: Error) -> Self {
        Self {
            code: EXIT_USAGE,
            error,
        }
    }

    fn runtime(error: Error) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "layercollapse", version, about = "Layer-wise neural collapse metrics for small MLPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with scheduled analysis checkpoints and write the report.
    Train(TrainArgs),
    /// Compute the metrics of NCAD activation dumps, one CSV row per dump.
    Analyze(AnalyzeArgs),
    /// Turn a report into per-metric plot tables and a trend summary.
    Report(ReportArgs),
}

/// Flag overrides; each takes precedence over the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed_model: Option<u64>,
    #[arg(long)]
    pub seed_data: Option<u64>,
    #[arg(long)]
    pub seed_subsample: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// relu, tanh, leakyrelu or leakyrelu:<slope>
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub coord_cap: Option<usize>,
    #[arg(long)]
    pub max_lr: Option<f64>,
}

impl Overrides {
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key, v: Option<String>| {
            if let Some(v) = v {
                out.push((key, v));
            }
        };
        push("seed.model", self.seed_model.map(|v| v.to_string()));
        push("seed.data", self.seed_data.map(|v| v.to_string()));
        push("seed.subsample", self.seed_subsample.map(|v| v.to_string()));
        push("train.epochs", self.epochs.map(|v| v.to_string()));
        push("model.width", self.width.map(|v| v.to_string()));
        push("model.depth", self.depth.map(|v| v.to_string()));
        push("model.activation", self.activation.clone());
        push("analysis.coord_cap", self.coord_cap.map(|v| v.to_string()));
        push("schedule.max_lr", self.max_lr.map(|v| format!("{v:?}")));
        out
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "nc-out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(required = true)]
    pub dumps: Vec<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    pub coord_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed_subsample: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub report: PathBuf,
    #[arg(long, default_value = "nc-plots")]
    pub out_dir: PathBuf,
}

/// Config file overlaid with flag overrides.
pub fn effective_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(Error::io(path, e)))?;
    let mut kv = parse_entries(&text).map_err(|e| CliError::usage(in_file(path, e)))?;
    for (key, value) in overrides.entries() {
        kv.insert(key.to_string(), value);
    }
    ExperimentConfig::from_entries(kv).map_err(|e| CliError::usage(in_file(path, e)))
}

fn in_file(path: &Path, e: Error) -> Error {
    Error::format(path, e.to_string())
}

/// Writes `report.json`, `report.csv`, `model.ncmd` and the effective config
/// (`config.txt`) into `out_dir`. On a failed run the partial report is still
/// written.
pub fn cmd_train(args: &TrainArgs) -> Result<ExperimentConfig, CliError> {
    let config = effective_config(&args.config, &args.overrides)?;
    let out = &args.out_dir;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(Error::io(out, e)))?;
    let echo = out.join("config.txt");
    fs::write(&echo, config.to_text()).map_err(|e| CliError::runtime(Error::io(&echo, e)))?;
    match run(&config) {
        Ok(result) => {
            write_report(out, &result.report).map_err(CliError::runtime)?;
            save_model(&out.join("model.ncmd"), &result.model).map_err(CliError::runtime)?;
            Ok(config)
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                // the run error is the one worth reporting
                let _ = write_report(out, partial);
            }
            Err(CliError::runtime(failure.error))
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Every dump is decoded before any is analyzed, so a bad file fails fast.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    let dumps = args
        .dumps
        .iter()
        .map(|p| read_dump(p).map_err(CliError::usage))
        .collect::<Result<Vec<_>, _>>()?;
    let options = AnalysisOptions {
        coord_cap: args.coord_cap,
        seed: args.seed_subsample,
        rel_tol: None,
    };
    let mut csv = String::from(ANALYZE_HEADER);
    csv.push('\n');
    for (k, (path, dump)) in args.dumps.iter().zip(&dumps).enumerate() {
        let m = analyze_layer(
            k + 1,
            &dump.activations,
            &dump.labels,
            &dump.predictions,
            dump.class_count,
            &options,
        )
        .map_err(|e| CliError::runtime(in_file(path, e)))?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            k + 1,
            csv_field(&path.display().to_string()),
            fmt_real(m.nc1),
            fmt_real(m.nc2_norms),
            fmt_real(m.nc2_angles),
            fmt_real(m.nc4)
        );
    }
    if let Some(out) = &args.output {
        fs::write(out, &csv).map_err(|e| CliError::runtime(Error::io(out, e)))?;
    }
    Ok(csv)
}

/// Writes `<metric>.tsv` for each metric plus `trend.json`; returns the
/// written paths.
pub fn cmd_report(args: &ReportArgs) -> Result<Vec<PathBuf>, CliError> {
    let report = read_report(&args.report).map_err(CliError::usage)?;
    let trend = trend_summary(&report).map_err(CliError::usage)?;
    let out = &args.out_dir;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(Error::io(out, e)))?;
    let mut written = Vec::new();
    for (kind, table) in plot_tables(&report) {
        let path = out.join(format!("{}.tsv", kind.name()));
        fs::write(&path, table).map_err(|e| CliError::runtime(Error::io(&path, e)))?;
        written.push(path);
    }
    let path = out.join("trend.json");
    let json = serde_json::to_string_pretty(&trend).map_err(|e| CliError::runtime(e.into()))?;
    fs::write(&path, json).map_err(|e| CliError::runtime(Error::io(&path, e)))?;
    written.push(path);
    Ok(written)
}

/// Parses arguments, dispatches, prints diagnostics and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Train(args) => cmd_train(args).map(|_| {
            eprintln!("wrote report to {}", args.out_dir.display());
        }),
        Command::Analyze(args) => cmd_analyze(args).map(|csv| {
            if args.output.is_none() {
                print!("{csv}");
            }
        }),
        Command::Report(args) => cmd_report(args).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
