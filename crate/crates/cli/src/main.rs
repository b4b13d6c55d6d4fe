//! `nowcast`: build reporting triangles, fit delay models, nowcast, compare
//! variants and run simulation studies.
//!
//! Exit codes: 0 success, 1 output failure, 2 invalid input, 3 convergence
//! failure (some monitored R-hat above 1.1; disable with `--no-strict`).

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use error::{CliError, CliResult};
use nowcast_core::inference::SamplerConfig;

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "Bayesian nowcasting of delayed surveillance counts", long_about = None)]
struct Cli {
    /// Worker threads for chains, prediction and replicates (default: all cores).
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a line-list CSV into a triangle JSON file.
    Ingest(IngestArgs),
    /// Fit a model to a triangle and write posterior samples.
    Fit(FitArgs),
    /// Predict the unreported counts and summarise the corrected totals.
    Nowcast(NowcastArgs),
    /// Fit several variants to one triangle and tabulate DIC and WAIC.
    Compare(CompareArgs),
    /// Simulate datasets from a scenario, optionally scoring interval coverage.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a run manifest after checking its inputs.
    Replay(ReplayArgs),
}

/// Line-list CSV: header `event_date,report_date[,region]`, ISO-8601 dates.
/// Output triangle JSON: `T`, `D`, `S`, `unit`, `as_of`, `regions`, `counts`
/// (`[t][d]` or `[t][d][s]`, null when unobserved) and `overflow`.
#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// `week` (Sunday start), `week-mon`, ..., or `day`.
    #[arg(long, default_value = "week")]
    pub unit: String,
    /// Largest delay D kept as its own column; longer delays go to overflow.
    #[arg(long)]
    pub max_delay: usize,
    /// Last date of the data (YYYY-MM-DD); later reports are not yet known.
    #[arg(long)]
    pub as_of: String,
    /// Date whose period becomes row 1 (default: earliest event).
    #[arg(long)]
    pub origin: Option<String>,
    /// Adjacency CSV: first row and column are region labels, entries 0/1.
    /// Without it all records are pooled into one region.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 3)]
    pub chains: usize,
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burn: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
    /// Seed for every random draw of the run.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl SamplerArgs {
    pub fn config(&self) -> CliResult<SamplerConfig> {
        let cfg = SamplerConfig::new(self.chains, self.iters, self.burn, self.thin, self.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes `<prefix>.samples.csv` (one row per kept draw), the sidecar
/// `<prefix>.samples.json` (model, sampler settings, acceptance rates,
/// adaptation log, diagnostics), `<prefix>.diagnostics.csv` and
/// `<prefix>.manifest.json`.
#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub triangle: PathBuf,
    /// BASE or M0..M7.
    #[arg(long, default_value = "BASE")]
    pub model: String,
    /// Adjacency CSV; required for M0..M7.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub out_prefix: PathBuf,
    /// Report R-hat above 1.1 without failing.
    #[arg(long)]
    pub no_strict: bool,
}

/// Output CSV: `t,s,observed_partial,mean,median`, one `q<percent>` column
/// per requested quantile other than 0.5, and `exceedance` with a threshold.
/// Rows cover the last D+1 periods, per region and (with S > 1) for `all`.
#[derive(Debug, Args, Serialize)]
pub struct NowcastArgs {
    /// Samples CSV written by `fit`; its `.json` sidecar must sit beside it.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub triangle: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.5,0.975")]
    pub quantiles: Vec<f64>,
    /// Report the probability that each total exceeds this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Seed of the predictive draws.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every predictive draw of every total (`draw,N[t,s],...`).
    #[arg(long)]
    pub draws: Option<PathBuf>,
}

/// Output CSV: `model,Dbar,pD,DIC,WAIC`.
#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub triangle: PathBuf,
    /// Comma-separated variants, e.g. `M0,M4`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Scenario JSON: `spec`, `truth` (`{"explicit": state}` or
/// `{"hyperparameters": {...}}`), optional `regions`, `adjacency`,
/// `covariates`, `outbreak`, and `seed`. Replicate r (from 1) writes
/// `rep-<r>.triangle.json` (censored at the last period), `rep-<r>.full.json`
/// and `rep-<r>.truth.json`.
#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Fit every replicate and write `coverage.csv`.
    #[arg(long)]
    pub coverage: bool,
    /// Nominal levels scored by `--coverage`.
    #[arg(long, value_delimiter = ',', default_value = "0.95")]
    pub levels: Vec<f64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

fn run(cli: Cli, args: &[String]) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a, args),
        Command::Fit(a) => commands::fit(&a, args),
        Command::Nowcast(a) => commands::nowcast(&a, args),
        Command::Compare(a) => commands::compare(&a, args),
        Command::Simulate(a) => commands::simulate(&a, args),
        Command::Replay(a) => {
            let m = manifest::read_manifest(&a.manifest)?;
            let changed = manifest::changed_inputs(&m);
            if !changed.is_empty() {
                return Err(CliError::input(format!(
                    "inputs changed since the recorded run: {}",
                    changed.join(", ")
                )));
            }
            let inner = Cli::try_parse_from(
                std::iter::once("nowcast".to_string()).chain(m.args.iter().cloned()),
            )
            .map_err(|e| CliError::input(format!("recorded arguments: {e}")))?;
            if matches!(inner.command, Command::Replay(_)) {
                return Err(CliError::input("a manifest cannot record a replay"));
            }
            run(
                Cli {
                    threads: None,
                    ..inner
                },
                &m.args,
            )
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
