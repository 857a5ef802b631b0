//! `rsi-forecast`: market simulation, RSI reports and with/without-RSI
//! price forecasting experiments.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error carrying a machine-readable class for the one-line failure message.
#[derive(Debug)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Self { class, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "rsi-forecast", version, about = "RSI-aware electricity price forecasting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment configuration; omitted keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving outputs and manifest.json.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Run everything on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArg {
    /// Market CSV (date,hour,load,wavg_price,cap_1,...).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a pay-as-bid market and write its CSV.
    Synth(SynthArgs),
    /// Compute the RSI series and the market-condition table.
    Rsi(RsiArgs),
    /// Train one network on a (pattern, regime) cell and score it.
    Train(TrainArgs),
    /// Compare forecasts with and without RSI inputs over seeds.
    Ablate(AblateArgs),
    /// Correlations of price with load and RSI, plus plot data.
    Correlate(CorrelateArgs),
    /// Re-render tables from a run's outputs and check its digests.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub days: Option<usize>,
    /// Bid multiplier of pivotal generators.
    #[arg(long)]
    pub markup: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RsiArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArg,
    /// peak, offpeak or custom:<hours>; repeatable.
    #[arg(long)]
    pub regime: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArg,
    /// peak, offpeak or custom:<hours>.
    #[arg(long)]
    pub regime: Option<String>,
    /// all or a day pattern 0..3.
    #[arg(long, default_value = "all")]
    pub pattern: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, overrides_with = "no_rsi")]
    pub with_rsi: bool,
    #[arg(long, overrides_with = "with_rsi")]
    pub no_rsi: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArg,
    /// Repeatable; defaults to the configured regimes.
    #[arg(long)]
    pub regime: Vec<String>,
    /// Repeatable; defaults to the configured patterns.
    #[arg(long)]
    pub pattern: Vec<String>,
    /// Number of seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long)]
    pub regime: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// manifest.json of the run to report on.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Re-run the recorded command and require identical outputs.
    #[arg(long)]
    pub replay: bool,
    /// Defaults to `report/` beside the manifest.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn error_class(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.class;
        }
        if let Some(e) = cause.downcast_ref::<rsi_forecast::Error>() {
            return e.class();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "internal"
}

/// Joins the cause chain on one line, dropping causes already quoted by
/// the message above them.
fn one_line(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        if !parts.last().is_some_and(|prev| prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match commands::execute(cli.command, argv[1..].to_vec(), None, None) {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            let class = error_class(&err);
            eprintln!("error[{class}]: {}", one_line(&err));
            ExitCode::from(if class == "usage" { 2 } else { 1 })
        }
    }
}
