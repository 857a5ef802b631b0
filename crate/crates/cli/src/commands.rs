use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use serde::Serialize;

use rsi_forecast::eval::{
    cell_split, fit_and_score, render_sensitivity_table, run_ablation, sensitivity_report, write_plot_csv,
    AblationReport, PatternSel, SensitivityRow,
};
use rsi_forecast::market_data::{load_csv, synthesize, write_csv, MarketDataset};
use rsi_forecast::mlp::{model_to_string, CandidateReport};
use rsi_forecast::rsi::{condition_report, render_condition_table, MarketConditionReport, RsiSeries};
use rsi_forecast::{Exec, Regime};

use crate::config::CliConfig;
use crate::manifest::{load_manifest, sha256_file, Outputs, RunManifest};
use crate::{AblateArgs, Cli, Command, Common, CorrelateArgs, CliError, ReportArgs, RsiArgs, SynthArgs, TrainArgs};

pub const MARKET_CSV: &str = "market.csv";
pub const RSI_CSV: &str = "rsi.csv";
pub const CONDITIONS_JSON: &str = "conditions.json";
pub const CONDITIONS_TXT: &str = "conditions.txt";
pub const MODEL_JSON: &str = "model.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const ABLATION_TXT: &str = "ablation.txt";
pub const SENSITIVITY_JSON: &str = "sensitivity.json";
pub const SENSITIVITY_TXT: &str = "sensitivity.txt";
pub const PLOT_CSV: &str = "correlation_plot.csv";
pub const REPORT_TXT: &str = "report.txt";

/// Test-span scores of a single trained model.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct TrainMetrics {
    pub pattern: PatternSel,
    pub regime: String,
    pub include_rsi: bool,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_hidden: usize,
    pub feature_fingerprint: String,
    pub feature_names: Vec<String>,
    pub rmse: f64,
    pub rmse_price: f64,
    pub candidates: Vec<CandidateReport>,
}

struct Ctx {
    config: CliConfig,
    out_dir: PathBuf,
    exec: Exec,
    args: Vec<String>,
}

impl Ctx {
    fn new(common: &Common, args: Vec<String>, config: Option<CliConfig>, out_dir: Option<PathBuf>) -> anyhow::Result<Self> {
        let config = match config {
            Some(c) => c,
            None => CliConfig::load(common.config.as_deref())?,
        };
        Ok(Self {
            config,
            out_dir: out_dir.unwrap_or_else(|| common.out_dir.clone()),
            exec: if common.sequential { Exec::Sequential } else { Exec::default() },
            args,
        })
    }
}

/// Runs one command. `config` and `out_dir` replace the values the
/// arguments would resolve to; replays use them.
pub fn execute(
    command: Command,
    args: Vec<String>,
    config: Option<CliConfig>,
    out_dir: Option<PathBuf>,
) -> anyhow::Result<RunManifest> {
    match command {
        Command::Synth(a) => synth(&a, Ctx::new(&a.common, args, config, out_dir)?),
        Command::Rsi(a) => rsi(&a, Ctx::new(&a.common, args, config, out_dir)?),
        Command::Train(a) => train(&a, Ctx::new(&a.common, args, config, out_dir)?),
        Command::Ablate(a) => ablate(&a, Ctx::new(&a.common, args, config, out_dir)?),
        Command::Correlate(a) => correlate(&a, Ctx::new(&a.common, args, config, out_dir)?),
        Command::Report(a) => report(&a, args),
    }
}

fn load_data(path: &Path) -> anyhow::Result<(MarketDataset, RsiSeries)> {
    let data = load_csv(path).with_context(|| format!("loading {}", path.display()))?;
    let rsi = RsiSeries::from_dataset(&data)?;
    info!("{}: {} hours, {} generators", path.display(), data.len(), data.n_generators());
    Ok((data, rsi))
}

fn parse_pattern(s: &str) -> anyhow::Result<PatternSel> {
    s.parse().map_err(|e: rsi_forecast::Error| CliError::new("usage", e.to_string()).into())
}

fn regime_names(regimes: &[Regime], flags: &[String]) -> Vec<String> {
    // Custom regimes are kept in their flag spelling so the snapshot replays.
    regimes
        .iter()
        .zip(flags.iter().chain(std::iter::repeat(&String::new())))
        .map(|(r, f)| if f.is_empty() { r.name.clone() } else { f.clone() })
        .collect()
}

fn synth(a: &SynthArgs, mut ctx: Ctx) -> anyhow::Result<RunManifest> {
    let sim = &mut ctx.config.sim;
    if let Some(seed) = a.seed {
        sim.seed = seed;
    }
    if let Some(days) = a.days {
        sim.days = days;
    }
    if let Some(m) = a.markup {
        sim.pivotal_markup = m;
    }
    let data = synthesize(sim)?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    write_csv(&data, out.create(MARKET_CSV)?)?;
    println!("{} hours written to {}", data.len(), ctx.out_dir.join(MARKET_CSV).display());
    let seeds = vec![ctx.config.sim.seed];
    out.finish("synth", ctx.args, &ctx.config, &[], seeds)
}

fn rsi(a: &RsiArgs, mut ctx: Ctx) -> anyhow::Result<RunManifest> {
    let regimes = ctx.config.regimes(&a.regime)?;
    ctx.config.regimes.names = regime_names(&regimes, &a.regime);
    let (_, series) = load_data(&a.data.data)?;
    let reports = regimes.iter().map(|r| condition_report(&series, r)).collect::<Result<Vec<_>, _>>()?;
    let table = render_condition_table(&reports);

    let mut out = Outputs::new(&ctx.out_dir)?;
    series.write_csv(out.create(RSI_CSV)?)?;
    out.write(CONDITIONS_JSON, serde_json::to_string_pretty(&reports)? + "\n")?;
    out.write(CONDITIONS_TXT, &table)?;
    print!("{table}");
    out.finish("rsi", ctx.args, &ctx.config, &[&a.data.data], vec![])
}

fn train(a: &TrainArgs, mut ctx: Ctx) -> anyhow::Result<RunManifest> {
    let cfg = &mut ctx.config;
    let regime_flag = a.regime.clone().or_else(|| cfg.regimes.names.first().cloned()).unwrap_or_else(|| "peak".into());
    let regime = cfg.regime(&regime_flag)?;
    cfg.regimes.names = vec![regime_flag];
    let pattern = parse_pattern(&a.pattern)?;
    if a.no_rsi {
        cfg.features.include_rsi = false;
    } else if a.with_rsi {
        cfg.features.include_rsi = true;
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let seed = cfg.train.seed;

    let (data, series) = load_data(&a.data.data)?;
    let (train_set, test_set) =
        cell_split(&data, &series, &cfg.features, pattern, &regime, cfg.ablation.train_fraction)?;
    if train_set.len() < cfg.ablation.min_train_samples || test_set.len() < cfg.ablation.min_test_samples {
        return Err(rsi_forecast::Error::InsufficientData(format!(
            "pattern {pattern}, regime {}: {} training and {} test samples (need {} and {})",
            regime.name,
            train_set.len(),
            test_set.len(),
            cfg.ablation.min_train_samples,
            cfg.ablation.min_test_samples
        ))
        .into());
    }
    let tc = rsi_forecast::mlp::TrainConfig { exec: ctx.exec, ..cfg.train.clone() };
    let scored = fit_and_score(&train_set, &test_set, &tc, seed)?;
    let metrics = TrainMetrics {
        pattern,
        regime: regime.name.clone(),
        include_rsi: cfg.features.include_rsi,
        seed,
        n_train: train_set.len(),
        n_test: test_set.len(),
        n_hidden: scored.search.best_hidden,
        feature_fingerprint: scored.model.fingerprint.clone(),
        feature_names: scored.model.feature_names.clone(),
        rmse: scored.rmse,
        rmse_price: scored.rmse_price,
        candidates: scored.search.reports.clone(),
    };

    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write(MODEL_JSON, model_to_string(&scored.model)?)?;
    scored.search.best.trace.write_csv(out.create(TRACE_CSV)?)?;
    out.write(METRICS_JSON, serde_json::to_string_pretty(&metrics)? + "\n")?;
    print!("{}", render_metrics(&metrics));
    out.finish("train", ctx.args, &ctx.config, &[&a.data.data], vec![seed])
}

fn render_metrics(m: &TrainMetrics) -> String {
    format!(
        "pattern {} ({}), regime {}, RSI inputs {}: {} hidden units, {} train / {} test samples\n\
         test RMSE {:.5} (scaled), {:.4} (price)\n",
        m.pattern,
        m.pattern.label(),
        m.regime,
        if m.include_rsi { "on" } else { "off" },
        m.n_hidden,
        m.n_train,
        m.n_test,
        m.rmse,
        m.rmse_price
    )
}

fn ablate(a: &AblateArgs, mut ctx: Ctx) -> anyhow::Result<RunManifest> {
    let cfg = &mut ctx.config;
    let regimes = cfg.regimes(&a.regime)?;
    cfg.regimes.names = regime_names(&regimes, &a.regime);
    if !a.pattern.is_empty() {
        cfg.ablation.patterns = a.pattern.iter().map(|p| parse_pattern(p)).collect::<anyhow::Result<_>>()?;
    }
    if cfg.ablation.patterns.is_empty() {
        return Err(CliError::new("usage", "no pattern selected").into());
    }
    if let Some(n) = a.seeds {
        cfg.ablation.seeds = n;
    }
    if let Some(s) = a.seed {
        cfg.ablation.first_seed = s;
    }
    let seeds: Vec<u64> = (0..cfg.ablation.seeds as u64).map(|k| cfg.ablation.first_seed + k).collect();

    let (data, series) = load_data(&a.data.data)?;
    let report = run_ablation(&data, &series, &cfg.ablation.patterns, &regimes, &cfg.ablation_config(ctx.exec), &seeds)?;
    let table = report.render_table();

    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write(ABLATION_JSON, report.to_json()? + "\n")?;
    report.write_csv(out.create(ABLATION_CSV)?)?;
    report.write_predictions_csv(out.create(PREDICTIONS_CSV)?)?;
    out.write(ABLATION_TXT, &table)?;
    print!("{table}");
    out.finish("ablate", ctx.args, &ctx.config, &[&a.data.data], seeds)
}

fn correlate(a: &CorrelateArgs, mut ctx: Ctx) -> anyhow::Result<RunManifest> {
    let regimes = ctx.config.regimes(&a.regime)?;
    ctx.config.regimes.names = regime_names(&regimes, &a.regime);
    let (data, series) = load_data(&a.data.data)?;
    let rows = sensitivity_report(&data, &series, &regimes)?;
    let table = render_sensitivity_table(&rows);

    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write(SENSITIVITY_JSON, serde_json::to_string_pretty(&rows)? + "\n")?;
    out.write(SENSITIVITY_TXT, &table)?;
    write_plot_csv(&data, &series, &regimes, out.create(PLOT_CSV)?)?;
    print!("{table}");
    out.finish("correlate", ctx.args, &ctx.config, &[&a.data.data], vec![])
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("format", format!("{}: {e}", path.display())).into())
}

/// Rebuilds the text tables of a finished run from its JSON outputs.
fn render_outputs(manifest: &RunManifest, dir: &Path) -> anyhow::Result<String> {
    let mut text = format!("{} run ({} {})\n", manifest.command, manifest.tool, manifest.version);
    for o in &manifest.outputs {
        let path = dir.join(&o.path);
        let section = match o.path.as_str() {
            CONDITIONS_JSON => render_condition_table(&read_json::<Vec<MarketConditionReport>>(&path)?),
            SENSITIVITY_JSON => render_sensitivity_table(&read_json::<Vec<SensitivityRow>>(&path)?),
            ABLATION_JSON => read_json::<AblationReport>(&path)?.render_table(),
            METRICS_JSON => render_metrics(&read_json::<TrainMetrics>(&path)?),
            _ => continue,
        };
        text.push('\n');
        text.push_str(&section);
    }
    Ok(text)
}

fn check_digests(manifest: &RunManifest, dir: &Path) -> anyhow::Result<()> {
    for input in &manifest.inputs {
        let got = sha256_file(Path::new(&input.path))?;
        if got != input.sha256 {
            return Err(CliError::new("digest-mismatch", format!("input {} has changed since the run", input.path)).into());
        }
    }
    for o in &manifest.outputs {
        if sha256_file(&dir.join(&o.path))? != o.sha256 {
            return Err(CliError::new("digest-mismatch", format!("output {} differs from the manifest", o.path)).into());
        }
    }
    Ok(())
}

fn report(a: &ReportArgs, args: Vec<String>) -> anyhow::Result<RunManifest> {
    let manifest = load_manifest(&a.manifest)?;
    let run_dir = a.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    check_digests(&manifest, &run_dir)?;
    let mut text = render_outputs(&manifest, &run_dir)?;
    text.push_str(&format!("\n{} outputs match their recorded digests\n", manifest.outputs.len()));

    let out_dir = a.out_dir.clone().unwrap_or_else(|| run_dir.join("report"));
    if a.replay {
        if manifest.command == "report" {
            return Err(CliError::new("usage", "a report run cannot be replayed").into());
        }
        let mut argv = vec![manifest.tool.clone()];
        argv.extend(manifest.args.iter().cloned());
        let cli = <Cli as clap::Parser>::try_parse_from(&argv)
            .map_err(|e| CliError::new("format", format!("recorded arguments no longer parse: {e}")))?;
        let replay_dir = out_dir.join("replay");
        let again = execute(cli.command, manifest.args.clone(), Some(manifest.config.clone()), Some(replay_dir))?;
        for (old, new) in manifest.outputs.iter().zip(&again.outputs) {
            if old != new {
                return Err(CliError::new("replay-mismatch", format!("replayed {} differs from the original", old.path)).into());
            }
        }
        if again.outputs.len() != manifest.outputs.len() {
            return Err(CliError::new("replay-mismatch", "replay produced a different set of outputs").into());
        }
        text.push_str("replay reproduced every output byte for byte\n");
    }

    let mut out = Outputs::new(&out_dir)?;
    out.write(REPORT_TXT, &text)?;
    print!("{text}");
    let seeds = manifest.seeds.clone();
    let manifest_path = a.manifest.clone();
    out.finish("report", args, &manifest.config, &[&manifest_path], seeds)
}

