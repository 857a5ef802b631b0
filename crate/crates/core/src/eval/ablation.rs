//! With-RSI versus without-RSI comparison.
//!
//! Every (pattern, regime) cell builds two sample sets from the same hours,
//! differing only in the RSI columns, splits them chronologically, searches
//! the hidden size on the training part and scores test RMSE in scaled
//! target units. This is repeated per seed.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics::{improvement_pct, mean, rmse, sign_test, SignTest};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{apply_scaling, build_dataset, invert_target, DayPattern, FeatureSpec, SampleSet};
use crate::market_data::MarketDataset;
use crate::mlp::{fit_model, MlpModel, TrainConfig};
use crate::regime::Regime;
use crate::rsi::RsiSeries;

/// Which days a cell trains on: every day, or one day pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternSel {
    All,
    Only(DayPattern),
}

impl PatternSel {
    pub fn every() -> Vec<PatternSel> {
        let mut v = vec![PatternSel::All];
        v.extend((0..4).map(|c| PatternSel::Only(DayPattern::new(c).expect("code in range"))));
        v
    }

    pub fn label(&self) -> &'static str {
        match self {
            PatternSel::All => "All days",
            PatternSel::Only(p) => p.label(),
        }
    }

    pub fn select(&self, set: SampleSet) -> SampleSet {
        match self {
            PatternSel::All => set,
            PatternSel::Only(p) => set.retain_pattern(*p),
        }
    }
}

impl fmt::Display for PatternSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternSel::All => f.write_str("all"),
            PatternSel::Only(p) => write!(f, "{}", p.code()),
        }
    }
}

impl FromStr for PatternSel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(PatternSel::All),
            _ => {
                let code: u8 = s
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("pattern `{s}` is not all|0|1|2|3")))?;
                Ok(PatternSel::Only(DayPattern::new(code)?))
            }
        }
    }
}

impl Serialize for PatternSel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PatternSel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Base layout; `include_rsi` is overridden per arm.
    pub features: FeatureSpec,
    pub train: TrainConfig,
    /// Chronological share of each cell used for training.
    pub train_fraction: f64,
    pub min_train_samples: usize,
    pub min_test_samples: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            features: FeatureSpec::default(),
            train: TrainConfig::default(),
            train_fraction: 0.8,
            min_train_samples: 30,
            min_test_samples: 5,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub rmse_with_rsi: f64,
    pub rmse_without_rsi: f64,
    pub rmse_with_rsi_price: f64,
    pub rmse_without_rsi_price: f64,
    pub hidden_with_rsi: usize,
    pub hidden_without_rsi: usize,
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub date: NaiveDate,
    pub hour: u8,
    pub actual: f64,
    pub with_rsi: f64,
    pub without_rsi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub pattern: PatternSel,
    pub regime: String,
    pub available: bool,
    pub note: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_seeds: usize,
    /// Mean over seeds, scaled target units.
    pub rmse_with_rsi: Option<f64>,
    pub rmse_without_rsi: Option<f64>,
    /// From the mean RMSEs.
    pub improvement_pct: Option<f64>,
    /// Mean of the per-seed improvements.
    pub mean_seed_improvement_pct: Option<f64>,
    pub rmse_with_rsi_price: Option<f64>,
    pub rmse_without_rsi_price: Option<f64>,
    pub sign_test: Option<SignTest>,
    pub per_seed: Vec<SeedResult>,
    /// Test-span predictions of the first seed, in price units.
    pub predictions: Vec<PredictionPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: String,
    /// Plain mean of row improvements over the four day patterns.
    pub mean_improvement_patterns: Option<f64>,
    /// Same, including the all-days row.
    pub mean_improvement_all_rows: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<RegimeSummary>,
}

impl AblationReport {
    pub fn row(&self, pattern: PatternSel, regime: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.pattern == pattern && r.regime == regime)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per cell.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "pattern",
            "regime",
            "available",
            "n_train",
            "n_test",
            "n_seeds",
            "rmse_with_rsi",
            "rmse_without_rsi",
            "improvement_pct",
            "mean_seed_improvement_pct",
            "rmse_with_rsi_price",
            "rmse_without_rsi_price",
            "sign_test_p",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.pattern.to_string(),
                r.regime.clone(),
                r.available.to_string(),
                r.n_train.to_string(),
                r.n_test.to_string(),
                r.n_seeds.to_string(),
                opt(r.rmse_with_rsi),
                opt(r.rmse_without_rsi),
                opt(r.improvement_pct),
                opt(r.mean_seed_improvement_pct),
                opt(r.rmse_with_rsi_price),
                opt(r.rmse_without_rsi_price),
                opt(r.sign_test.map(|t| t.p_value)),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `pattern,regime,date,hour,actual,with_rsi,without_rsi`
    pub fn write_predictions_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["pattern", "regime", "date", "hour", "actual", "with_rsi", "without_rsi"])?;
        for r in &self.rows {
            for p in &r.predictions {
                wtr.write_record([
                    r.pattern.to_string(),
                    r.regime.clone(),
                    p.date.format("%Y-%m-%d").to_string(),
                    p.hour.to_string(),
                    p.actual.to_string(),
                    p.with_rsi.to_string(),
                    p.without_rsi.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Text table: patterns down, regimes across, with and without RSI.
    pub fn render_table(&self) -> String {
        let mut regimes: Vec<&str> = Vec::new();
        let mut patterns: Vec<PatternSel> = Vec::new();
        for r in &self.rows {
            if !regimes.contains(&r.regime.as_str()) {
                regimes.push(&r.regime);
            }
            if !patterns.contains(&r.pattern) {
                patterns.push(r.pattern);
            }
        }
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
        let mut s = format!("RMSE of test-span forecasts (scaled units, mean of {} seeds)\n", self.seeds.len());
        s.push_str(&format!("{:<14}", "Pattern"));
        for reg in &regimes {
            s.push_str(&format!("{:>12}{:>12}{:>9}", format!("{reg} RSI"), "no RSI", "impr%"));
        }
        s.push('\n');
        for p in &patterns {
            s.push_str(&format!("{:<14}", p.label()));
            for reg in &regimes {
                match self.row(*p, reg) {
                    Some(r) => s.push_str(&format!(
                        "{:>12}{:>12}{:>9}",
                        cell(r.rmse_with_rsi),
                        cell(r.rmse_without_rsi),
                        r.improvement_pct.map(|x| format!("{x:.1}")).unwrap_or_else(|| "n/a".into())
                    )),
                    None => s.push_str(&format!("{:>33}", "")),
                }
            }
            s.push('\n');
        }
        for sm in &self.summary {
            s.push_str(&format!(
                "mean improvement ({}): patterns {}%, incl. all-days row {}%\n",
                sm.regime,
                sm.mean_improvement_patterns.map(|x| format!("{x:.1}")).unwrap_or_else(|| "n/a".into()),
                sm.mean_improvement_all_rows.map(|x| format!("{x:.1}")).unwrap_or_else(|| "n/a".into())
            ));
        }
        s
    }
}

struct Cell {
    pattern: PatternSel,
    regime: Regime,
    prepared: std::result::Result<PreparedCell, String>,
}

struct PreparedCell {
    train_with: SampleSet,
    test_with: SampleSet,
    train_without: SampleSet,
    test_without: SampleSet,
}

/// Checks that the two arms share keys, targets and every non-RSI column.
pub fn check_arms_aligned(with: &SampleSet, without: &SampleSet) -> Result<()> {
    if with.len() != without.len() {
        return Err(Error::InvalidInput("ablation arms have different sample counts".into()));
    }
    let shared: Vec<(usize, usize)> = without
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            with.feature_names
                .iter()
                .position(|n| n == name)
                .map(|i| (i, j))
                .ok_or_else(|| Error::InvalidInput(format!("column `{name}` missing from RSI arm")))
        })
        .collect::<Result<_>>()?;
    if with.feature_names.iter().filter(|n| !n.starts_with("RSI_")).count() != shared.len() {
        return Err(Error::InvalidInput("ablation arms differ in a non-RSI column".into()));
    }
    for (a, b) in with.samples.iter().zip(&without.samples) {
        if (a.date, a.hour) != (b.date, b.hour) || a.target.to_bits() != b.target.to_bits() {
            return Err(Error::InvalidInput("ablation arms differ in keys or targets".into()));
        }
        if shared.iter().any(|&(i, j)| a.features[i].to_bits() != b.features[j].to_bits()) {
            return Err(Error::InvalidInput("ablation arms differ in a shared feature value".into()));
        }
    }
    Ok(())
}

fn prepare(
    data: &MarketDataset,
    rsi: &RsiSeries,
    pattern: PatternSel,
    regime: &Regime,
    config: &AblationConfig,
) -> Result<std::result::Result<PreparedCell, String>> {
    let spec_with = FeatureSpec { include_rsi: true, ..config.features.clone() };
    let with = match build_dataset(data, rsi, &spec_with, regime) {
        Ok(s) => pattern.select(s),
        Err(Error::InsufficientData(m)) => return Ok(Err(m)),
        Err(e) => return Err(e),
    };
    let without = pattern.select(build_dataset(data, rsi, &spec_with.without_rsi(), regime)?);
    check_arms_aligned(&with, &without)?;

    let cut = ((with.len() as f64) * config.train_fraction).floor() as usize;
    let (train_with, test_with) = with.split_at(cut);
    let (train_without, test_without) = without.split_at(cut);
    if train_with.len() < config.min_train_samples.max(2) || test_with.len() < config.min_test_samples.max(1) {
        return Ok(Err(format!(
            "{} training / {} test samples (need {} / {})",
            train_with.len(),
            test_with.len(),
            config.min_train_samples.max(2),
            config.min_test_samples.max(1)
        )));
    }
    Ok(Ok(PreparedCell { train_with, test_with, train_without, test_without }))
}

/// Test-span predictions of a fitted model: (scaled predictions, scaled
/// targets, price predictions).
pub fn predict_test(model: &MlpModel, test: &SampleSet) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let scaled = apply_scaling(&model.scaling, test)?;
    let pred = scaled
        .samples
        .iter()
        .map(|s| model.network.forward(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let price = pred.iter().map(|p| invert_target(&model.scaling, *p)).collect();
    Ok((pred, scaled.targets(), price))
}

/// A fitted model with its test-span scores.
#[derive(Debug, Clone)]
pub struct ScoredModel {
    pub model: MlpModel,
    pub search: crate::mlp::HiddenSearch,
    /// Scaled target units.
    pub rmse: f64,
    pub rmse_price: f64,
    pub price_pred: Vec<f64>,
}

/// Fits scaling and a network on `train` (hidden-size search included) and
/// scores it on `test`.
pub fn fit_and_score(train: &SampleSet, test: &SampleSet, train_config: &TrainConfig, seed: u64) -> Result<ScoredModel> {
    let tc = TrainConfig { seed, ..train_config.clone() };
    let (model, search) = fit_model(train, &tc)?;
    let (pred, target, price_pred) = predict_test(&model, test)?;
    Ok(ScoredModel {
        rmse: rmse(&target, &pred)?,
        rmse_price: rmse(&test.targets(), &price_pred)?,
        model,
        search,
        price_pred,
    })
}

/// Samples of one (pattern, regime) cell, chronologically split.
pub fn cell_split(
    data: &MarketDataset,
    rsi: &RsiSeries,
    spec: &FeatureSpec,
    pattern: PatternSel,
    regime: &Regime,
    train_fraction: f64,
) -> Result<(SampleSet, SampleSet)> {
    let set = pattern.select(build_dataset(data, rsi, spec, regime)?);
    let cut = ((set.len() as f64) * train_fraction).floor() as usize;
    Ok(set.split_at(cut))
}

/// Runs the with/without-RSI comparison on every requested cell and seed.
pub fn run_ablation(
    data: &MarketDataset,
    rsi: &RsiSeries,
    patterns: &[PatternSel],
    regimes: &[Regime],
    config: &AblationConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::InvalidConfig("train_fraction must lie in (0, 1)".into()));
    }
    config.train.validate()?;

    let mut cells = Vec::new();
    for regime in regimes {
        for &pattern in patterns {
            let prepared = prepare(data, rsi, pattern, regime, config)?;
            cells.push(Cell { pattern, regime: regime.clone(), prepared });
        }
    }

    let jobs: Vec<(usize, u64, bool)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.prepared.is_ok())
        .flat_map(|(i, _)| seeds.iter().flat_map(move |&s| [(i, s, true), (i, s, false)]))
        .collect();
    let results = config.exec.map(jobs.clone(), |(i, seed, with)| {
        let p = cells[i].prepared.as_ref().expect("only prepared cells are scheduled");
        let tc = TrainConfig { exec: config.exec, ..config.train.clone() };
        if with {
            fit_and_score(&p.train_with, &p.test_with, &tc, seed)
        } else {
            fit_and_score(&p.train_without, &p.test_without, &tc, seed)
        }
    });
    let mut results = jobs.into_iter().zip(results);

    let mut rows = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut row = AblationRow {
            pattern: cell.pattern,
            regime: cell.regime.name.clone(),
            available: false,
            note: None,
            n_train: 0,
            n_test: 0,
            n_seeds: 0,
            rmse_with_rsi: None,
            rmse_without_rsi: None,
            improvement_pct: None,
            mean_seed_improvement_pct: None,
            rmse_with_rsi_price: None,
            rmse_without_rsi_price: None,
            sign_test: None,
            per_seed: Vec::new(),
            predictions: Vec::new(),
        };
        let prepared = match &cell.prepared {
            Ok(p) => p,
            Err(note) => {
                row.note = Some(note.clone());
                rows.push(row);
                continue;
            }
        };
        row.available = true;
        row.n_train = prepared.train_with.len();
        row.n_test = prepared.test_with.len();
        for &seed in seeds {
            let (_, with) = results.next().expect("job per seed and arm");
            let (_, without) = results.next().expect("job per seed and arm");
            let (with, without) = (with?, without?);
            if row.predictions.is_empty() {
                row.predictions = prepared
                    .test_with
                    .samples
                    .iter()
                    .zip(with.price_pred.iter().zip(&without.price_pred))
                    .map(|(s, (w, wo))| PredictionPoint {
                        date: s.date,
                        hour: s.hour,
                        actual: s.target,
                        with_rsi: *w,
                        without_rsi: *wo,
                    })
                    .collect();
            }
            row.per_seed.push(SeedResult {
                seed,
                rmse_with_rsi: with.rmse,
                rmse_without_rsi: without.rmse,
                rmse_with_rsi_price: with.rmse_price,
                rmse_without_rsi_price: without.rmse_price,
                hidden_with_rsi: with.search.best_hidden,
                hidden_without_rsi: without.search.best_hidden,
                improvement_pct: improvement_pct(without.rmse, with.rmse),
            });
        }
        let col = |f: fn(&SeedResult) -> f64| mean(&row.per_seed.iter().map(f).collect::<Vec<_>>());
        row.n_seeds = row.per_seed.len();
        row.rmse_with_rsi = col(|s| s.rmse_with_rsi);
        row.rmse_without_rsi = col(|s| s.rmse_without_rsi);
        row.rmse_with_rsi_price = col(|s| s.rmse_with_rsi_price);
        row.rmse_without_rsi_price = col(|s| s.rmse_without_rsi_price);
        row.improvement_pct = row.rmse_without_rsi.zip(row.rmse_with_rsi).and_then(|(wo, w)| improvement_pct(wo, w));
        let seed_impr: Vec<f64> = row.per_seed.iter().filter_map(|s| s.improvement_pct).collect();
        row.mean_seed_improvement_pct = mean(&seed_impr);
        row.sign_test = Some(sign_test(&seed_impr));
        rows.push(row);
    }

    let summary = regimes
        .iter()
        .map(|reg| {
            let impr = |all: bool| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.regime == reg.name && (all || r.pattern != PatternSel::All))
                    .filter_map(|r| r.improvement_pct)
                    .collect();
                mean(&v)
            };
            RegimeSummary {
                regime: reg.name.clone(),
                mean_improvement_patterns: impr(false),
                mean_improvement_all_rows: impr(true),
            }
        })
        .collect();

    Ok(AblationReport { seeds: seeds.to_vec(), rows, summary })
}
