//! Supervised samples built from the hourly series.
//!
//! The canonical input layout is: day pattern (one code or four indicators),
//! load lags `D(t-i)` for i in {0,1} and `D(d-i)` for i in {1,2,3,7,14,21,28},
//! price lags `P(t-1)` and `P(d-i)` over the same daily set, then RSI lags
//! `RSI(t-1)`, `RSI(d-1)`, `RSI(d-7)`. Hour lags step back along the clock
//! (crossing midnight and regime boundaries); day lags step back 24 hours.
//! `D(t-0)` is the load of the target hour itself and stands for the load
//! forecast; it is the only value taken from the target hour.

use std::io::Write;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market_data::{saturday_first_index, MarketDataset};
use crate::regime::Regime;
use crate::rsi::RsiSeries;

/// Consumption pattern of a day: 0 Saturday, 1 Sunday to Wednesday,
/// 2 Thursday, 3 Friday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DayPattern(u8);

impl DayPattern {
    pub const COUNT: usize = 4;

    pub fn new(code: u8) -> Result<Self> {
        if (code as usize) < Self::COUNT {
            Ok(Self(code))
        } else {
            Err(Error::InvalidInput(format!("day pattern code {code} is outside 0..=3")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        ["Sat.", "Sun. to Wed.", "Thu.", "Fri."][self.0 as usize]
    }
}

pub fn day_pattern(date: NaiveDate) -> DayPattern {
    DayPattern(match saturday_first_index(date) {
        0 => 0,
        1..=4 => 1,
        5 => 2,
        _ => 3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayEncoding {
    #[default]
    PatternCode,
    PatternOnehot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub include_rsi: bool,
    pub day_encoding: DayEncoding,
    pub load_t_lags: Vec<usize>,
    pub load_d_lags: Vec<usize>,
    pub price_t_lags: Vec<usize>,
    pub price_d_lags: Vec<usize>,
    pub rsi_t_lags: Vec<usize>,
    pub rsi_d_lags: Vec<usize>,
    /// Relative sd of Gaussian noise added to `D(t-0)`; 0 uses the actual load.
    pub load_forecast_noise_sd: f64,
    pub forecast_noise_seed: u64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            include_rsi: true,
            day_encoding: DayEncoding::PatternCode,
            load_t_lags: vec![0, 1],
            load_d_lags: vec![1, 2, 3, 7, 14, 21, 28],
            price_t_lags: vec![1],
            price_d_lags: vec![1, 2, 3, 7, 14, 21, 28],
            rsi_t_lags: vec![1],
            rsi_d_lags: vec![1, 7],
            load_forecast_noise_sd: 0.0,
            forecast_noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Load,
    Price,
    Rsi,
}

#[derive(Debug, Clone, Copy)]
enum Column {
    PatternCode,
    PatternFlag(u8),
    Lag { source: Source, hours_back: usize },
}

impl FeatureSpec {
    pub fn without_rsi(&self) -> Self {
        Self { include_rsi: false, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        let zero_lag = |lags: &[usize], what: &str| {
            if lags.contains(&0) {
                Err(Error::InvalidConfig(format!("{what} lags must be >= 1 (only the load may use t-0)")))
            } else {
                Ok(())
            }
        };
        zero_lag(&self.price_t_lags, "price")?;
        zero_lag(&self.rsi_t_lags, "RSI")?;
        zero_lag(&self.load_d_lags, "daily load")?;
        zero_lag(&self.price_d_lags, "daily price")?;
        zero_lag(&self.rsi_d_lags, "daily RSI")?;
        if !(self.load_forecast_noise_sd.is_finite() && self.load_forecast_noise_sd >= 0.0) {
            return Err(Error::InvalidConfig("load_forecast_noise_sd must be >= 0".into()));
        }
        Ok(())
    }

    fn columns(&self) -> Vec<(String, Column)> {
        let mut cols = Vec::new();
        match self.day_encoding {
            DayEncoding::PatternCode => cols.push(("pattern".to_string(), Column::PatternCode)),
            DayEncoding::PatternOnehot => {
                cols.extend((0..DayPattern::COUNT as u8).map(|p| (format!("pattern_{p}"), Column::PatternFlag(p))))
            }
        }
        let mut lags = |prefix: &str, source: Source, t: &[usize], d: &[usize]| {
            for &i in t {
                cols.push((format!("{prefix}_t{i}"), Column::Lag { source, hours_back: i }));
            }
            for &i in d {
                cols.push((format!("{prefix}_d{i}"), Column::Lag { source, hours_back: 24 * i }));
            }
        };
        lags("D", Source::Load, &self.load_t_lags, &self.load_d_lags);
        lags("P", Source::Price, &self.price_t_lags, &self.price_d_lags);
        if self.include_rsi {
            lags("RSI", Source::Rsi, &self.rsi_t_lags, &self.rsi_d_lags);
        }
        cols
    }

    /// Feature names in canonical order.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns().into_iter().map(|(n, _)| n).collect()
    }

    pub fn n_features(&self) -> usize {
        self.columns().len()
    }

    /// Hours of history a sample needs.
    pub fn max_lookback(&self) -> usize {
        self.columns()
            .iter()
            .filter_map(|(_, c)| match c {
                Column::Lag { hours_back, .. } => Some(*hours_back),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_names(&self.feature_names())
    }
}

/// SHA-256 of the comma-joined feature names, hex encoded.
pub fn fingerprint_names(names: &[String]) -> String {
    hex::encode(Sha256::digest(names.join(",").as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub date: NaiveDate,
    pub hour: u8,
    pub features: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn pattern(&self) -> DayPattern {
        day_pattern(self.date)
    }
}

/// Samples sharing one feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_names(&self.feature_names)
    }

    /// Keeps only the days of one pattern (one network per pattern).
    pub fn retain_pattern(mut self, pattern: DayPattern) -> Self {
        self.samples.retain(|s| s.pattern() == pattern);
        self
    }

    /// Chronological split: the first `floor(len * fraction)` samples go left.
    pub fn split_at_fraction(&self, fraction: f64) -> (SampleSet, SampleSet) {
        let cut = ((self.len() as f64) * fraction).floor() as usize;
        self.split_at(cut.min(self.len()))
    }

    pub fn split_at(&self, cut: usize) -> (SampleSet, SampleSet) {
        let (a, b) = self.samples.split_at(cut);
        (
            SampleSet { feature_names: self.feature_names.clone(), samples: a.to_vec() },
            SampleSet { feature_names: self.feature_names.clone(), samples: b.to_vec() },
        )
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Feature matrix CSV: one column per feature in canonical order, then `target`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = self.feature_names.clone();
        header.push("target".into());
        wtr.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            row.push(s.target.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Builds one sample per (date, hour) in `regime` whose full lag history is
/// available, in chronological order.
pub fn build_dataset(
    data: &MarketDataset,
    rsi: &RsiSeries,
    spec: &FeatureSpec,
    regime: &Regime,
) -> Result<SampleSet> {
    spec.validate()?;
    let records = data.records();
    if rsi.len() != records.len()
        || rsi.points().iter().zip(records).any(|(p, r)| (p.date, p.hour) != (r.date, r.hour))
    {
        return Err(Error::InvalidInput("RSI series does not cover the same hours as the dataset".into()));
    }
    let lookback = spec.max_lookback();
    if records.len() <= lookback {
        return Err(Error::InsufficientData(format!(
            "{} days of data but the lag structure needs {} hours of history, i.e. at least {} days",
            data.n_days(),
            lookback,
            lookback / 24 + 1
        )));
    }

    let forecast_noise: Option<Vec<f64>> = if spec.load_forecast_noise_sd > 0.0 {
        let normal = Normal::new(0.0, spec.load_forecast_noise_sd)
            .map_err(|e| Error::InvalidConfig(format!("load_forecast_noise_sd: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.forecast_noise_seed);
        Some((0..records.len()).map(|_| normal.sample(&mut rng)).collect())
    } else {
        None
    };

    let columns = spec.columns();
    let rsi_points = rsi.points();
    let mut samples = Vec::new();
    for k in lookback..records.len() {
        let rec = &records[k];
        if !regime.contains(rec.hour) {
            continue;
        }
        let pattern = day_pattern(rec.date);
        let features = columns
            .iter()
            .map(|(_, col)| match *col {
                Column::PatternCode => pattern.code() as f64,
                Column::PatternFlag(p) => (pattern.code() == p) as u8 as f64,
                Column::Lag { source, hours_back } => {
                    let j = k - hours_back;
                    match source {
                        Source::Load => {
                            let load = records[j].load;
                            match (&forecast_noise, hours_back) {
                                (Some(noise), 0) => load * (1.0 + noise[k]),
                                _ => load,
                            }
                        }
                        Source::Price => records[j].wavg_price,
                        Source::Rsi => rsi_points[j].rsi,
                    }
                }
            })
            .collect();
        samples.push(Sample { date: rec.date, hour: rec.hour, features, target: rec.wavg_price });
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no hour of regime `{}` has {} hours of history",
            regime.name, lookback
        )));
    }
    Ok(SampleSet { feature_names: spec.feature_names(), samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        // Constant columns map to 0.
        if max > min {
            Self { min, max }
        } else {
            Self { min, max: min + 1.0 }
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }
}

/// Min-max parameters fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub feature_names: Vec<String>,
    pub features: Vec<MinMax>,
    pub target: MinMax,
    pub fitted_on_training: bool,
}

pub fn fit_scaling(train: &SampleSet) -> Result<ScalingParams> {
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "scaling needs at least 2 training samples, got {}",
            train.len()
        )));
    }
    let features = (0..train.n_features())
        .map(|j| MinMax::fit(train.samples.iter().map(|s| s.features[j])))
        .collect();
    Ok(ScalingParams {
        feature_names: train.feature_names.clone(),
        features,
        target: MinMax::fit(train.samples.iter().map(|s| s.target)),
        fitted_on_training: true,
    })
}

/// Maps features and target into the training range; values outside it are
/// not clamped.
pub fn apply_scaling(params: &ScalingParams, set: &SampleSet) -> Result<SampleSet> {
    if params.feature_names != set.feature_names {
        return Err(Error::OrderingMismatch);
    }
    let samples = set
        .samples
        .iter()
        .map(|s| Sample {
            date: s.date,
            hour: s.hour,
            features: s.features.iter().zip(&params.features).map(|(x, mm)| mm.scale(*x)).collect(),
            target: params.target.scale(s.target),
        })
        .collect();
    Ok(SampleSet { feature_names: set.feature_names.clone(), samples })
}

pub fn invert_target(params: &ScalingParams, y_scaled: f64) -> f64 {
    params.target.unscale(y_scaled)
}

/// Scales a raw feature vector for prediction.
pub fn scale_features(params: &ScalingParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.features.len() {
        return Err(Error::DimensionMismatch { expected: params.features.len(), got: x.len() });
    }
    Ok(x.iter().zip(&params.features).map(|(v, mm)| mm.scale(*v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::HourlyRecord;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn pattern_examples() {
        assert_eq!(day_pattern(date(2013, 1, 4)).code(), 3);
        assert_eq!(day_pattern(date(2013, 1, 5)).code(), 0);
        assert_eq!(day_pattern(date(2013, 3, 21)).code(), 2);
        assert!(DayPattern::new(4).is_err());
    }

    #[test]
    fn sunday_through_wednesday_share_a_code() {
        // 2013-01-06 is a Sunday.
        let codes: Vec<u8> = (0..7).map(|i| day_pattern(date(2013, 1, 6 + i)).code()).collect();
        assert_eq!(codes, vec![1, 1, 1, 1, 2, 3, 0]);
    }

    pub(crate) fn toy_dataset(days: usize) -> MarketDataset {
        let start = date(2013, 1, 1);
        let mut records = Vec::new();
        for d in 0..days {
            for h in 1..=24u8 {
                let k = (d * 24 + h as usize) as f64;
                records.push(HourlyRecord {
                    date: start + chrono::Duration::days(d as i64),
                    hour: h,
                    load: 500.0 + k,
                    wavg_price: 20.0 + (k * 0.1).sin(),
                    capacities: vec![400.0, 300.0, 300.0 + (k % 7.0)],
                });
            }
        }
        MarketDataset::new(records).unwrap()
    }

    fn all_hours() -> Regime {
        Regime::new("all", 1..=24).unwrap()
    }

    #[test]
    fn thirty_five_days_give_seven_days_of_samples() {
        let data = toy_dataset(35);
        let rsi = RsiSeries::from_dataset(&data).unwrap();
        let set = build_dataset(&data, &rsi, &FeatureSpec::default(), &all_hours()).unwrap();
        assert_eq!(set.len(), 7 * 24);
        assert_eq!(set.samples[0].date, date(2013, 1, 29));
        assert_eq!(set.samples[0].hour, 1);
        assert_eq!(set.n_features(), 1 + 2 + 7 + 1 + 7 + 1 + 2);
    }

    #[test]
    fn too_short_span_is_an_error() {
        let data = toy_dataset(28);
        let rsi = RsiSeries::from_dataset(&data).unwrap();
        let err = build_dataset(&data, &rsi, &FeatureSpec::default(), &all_hours()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        // 29 days: exactly one day qualifies.
        let data = toy_dataset(29);
        let rsi = RsiSeries::from_dataset(&data).unwrap();
        assert_eq!(build_dataset(&data, &rsi, &FeatureSpec::default(), &all_hours()).unwrap().len(), 24);
    }

    #[test]
    fn dropping_rsi_removes_three_columns() {
        let with = FeatureSpec::default();
        let without = with.without_rsi();
        assert_eq!(with.n_features() - without.n_features(), 3);
        let names = with.feature_names();
        assert_eq!(&names[names.len() - 3..], ["RSI_t1", "RSI_d1", "RSI_d7"]);
        assert!(!without.feature_names().iter().any(|n| n.starts_with("RSI")));
        assert_ne!(with.fingerprint(), without.fingerprint());
    }

    #[test]
    fn onehot_has_exactly_one_flag() {
        let data = toy_dataset(35);
        let rsi = RsiSeries::from_dataset(&data).unwrap();
        let spec = FeatureSpec { day_encoding: DayEncoding::PatternOnehot, ..FeatureSpec::default() };
        let set = build_dataset(&data, &rsi, &spec, &all_hours()).unwrap();
        assert_eq!(&set.feature_names[..4], ["pattern_0", "pattern_1", "pattern_2", "pattern_3"]);
        for s in &set.samples {
            assert_eq!(s.features[..4].iter().sum::<f64>(), 1.0);
            assert_eq!(s.features[s.pattern().code() as usize], 1.0);
        }
    }

    #[test]
    fn lag_values_point_at_the_right_hours() {
        let data = toy_dataset(35);
        let rsi = RsiSeries::from_dataset(&data).unwrap();
        let set = build_dataset(&data, &rsi, &FeatureSpec::default(), &all_hours()).unwrap();
        let s = &set.samples[0]; // day 29 hour 1, record index 672
        let idx = |n: &str| set.feature_names.iter().position(|x| x == n).unwrap();
        let recs = data.records();
        assert_eq!(s.features[idx("D_t0")], recs[672].load);
        assert_eq!(s.features[idx("D_t1")], recs[671].load);
        assert_eq!(s.features[idx("D_d28")], recs[0].load);
        assert_eq!(s.features[idx("P_d7")], recs[672 - 168].wavg_price);
        assert_eq!(s.features[idx("RSI_t1")], rsi.points()[671].rsi);
        assert_eq!(s.target, recs[672].wavg_price);
    }

    #[test]
    fn forecast_noise_touches_only_the_current_load() {
        let data = toy_dataset(35);
        let rsi = RsiSeries::from_dataset(&data).unwrap();
        let clean = build_dataset(&data, &rsi, &FeatureSpec::default(), &all_hours()).unwrap();
        let spec = FeatureSpec { load_forecast_noise_sd: 0.05, forecast_noise_seed: 3, ..FeatureSpec::default() };
        let noisy = build_dataset(&data, &rsi, &spec, &all_hours()).unwrap();
        for (a, b) in clean.samples.iter().zip(&noisy.samples) {
            assert_ne!(a.features[1], b.features[1]);
            assert_eq!(a.features[2..], b.features[2..]);
        }
    }

    #[test]
    fn rejects_misaligned_rsi() {
        let data = toy_dataset(35);
        let short = toy_dataset(34);
        let rsi = RsiSeries::from_dataset(&short).unwrap();
        assert!(build_dataset(&data, &rsi, &FeatureSpec::default(), &all_hours()).is_err());
    }

    fn column_set(values: &[f64]) -> SampleSet {
        SampleSet {
            feature_names: vec!["x".into()],
            samples: values
                .iter()
                .map(|v| Sample { date: NaiveDate::MIN, hour: 1, features: vec![*v], target: *v })
                .collect(),
        }
    }

    #[test]
    fn minmax_examples() {
        let params = fit_scaling(&column_set(&[10.0, 20.0, 30.0])).unwrap();
        assert_eq!(params.features[0], MinMax { min: 10.0, max: 30.0 });
        let scaled = apply_scaling(&params, &column_set(&[10.0, 20.0, 30.0, 40.0])).unwrap();
        let xs: Vec<f64> = scaled.samples.iter().map(|s| s.features[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0, 1.5]);
        assert_eq!(invert_target(&params, 0.5), 20.0);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let params = fit_scaling(&column_set(&[7.0, 7.0, 7.0])).unwrap();
        let scaled = apply_scaling(&params, &column_set(&[7.0, 7.0, 7.0])).unwrap();
        assert!(scaled.samples.iter().all(|s| s.features[0] == 0.0));
    }

    #[test]
    fn scaling_errors() {
        assert!(fit_scaling(&column_set(&[1.0])).is_err());
        let params = fit_scaling(&column_set(&[1.0, 2.0])).unwrap();
        let mut other = column_set(&[1.0]);
        other.feature_names = vec!["y".into()];
        assert!(matches!(apply_scaling(&params, &other), Err(Error::OrderingMismatch)));
    }
}
