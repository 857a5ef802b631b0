//! Residual Supply Index.
//!
//! For generator `i` in an hour with demand `D`,
//! `RSI_i = 100 * (total available capacity - capacity_i) / D`.
//! No contract-obligation adjustment is applied. The hourly market index is
//! the minimum over generators, i.e. the index of the largest unit. Below 100
//! that unit is pivotal; above 110 the hour counts as competitive.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::MarketDataset;
use crate::regime::Regime;

pub const PIVOTAL_THRESHOLD: f64 = 100.0;
pub const COMPETITIVE_THRESHOLD: f64 = 110.0;

pub fn rsi_per_generator(capacities: &[f64], demand: f64, i: usize) -> Result<f64> {
    if !(demand.is_finite() && demand > 0.0) {
        return Err(Error::InvalidInput(format!("demand must be > 0, got {demand}")));
    }
    let own = *capacities.get(i).ok_or_else(|| {
        Error::InvalidInput(format!("generator index {i} out of range (fleet of {})", capacities.len()))
    })?;
    let total: f64 = capacities.iter().sum();
    Ok(100.0 * (total - own) / demand)
}

pub fn market_rsi(capacities: &[f64], demand: f64) -> Result<f64> {
    let largest = capacities
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("empty fleet".into()))?;
    rsi_per_generator(capacities, demand, largest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsiPoint {
    pub date: NaiveDate,
    pub hour: u8,
    pub rsi: f64,
    pub pivotal: bool,
    pub competitive: bool,
}

impl RsiPoint {
    pub fn new(date: NaiveDate, hour: u8, rsi: f64) -> Self {
        Self {
            date,
            hour,
            rsi,
            pivotal: rsi < PIVOTAL_THRESHOLD,
            competitive: rsi > COMPETITIVE_THRESHOLD,
        }
    }
}

/// Market RSI for every hour of a dataset, aligned one-to-one with its records.
#[derive(Debug, Clone, PartialEq)]
pub struct RsiSeries {
    points: Vec<RsiPoint>,
}

impl RsiSeries {
    pub fn from_dataset(data: &MarketDataset) -> Result<Self> {
        let points = data
            .records()
            .iter()
            .map(|r| Ok(RsiPoint::new(r.date, r.hour, market_rsi(&r.capacities, r.load)?)))
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<RsiPoint>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[RsiPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rsi).collect()
    }

    /// `date,hour,rsi,pivotal,competitive`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "hour", "rsi", "pivotal", "competitive"])?;
        for p in &self.points {
            wtr.write_record([
                p.date.format("%Y-%m-%d").to_string(),
                p.hour.to_string(),
                p.rsi.to_string(),
                p.pivotal.to_string(),
                p.competitive.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Share of hours on each side of the competitiveness thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConditionReport {
    pub regime: String,
    pub share_le_110: f64,
    pub share_gt_110: f64,
    pub share_lt_100: f64,
    pub hours_counted: usize,
}

pub fn condition_report(series: &RsiSeries, regime: &Regime) -> Result<MarketConditionReport> {
    let mut n = 0usize;
    let mut le = 0usize;
    let mut lt = 0usize;
    for p in series.points.iter().filter(|p| regime.contains(p.hour)) {
        n += 1;
        if p.rsi <= COMPETITIVE_THRESHOLD {
            le += 1;
        }
        if p.rsi < PIVOTAL_THRESHOLD {
            lt += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData(format!("no RSI values fall in regime `{}`", regime.name)));
    }
    let share_le_110 = le as f64 / n as f64;
    Ok(MarketConditionReport {
        regime: regime.name.clone(),
        share_le_110,
        share_gt_110: (n - le) as f64 / n as f64,
        share_lt_100: lt as f64 / n as f64,
        hours_counted: n,
    })
}

/// Renders reports as a two-column percentage table.
pub fn render_condition_table(reports: &[MarketConditionReport]) -> String {
    let mut s = format!("{:<14}{:>12}{:>12}{:>12}{:>10}\n", "Daily hours", "RSI <= 110", "RSI > 110", "RSI < 100", "hours");
    for r in reports {
        s.push_str(&format!(
            "{:<14}{:>11.1}%{:>11.1}%{:>11.1}%{:>10}\n",
            r.regime,
            100.0 * r.share_le_110,
            100.0 * r.share_gt_110,
            100.0 * r.share_lt_100,
            r.hours_counted
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-3
    }

    #[test]
    fn per_generator_examples() {
        assert_eq!(rsi_per_generator(&[500.0], 500.0, 0).unwrap(), 0.0);
        assert_eq!(rsi_per_generator(&[500.0, 500.0], 500.0, 0).unwrap(), 100.0);
        assert!(close(rsi_per_generator(&[400.0, 300.0, 300.0], 900.0, 0).unwrap(), 66.667));
    }

    #[test]
    fn per_generator_errors() {
        assert!(rsi_per_generator(&[500.0], 0.0, 0).is_err());
        assert!(rsi_per_generator(&[500.0], -3.0, 0).is_err());
        assert!(rsi_per_generator(&[500.0], 10.0, 1).is_err());
    }

    #[test]
    fn market_examples() {
        assert!(close(market_rsi(&[400.0, 300.0, 300.0], 900.0).unwrap(), 66.667));
        assert_eq!(market_rsi(&[500.0, 500.0], 500.0).unwrap(), 100.0);
        assert_eq!(market_rsi(&[100.0], 200.0).unwrap(), 0.0);
        assert!(market_rsi(&[], 200.0).is_err());
    }

    fn series(values: &[f64], hour: u8) -> RsiSeries {
        let date = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
        RsiSeries::from_points(values.iter().map(|v| RsiPoint::new(date, hour, *v)).collect())
    }

    #[test]
    fn shares_count_by_hand() {
        let rep = condition_report(&series(&[120.0, 120.0, 90.0, 115.0], 19), &Regime::peak()).unwrap();
        assert_eq!(rep.share_le_110, 0.25);
        assert_eq!(rep.share_gt_110, 0.75);
        assert_eq!(rep.share_lt_100, 0.25);
        assert_eq!(rep.hours_counted, 4);
    }

    #[test]
    fn boundary_110_counts_as_not_competitive() {
        let rep = condition_report(&series(&[110.0, 110.0], 19), &Regime::peak()).unwrap();
        assert_eq!(rep.share_le_110, 1.0);
        assert!(!RsiPoint::new(NaiveDate::MIN, 1, 110.0).competitive);
        assert!(!RsiPoint::new(NaiveDate::MIN, 1, 100.0).pivotal);
    }

    #[test]
    fn empty_regime_is_an_error() {
        assert!(condition_report(&series(&[120.0], 3), &Regime::peak()).is_err());
    }
}
