//! Hourly market records: ingestion, validation, pay-as-bid clearing and the
//! seeded market simulator.

mod clearing;
mod csv_io;
mod sim;

pub use clearing::{clear_pay_as_bid, Bid, Clearing};
pub use csv_io::{load_csv, read_csv, write_csv};
pub use sim::{synthesize, GeneratorSpec, SimConfig};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One settlement hour of market data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub date: NaiveDate,
    /// Settlement period, 1..=24.
    pub hour: u8,
    /// Demand in MWh.
    pub load: f64,
    /// Quantity-weighted average accepted bid price.
    pub wavg_price: f64,
    /// Available capacity per generator, in a fixed generator order.
    pub capacities: Vec<f64>,
}

impl HourlyRecord {
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(1..=24).contains(&self.hour) {
            return Err(("hour", format!("{} is outside 1..=24", self.hour)));
        }
        if !(self.load.is_finite() && self.load > 0.0) {
            return Err(("load", format!("{} must be finite and > 0", self.load)));
        }
        if !(self.wavg_price.is_finite() && self.wavg_price >= 0.0) {
            return Err(("wavg_price", format!("{} must be finite and >= 0", self.wavg_price)));
        }
        if let Some(c) = self.capacities.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(("capacities", format!("{c} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// A validated, chronologically ordered, gap-free hourly series.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    records: Vec<HourlyRecord>,
}

impl MarketDataset {
    /// Sorts `records` by (date, hour) and checks every record invariant,
    /// the shared capacity-vector length and contiguous hourly coverage.
    pub fn new(mut records: Vec<HourlyRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData("dataset has no records".into()));
        }
        for (i, r) in records.iter().enumerate() {
            r.check().map_err(|(field, message)| Error::MalformedRow {
                row: i + 1,
                field: field.into(),
                message,
            })?;
        }
        let g = records[0].capacities.len();
        if g == 0 {
            return Err(Error::InvalidInput("at least one generator is required".into()));
        }
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.capacities.len() != g) {
            return Err(Error::CapacityLength {
                row: i + 1,
                expected: g,
                found: r.capacities.len(),
            });
        }
        records.sort_by_key(|r| (r.date, r.hour));
        for pair in records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if (a.date, a.hour) == (b.date, b.hour) {
                return Err(Error::Duplicate { date: b.date, hour: b.hour });
            }
            let (date, hour) = next_slot(a.date, a.hour);
            if (date, hour) != (b.date, b.hour) {
                return Err(Error::Gap { date, hour });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_generators(&self) -> usize {
        self.records[0].capacities.len()
    }

    /// Number of calendar days touched by the series.
    pub fn n_days(&self) -> usize {
        let first = self.records[0].date;
        let last = self.records[self.records.len() - 1].date;
        (last - first).num_days() as usize + 1
    }
}

fn next_slot(date: NaiveDate, hour: u8) -> (NaiveDate, u8) {
    if hour >= 24 {
        (date + Duration::days(1), 1)
    } else {
        (date, hour + 1)
    }
}

/// Day index in a Saturday-first week: Saturday = 0, ..., Friday = 6.
pub fn saturday_first_index(date: NaiveDate) -> usize {
    match date.weekday() {
        Weekday::Sat => 0,
        Weekday::Sun => 1,
        Weekday::Mon => 2,
        Weekday::Tue => 3,
        Weekday::Wed => 4,
        Weekday::Thu => 5,
        Weekday::Fri => 6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(date: NaiveDate, hour: u8) -> HourlyRecord {
        HourlyRecord { date, hour, load: 100.0, wavg_price: 10.0, capacities: vec![200.0] }
    }

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn sorts_and_accepts_contiguous_records() {
        let ds = MarketDataset::new(vec![rec(d(2013, 1, 1), 2), rec(d(2013, 1, 1), 1)]).unwrap();
        assert_eq!(ds.records()[0].hour, 1);
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn crosses_midnight() {
        let ds = MarketDataset::new(vec![rec(d(2013, 1, 1), 24), rec(d(2013, 1, 2), 1)]).unwrap();
        assert_eq!(ds.n_days(), 2);
    }

    #[test]
    fn reports_gap_and_duplicate() {
        let err = MarketDataset::new(vec![rec(d(2013, 1, 1), 1), rec(d(2013, 1, 1), 3)]).unwrap_err();
        assert!(matches!(err, Error::Gap { hour: 2, .. }));
        let err = MarketDataset::new(vec![rec(d(2013, 1, 1), 1), rec(d(2013, 1, 1), 1)]).unwrap_err();
        assert!(matches!(err, Error::Duplicate { hour: 1, .. }));
    }

    #[test]
    fn rejects_inconsistent_fleet() {
        let mut b = rec(d(2013, 1, 1), 2);
        b.capacities.push(5.0);
        let err = MarketDataset::new(vec![rec(d(2013, 1, 1), 1), b]).unwrap_err();
        assert!(matches!(err, Error::CapacityLength { row: 2, expected: 1, found: 2 }));
    }

    #[test]
    fn saturday_first_week() {
        // 2013-01-05 was a Saturday.
        assert_eq!(saturday_first_index(d(2013, 1, 5)), 0);
        assert_eq!(saturday_first_index(d(2013, 1, 4)), 6);
    }
}
