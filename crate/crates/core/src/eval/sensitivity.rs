use serde::{Deserialize, Serialize};

use super::metrics::pearson;
use crate::error::{Error, Result};
use crate::market_data::MarketDataset;
use crate::regime::Regime;
use crate::rsi::RsiSeries;

/// Pairwise Pearson correlations of price, load and RSI over one regime's hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub regime: String,
    pub n_hours: usize,
    pub price_load: f64,
    pub price_rsi: f64,
    pub load_rsi: f64,
}

pub fn sensitivity_report(data: &MarketDataset, rsi: &RsiSeries, regimes: &[Regime]) -> Result<Vec<SensitivityRow>> {
    if rsi.len() != data.len() {
        return Err(Error::InvalidInput("RSI series is not aligned with the dataset".into()));
    }
    regimes
        .iter()
        .map(|regime| {
            let (mut price, mut load, mut idx) = (Vec::new(), Vec::new(), Vec::new());
            for (r, p) in data.records().iter().zip(rsi.points()) {
                if regime.contains(r.hour) {
                    price.push(r.wavg_price);
                    load.push(r.load);
                    idx.push(p.rsi);
                }
            }
            if price.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "regime `{}` covers {} hours; correlation needs at least 2",
                    regime.name,
                    price.len()
                )));
            }
            Ok(SensitivityRow {
                regime: regime.name.clone(),
                n_hours: price.len(),
                price_load: pearson(&price, &load)?,
                price_rsi: pearson(&price, &idx)?,
                load_rsi: pearson(&load, &idx)?,
            })
        })
        .collect()
}

pub fn render_sensitivity_table(rows: &[SensitivityRow]) -> String {
    let mut s = format!("{:<12}{:>8}{:>14}{:>14}{:>14}\n", "Regime", "hours", "r(P, D)", "r(P, RSI)", "r(D, RSI)");
    for r in rows {
        s.push_str(&format!(
            "{:<12}{:>8}{:>14.4}{:>14.4}{:>14.4}\n",
            r.regime, r.n_hours, r.price_load, r.price_rsi, r.load_rsi
        ));
    }
    s
}

/// `regime,date,hour,load,price,rsi` rows for scatter plots.
pub fn write_plot_csv<W: std::io::Write>(
    data: &MarketDataset,
    rsi: &RsiSeries,
    regimes: &[Regime],
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["regime", "date", "hour", "load", "price", "rsi"])?;
    for regime in regimes {
        for (r, p) in data.records().iter().zip(rsi.points()) {
            if regime.contains(r.hour) {
                wtr.write_record([
                    regime.name.clone(),
                    r.date.format("%Y-%m-%d").to_string(),
                    r.hour.to_string(),
                    r.load.to_string(),
                    r.wavg_price.to_string(),
                    p.rsi.to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
