use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{clear_pay_as_bid, saturday_first_index, Bid, HourlyRecord, MarketDataset};
use crate::error::{Error, Result};
use crate::rsi::rsi_per_generator;

/// Minimum horizon: 28 days of lags plus a week to evaluate on.
pub const MIN_SIM_DAYS: usize = 35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub capacity: f64,
    pub marginal_cost: f64,
    /// Long-run fraction of hours the unit is on forced outage.
    #[serde(default)]
    pub outage_prob: f64,
}

impl GeneratorSpec {
    pub fn new(capacity: f64, marginal_cost: f64, outage_prob: f64) -> Self {
        Self { capacity, marginal_cost, outage_prob }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub generators: Vec<GeneratorSpec>,
    pub days: usize,
    pub start_date: NaiveDate,
    pub base_load: f64,
    /// Load multiplier per settlement hour 1..=24.
    pub daily_shape: Vec<f64>,
    /// Load multiplier per weekday, Saturday first.
    pub weekly_shape: Vec<f64>,
    /// Relative standard deviation of the multiplicative load noise.
    pub load_noise_sd: f64,
    /// Bid multiplier applied by a pivotal generator.
    pub pivotal_markup: f64,
    pub price_cap: f64,
    /// Probability weight on keeping last hour's outage state. 0 draws
    /// outages independently every hour; values near 1 give long outages.
    /// The stationary outage rate is `outage_prob` either way.
    pub outage_persistence: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    /// A dominant mid-merit unit, four cheaper or dearer small units, and four
    /// rarely dispatched peakers whose outages move the dominant unit in and
    /// out of pivotality.
    fn default() -> Self {
        let mut generators = vec![
            GeneratorSpec::new(650.0, 30.0, 0.0),
            GeneratorSpec::new(150.0, 20.0, 0.0),
            GeneratorSpec::new(150.0, 25.0, 0.0),
            GeneratorSpec::new(150.0, 35.0, 0.0),
            GeneratorSpec::new(150.0, 40.0, 0.0),
        ];
        generators.extend((0..4).map(|_| GeneratorSpec::new(100.0, 90.0, 0.3)));
        Self {
            generators,
            days: 182,
            start_date: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date"),
            base_load: 800.0,
            daily_shape: vec![
                0.78, 0.74, 0.72, 0.71, 0.72, 0.76, 0.84, 0.92, 0.98, 1.02, 1.04, 1.05, 1.04, 1.02,
                1.01, 1.02, 1.07, 1.17, 1.26, 1.30, 1.28, 1.22, 1.10, 0.92,
            ],
            weekly_shape: vec![1.0, 1.02, 1.02, 1.02, 1.02, 0.95, 0.85],
            load_noise_sd: 0.02,
            pivotal_markup: 2.0,
            price_cap: 200.0,
            outage_persistence: 0.97,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.generators.is_empty() {
            return bad("at least one generator is required".into());
        }
        for (i, g) in self.generators.iter().enumerate() {
            if !(g.capacity.is_finite() && g.capacity > 0.0) {
                return bad(format!("generator {i}: capacity must be > 0"));
            }
            if !(g.marginal_cost.is_finite() && g.marginal_cost >= 0.0) {
                return bad(format!("generator {i}: marginal_cost must be >= 0"));
            }
            if !(0.0..=1.0).contains(&g.outage_prob) {
                return bad(format!("generator {i}: outage_prob must lie in [0, 1]"));
            }
        }
        if self.days < MIN_SIM_DAYS {
            return bad(format!("days = {} but at least {MIN_SIM_DAYS} are needed", self.days));
        }
        if !(self.base_load.is_finite() && self.base_load > 0.0) {
            return bad("base_load must be > 0".into());
        }
        if self.daily_shape.len() != 24 || self.daily_shape.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("daily_shape needs 24 positive multipliers".into());
        }
        if self.weekly_shape.len() != 7 || self.weekly_shape.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("weekly_shape needs 7 positive multipliers (Saturday first)".into());
        }
        if !(self.load_noise_sd.is_finite() && self.load_noise_sd >= 0.0) {
            return bad("load_noise_sd must be >= 0".into());
        }
        // Truncation at 3 sigma must keep the multiplier positive.
        if self.load_noise_sd >= 1.0 / 3.0 {
            return bad("load_noise_sd must be below 1/3 so loads stay positive".into());
        }
        if !(self.pivotal_markup.is_finite() && self.pivotal_markup >= 1.0) {
            return bad("pivotal_markup must be >= 1".into());
        }
        if !(self.price_cap.is_finite() && self.price_cap >= 0.0) {
            return bad("price_cap must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.outage_persistence) {
            return bad("outage_persistence must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Runs the seeded pay-as-bid simulator.
///
/// Each hour: draw the load, update every generator's outage state, let each
/// available unit offer its full capacity at marginal cost (pivotal units at
/// `marginal_cost * pivotal_markup`, capped), and clear. Unserved demand is
/// priced at `price_cap`.
pub fn synthesize(config: &SimConfig) -> Result<MarketDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.load_noise_sd)
        .map_err(|e| Error::InvalidConfig(format!("load_noise_sd: {e}")))?;
    let n_gen = config.generators.len();

    let mut out: Vec<bool> = config
        .generators
        .iter()
        .map(|g| rng.random::<f64>() < g.outage_prob)
        .collect();

    let mut records = Vec::with_capacity(config.days * 24);
    let mut caps = vec![0.0; n_gen];
    let mut bids: Vec<Bid> = Vec::with_capacity(n_gen);
    for day in 0..config.days {
        let date = config.start_date + Duration::days(day as i64);
        let weekly = config.weekly_shape[saturday_first_index(date)];
        for hour in 1..=24u8 {
            let eps = truncated_noise(&mut rng, &noise, config.load_noise_sd);
            let load = config.base_load * config.daily_shape[hour as usize - 1] * weekly * (1.0 + eps);

            for (g, state) in config.generators.iter().zip(out.iter_mut()) {
                let p_out = if *state {
                    config.outage_persistence + (1.0 - config.outage_persistence) * g.outage_prob
                } else {
                    (1.0 - config.outage_persistence) * g.outage_prob
                };
                *state = rng.random::<f64>() < p_out;
            }
            for (i, g) in config.generators.iter().enumerate() {
                caps[i] = if out[i] { 0.0 } else { g.capacity };
            }

            bids.clear();
            for (i, g) in config.generators.iter().enumerate() {
                if caps[i] <= 0.0 {
                    continue;
                }
                let pivotal = rsi_per_generator(&caps, load, i)? < 100.0;
                let price = if pivotal {
                    (g.marginal_cost * config.pivotal_markup).min(config.price_cap)
                } else {
                    g.marginal_cost
                };
                bids.push(Bid::new(price, caps[i]));
            }

            let offered: f64 = bids.iter().map(|b| b.quantity).sum();
            let wavg_price = if offered < load {
                let paid: f64 = bids.iter().map(|b| b.price * b.quantity).sum();
                (paid + (load - offered) * config.price_cap) / load
            } else {
                clear_pay_as_bid(&bids, load)?.wavg_price
            };
            records.push(HourlyRecord { date, hour, load, wavg_price, capacities: caps.clone() });
        }
    }
    MarketDataset::new(records)
}

fn truncated_noise(rng: &mut ChaCha8Rng, noise: &Normal<f64>, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    loop {
        let z = noise.sample(rng);
        if z.abs() <= 3.0 * sd {
            return z;
        }
    }
}
