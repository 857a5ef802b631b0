//! Experiment configuration: one TOML file, every field optional.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use rsi_forecast::eval::{AblationConfig, PatternSel};
use rsi_forecast::features::FeatureSpec;
use rsi_forecast::market_data::SimConfig;
use rsi_forecast::mlp::TrainConfig;
use rsi_forecast::regime::DEFAULT_PEAK_HOURS;
use rsi_forecast::{Exec, Regime};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub sim: SimConfig,
    pub features: FeatureSpec,
    pub train: TrainConfig,
    pub ablation: AblationSection,
    pub regimes: RegimeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub train_fraction: f64,
    pub min_train_samples: usize,
    pub min_test_samples: usize,
    pub patterns: Vec<PatternSel>,
    /// Number of seeds; seeds run from `first_seed` upward.
    pub seeds: usize,
    pub first_seed: u64,
}

impl Default for AblationSection {
    fn default() -> Self {
        let base = AblationConfig::default();
        Self {
            train_fraction: base.train_fraction,
            min_train_samples: base.min_train_samples,
            min_test_samples: base.min_test_samples,
            patterns: PatternSel::every(),
            seeds: 10,
            first_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSection {
    /// Hours that make up `peak`; `offpeak` is the complement.
    pub peak_hours: Vec<u8>,
    /// Regimes used when no `--regime` flag is given.
    pub names: Vec<String>,
}

impl Default for RegimeSection {
    fn default() -> Self {
        Self { peak_hours: DEFAULT_PEAK_HOURS.to_vec(), names: vec!["peak".into(), "offpeak".into()] }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            CliError::new("invalid-config", format!("{}: {}", path.display(), e.message())).into()
        })
    }

    /// Resolves `peak`, `offpeak` or `custom:<hours>` against the configured peak hours.
    pub fn regime(&self, name: &str) -> anyhow::Result<Regime> {
        let peak: BTreeSet<u8> = self.regimes.peak_hours.iter().copied().collect();
        let invalid = |e: rsi_forecast::Error| CliError::new("invalid-config", format!("regimes.peak_hours: {e}"));
        match name {
            "peak" => Ok(Regime::new("peak", peak).map_err(invalid)?),
            "offpeak" => Ok(Regime::new("offpeak", (1..=24).filter(|h| !peak.contains(h))).map_err(invalid)?),
            other => other.parse().map_err(|e: rsi_forecast::Error| CliError::new("usage", e.to_string()).into()),
        }
    }

    pub fn regimes(&self, flags: &[String]) -> anyhow::Result<Vec<Regime>> {
        let names = if flags.is_empty() { &self.regimes.names } else { flags };
        if names.is_empty() {
            return Err(CliError::new("usage", "no regime selected").into());
        }
        let mut out: Vec<Regime> = Vec::new();
        for name in names {
            let r = self.regime(name)?;
            if !out.contains(&r) {
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn ablation_config(&self, exec: Exec) -> AblationConfig {
        AblationConfig {
            features: self.features.clone(),
            train: TrainConfig { exec, ..self.train.clone() },
            train_fraction: self.ablation.train_fraction,
            min_train_samples: self.ablation.min_train_samples,
            min_test_samples: self.ablation.min_test_samples,
            exec,
        }
    }
}
