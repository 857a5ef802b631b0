//! Versioned JSON model file. Every floating-point value is stored as
//! decimal text with 17 significant digits so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpModel, Network};
use crate::error::{Error, Result};
use crate::features::{fingerprint_names, MinMax, ScalingParams};

pub const MODEL_FORMAT: &str = "rsi-forecast-mlp";
pub const MODEL_VERSION: u32 = 1;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::ModelFormat(format!("bad number `{s}`: {e}")))
}

#[derive(Serialize, Deserialize)]
struct RangeText {
    min: String,
    max: String,
}

impl RangeText {
    fn from(mm: &MinMax) -> Self {
        Self { min: num(mm.min), max: num(mm.max) }
    }

    fn to_minmax(&self) -> Result<MinMax> {
        Ok(MinMax { min: parse(&self.min)?, max: parse(&self.max)? })
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureRange {
    name: String,
    min: String,
    max: String,
}

#[derive(Serialize, Deserialize)]
struct ScalingText {
    fitted_on_training: bool,
    features: Vec<FeatureRange>,
    target: RangeText,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    n_inputs: usize,
    n_hidden: usize,
    activation_hidden: String,
    activation_output: String,
    /// Row per hidden unit.
    hidden_weights: Vec<Vec<String>>,
    hidden_biases: Vec<String>,
    output_weights: Vec<String>,
    output_bias: String,
    feature_names: Vec<String>,
    feature_fingerprint: String,
    seed: u64,
    scaling: ScalingText,
}

impl ModelFile {
    fn from_model(m: &MlpModel) -> Self {
        let net = &m.network;
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            n_inputs: net.n_inputs(),
            n_hidden: net.n_hidden(),
            activation_hidden: "logistic".into(),
            activation_output: "linear".into(),
            hidden_weights: net.hidden_weights().chunks(net.n_inputs()).map(|r| r.iter().map(|w| num(*w)).collect()).collect(),
            hidden_biases: net.hidden_biases().iter().map(|w| num(*w)).collect(),
            output_weights: net.output_weights().iter().map(|w| num(*w)).collect(),
            output_bias: num(net.output_bias()),
            feature_names: m.feature_names.clone(),
            feature_fingerprint: m.fingerprint.clone(),
            seed: m.seed,
            scaling: ScalingText {
                fitted_on_training: m.scaling.fitted_on_training,
                features: m
                    .scaling
                    .feature_names
                    .iter()
                    .zip(&m.scaling.features)
                    .map(|(name, mm)| FeatureRange { name: name.clone(), min: num(mm.min), max: num(mm.max) })
                    .collect(),
                target: RangeText::from(&m.scaling.target),
            },
        }
    }

    fn into_model(self) -> Result<MlpModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format `{}`", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", self.version)));
        }
        if self.hidden_weights.len() != self.n_hidden || self.hidden_weights.iter().any(|r| r.len() != self.n_inputs) {
            return Err(Error::ModelFormat("hidden weight matrix does not match layer sizes".into()));
        }
        let mut params = Vec::with_capacity(Network::n_params_for(self.n_inputs, self.n_hidden));
        for row in &self.hidden_weights {
            for w in row {
                params.push(parse(w)?);
            }
        }
        for w in self.hidden_biases.iter().chain(&self.output_weights) {
            params.push(parse(w)?);
        }
        params.push(parse(&self.output_bias)?);
        let network = Network::from_params(self.n_inputs, self.n_hidden, params)?;

        if fingerprint_names(&self.feature_names) != self.feature_fingerprint {
            return Err(Error::ModelFormat("feature fingerprint does not match feature names".into()));
        }
        if self.feature_names.len() != self.n_inputs {
            return Err(Error::ModelFormat("feature list length differs from n_inputs".into()));
        }
        let names: Vec<String> = self.scaling.features.iter().map(|f| f.name.clone()).collect();
        if names != self.feature_names {
            return Err(Error::ModelFormat("scaling features are not in model feature order".into()));
        }
        let scaling = ScalingParams {
            feature_names: names,
            features: self
                .scaling
                .features
                .iter()
                .map(|f| Ok(MinMax { min: parse(&f.min)?, max: parse(&f.max)? }))
                .collect::<Result<_>>()?,
            target: self.scaling.target.to_minmax()?,
            fitted_on_training: self.scaling.fitted_on_training,
        };
        Ok(MlpModel {
            network,
            scaling,
            feature_names: self.feature_names,
            fingerprint: self.feature_fingerprint,
            seed: self.seed,
        })
    }
}

pub fn model_to_string(model: &MlpModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

pub fn model_from_str(text: &str) -> Result<MlpModel> {
    serde_json::from_str::<ModelFile>(text)?.into_model()
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model_to_string(model)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    model_from_str(&fs::read_to_string(path)?)
}
