//! One-hidden-layer perceptron (logistic hidden units, linear output) trained
//! by Levenberg-Marquardt.
//!
//! Parameters are packed as `[W1 (row-major, n_hidden x n_inputs), b1, W2, b2]`.

mod io;
mod jacobian;
mod train;

pub use io::{load_model, model_from_str, model_to_string, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use jacobian::{jacobian, lm_step, normal_equations, sum_squared_error, NormalEquations};
pub use train::{
    fit_model, select_hidden_size, train_lm, CandidateReport, EpochRecord, HiddenSearch, StepRecord,
    StopReason, TrainConfig, TrainOutcome, TrainTrace,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{invert_target, scale_features, ScalingParams};

/// Logistic function, evaluated without overflow for large |z|.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n_inputs: usize,
    n_hidden: usize,
    params: Vec<f64>,
}

impl Network {
    pub fn n_params_for(n_inputs: usize, n_hidden: usize) -> usize {
        n_hidden * (n_inputs + 2) + 1
    }

    pub fn from_params(n_inputs: usize, n_hidden: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::n_params_for(n_inputs, n_hidden);
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: params.len() });
        }
        if n_inputs == 0 || n_hidden == 0 {
            return Err(Error::InvalidInput("network needs at least one input and one hidden unit".into()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(Self { n_inputs, n_hidden, params })
    }

    pub fn zeros(n_inputs: usize, n_hidden: usize) -> Self {
        Self { n_inputs, n_hidden, params: vec![0.0; Self::n_params_for(n_inputs, n_hidden)] }
    }

    /// Uniform weights in `[-0.5, 0.5] / sqrt(fan_in)`; the output layer's
    /// fan-in is `n_hidden`.
    pub fn random(n_inputs: usize, n_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(n_inputs, n_hidden);
        let hidden_bound = 0.5 / (n_inputs as f64).sqrt();
        let out_bound = 0.5 / (n_hidden as f64).sqrt();
        let n_hidden_params = n_hidden * (n_inputs + 1);
        for (k, p) in net.params.iter_mut().enumerate() {
            let bound = if k < n_hidden_params { hidden_bound } else { out_bound };
            *p = rng.random_range(-bound..=bound);
        }
        net
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn hidden_weights(&self) -> &[f64] {
        &self.params[..self.n_hidden * self.n_inputs]
    }

    pub fn hidden_biases(&self) -> &[f64] {
        let s = self.n_hidden * self.n_inputs;
        &self.params[s..s + self.n_hidden]
    }

    pub fn output_weights(&self) -> &[f64] {
        let s = self.n_hidden * (self.n_inputs + 1);
        &self.params[s..s + self.n_hidden]
    }

    pub fn output_bias(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    /// Writes the hidden activations into `hidden` and returns the output.
    #[inline]
    pub(crate) fn forward_into(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let w1 = self.hidden_weights();
        let b1 = self.hidden_biases();
        let w2 = self.output_weights();
        let mut y = self.output_bias();
        for j in 0..self.n_hidden {
            let row = &w1[j * self.n_inputs..(j + 1) * self.n_inputs];
            let z = row.iter().zip(x).fold(b1[j], |acc, (w, xi)| acc + w * xi);
            let a = sigmoid(z);
            hidden[j] = a;
            y += w2[j] * a;
        }
        y
    }

    /// Prediction in scaled target units.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_inputs {
            return Err(Error::DimensionMismatch { expected: self.n_inputs, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input vector".into()));
        }
        let mut hidden = vec![0.0; self.n_hidden];
        Ok(self.forward_into(x, &mut hidden))
    }
}

/// A trained network bound to the feature layout and scaling it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub network: Network,
    pub scaling: ScalingParams,
    pub feature_names: Vec<String>,
    pub fingerprint: String,
    pub seed: u64,
}

impl MlpModel {
    /// Predicts a price from raw (unscaled) features.
    pub fn predict(&self, raw_features: &[f64]) -> Result<f64> {
        let x = scale_features(&self.scaling, raw_features)?;
        Ok(invert_target(&self.scaling, self.network.forward(&x)?))
    }

    /// Prediction in scaled units from already-scaled features.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.network.forward(x)
    }
}
