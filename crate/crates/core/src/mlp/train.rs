use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::jacobian::{lm_step, normal_equations, sum_squared_error};
use super::{MlpModel, Network};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{apply_scaling, fit_scaling, Sample, SampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mu0: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub mu_max: f64,
    pub max_epochs: usize,
    pub goal_mse: f64,
    pub grad_tol: f64,
    pub hidden_candidates: Vec<usize>,
    pub seed: u64,
    /// Chronological tail of the training rows held out for early stopping.
    pub validation_fraction: f64,
    pub patience: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mu0: 1e-3,
            mu_inc: 10.0,
            mu_dec: 0.1,
            mu_max: 1e10,
            max_epochs: 300,
            goal_mse: 0.0,
            grad_tol: 1e-7,
            hidden_candidates: vec![5, 10, 15, 20],
            seed: 0,
            validation_fraction: 0.15,
            patience: 6,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.mu_inc > 1.0 && 1.0 > self.mu_dec && self.mu_dec > 0.0) {
            return bad("need mu_inc > 1 > mu_dec > 0");
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite() && self.mu_max >= self.mu0) {
            return bad("need 0 < mu0 <= mu_max");
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 0.5)");
        }
        if self.hidden_candidates.is_empty() || self.hidden_candidates.contains(&0) {
            return bad("hidden_candidates must be a non-empty list of positive sizes");
        }
        if !(self.goal_mse >= 0.0 && self.grad_tol >= 0.0) {
            return bad("goal_mse and grad_tol must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    MuExceeded,
    GradientTolerance,
    GoalReached,
    ValidationPatience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    /// Damping after this epoch's update.
    pub mu: f64,
}

/// One attempted LM step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub mu: f64,
    pub sse_before: f64,
    /// `None` when the damped system could not be factorized.
    pub sse_trial: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub stop_reason: StopReason,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
}

impl TrainTrace {
    /// `epoch,train_mse,val_mse,mu`
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["epoch", "train_mse", "val_mse", "mu"])?;
        for e in &self.epochs {
            wtr.write_record([
                e.epoch.to_string(),
                e.train_mse.to_string(),
                e.val_mse.map(|v| v.to_string()).unwrap_or_default(),
                e.mu.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub trace: TrainTrace,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

impl TrainOutcome {
    /// Model-selection score: validation MSE, or training MSE without a holdout.
    pub fn score(&self) -> f64 {
        self.val_mse.unwrap_or(self.train_mse)
    }
}

/// Trains a fresh network on scaled samples with Levenberg-Marquardt.
///
/// The last `floor(N * validation_fraction)` samples are held out. Each epoch
/// solves `(J^T J + mu I) delta = J^T r` and tries `w - delta`; a step that
/// lowers the training SSE is kept and shrinks `mu`, otherwise `mu` grows and
/// the epoch retries. The weights with the best validation MSE are returned.
pub fn train_lm(samples: &SampleSet, n_hidden: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let n_val = ((samples.len() as f64) * config.validation_fraction).floor() as usize;
    let (train, val) = samples.samples.split_at(samples.len() - n_val);
    if train.is_empty() {
        return Err(Error::InsufficientData("validation split leaves no training rows".into()));
    }
    let n_inputs = samples.n_features();
    let w = Network::n_params_for(n_inputs, n_hidden);
    if train.len() < w {
        log::warn!("{} training samples for {w} weights; the fit is underdetermined", train.len());
    }
    let exec = config.exec;
    let mse = |net: &Network, rows: &[Sample]| sum_squared_error(net, rows, exec) / rows.len() as f64;

    let mut net = Network::random(n_inputs, n_hidden, config.seed);
    let mut ne = normal_equations(&net, train, exec)?;
    let mut mu = config.mu0;
    let n_train = train.len() as f64;

    let val_mse0 = (!val.is_empty()).then(|| mse(&net, val));
    let mut best = (val_mse0.unwrap_or(f64::INFINITY), net.clone(), 0usize, ne.sse / n_train, val_mse0);
    let mut since_best = 0usize;
    let mut epochs = vec![EpochRecord { epoch: 0, train_mse: ne.sse / n_train, val_mse: val_mse0, mu }];
    let mut steps = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=config.max_epochs {
        if ne.gradient_inf_norm() < config.grad_tol {
            stop_reason = StopReason::GradientTolerance;
            break;
        }
        if ne.sse / n_train <= config.goal_mse {
            stop_reason = StopReason::GoalReached;
            break;
        }

        let mut factorized_once = false;
        let mut trial = net.clone();
        loop {
            if mu > config.mu_max {
                if !factorized_once {
                    return Err(Error::SolveBreakdown { mu_max: config.mu_max });
                }
                stop_reason = StopReason::MuExceeded;
                break 'epochs;
            }
            let Some(delta) = lm_step(&ne.jtj, &ne.jtr, mu) else {
                steps.push(StepRecord { epoch, mu, sse_before: ne.sse, sse_trial: None, accepted: false });
                mu *= config.mu_inc;
                continue;
            };
            factorized_once = true;
            apply_step(&net, &delta, &mut trial);
            let sse_trial = sum_squared_error(&trial, train, exec);
            let accepted = sse_trial.is_finite() && sse_trial < ne.sse;
            steps.push(StepRecord { epoch, mu, sse_before: ne.sse, sse_trial: Some(sse_trial), accepted });
            if accepted {
                mu = (mu * config.mu_dec).max(f64::MIN_POSITIVE);
                break;
            }
            mu *= config.mu_inc;
        }

        net = trial;
        ne = normal_equations(&net, train, exec)?;
        let val_mse = (!val.is_empty()).then(|| mse(&net, val));
        epochs.push(EpochRecord { epoch, train_mse: ne.sse / n_train, val_mse, mu });

        match val_mse {
            Some(v) if v < best.0 => {
                best = (v, net.clone(), epoch, ne.sse / n_train, val_mse);
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if since_best >= config.patience {
                    stop_reason = StopReason::ValidationPatience;
                    break;
                }
            }
            None => {}
        }
    }

    let (network, best_epoch, train_mse, val_mse) = if val.is_empty() {
        let last = epochs.last().expect("epoch 0 is always recorded");
        (net, last.epoch, last.train_mse, None)
    } else {
        (best.1, best.2, best.3, best.4)
    };
    Ok(TrainOutcome {
        network,
        trace: TrainTrace { epochs, steps, stop_reason, best_epoch },
        train_mse,
        val_mse,
    })
}

fn apply_step(net: &Network, delta: &DVector<f64>, out: &mut Network) {
    for ((o, w), d) in out.params_mut().iter_mut().zip(net.params()).zip(delta.iter()) {
        *o = w - d;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub n_hidden: usize,
    pub train_mse: Option<f64>,
    pub val_mse: Option<f64>,
    pub epochs: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HiddenSearch {
    pub best_hidden: usize,
    pub reports: Vec<CandidateReport>,
    pub best: TrainOutcome,
}

/// Trains one network per hidden-layer size and keeps the one with the lowest
/// validation MSE, preferring the smaller size on ties. All candidates share
/// `config.seed`.
pub fn select_hidden_size(samples: &SampleSet, config: &TrainConfig) -> Result<HiddenSearch> {
    config.validate()?;
    let mut sizes = config.hidden_candidates.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let results = config.exec.map(sizes.clone(), |h| train_lm(samples, h, config));

    let mut reports = Vec::with_capacity(sizes.len());
    let mut best: Option<(usize, TrainOutcome)> = None;
    let mut last_err = None;
    for (h, res) in sizes.into_iter().zip(results) {
        match res {
            Ok(outcome) => {
                reports.push(CandidateReport {
                    n_hidden: h,
                    train_mse: Some(outcome.train_mse),
                    val_mse: outcome.val_mse,
                    epochs: outcome.trace.epochs.last().map(|e| e.epoch),
                    error: None,
                });
                if best.as_ref().is_none_or(|(bh, b)| prefer(h, outcome.score(), *bh, b.score())) {
                    best = Some((h, outcome));
                }
            }
            Err(e) => {
                reports.push(CandidateReport {
                    n_hidden: h,
                    train_mse: None,
                    val_mse: None,
                    epochs: None,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((best_hidden, best)) => Ok(HiddenSearch { best_hidden, reports, best }),
        None => Err(last_err.expect("at least one candidate ran")),
    }
}

/// Lower score wins; equal scores go to the smaller network.
fn prefer(size: usize, score: f64, incumbent_size: usize, incumbent_score: f64) -> bool {
    score < incumbent_score || (score == incumbent_score && size < incumbent_size)
}

/// Fits min-max scaling on `train_raw`, searches the hidden size and binds
/// the winning network to its feature layout.
pub fn fit_model(train_raw: &SampleSet, config: &TrainConfig) -> Result<(MlpModel, HiddenSearch)> {
    let scaling = fit_scaling(train_raw)?;
    let scaled = apply_scaling(&scaling, train_raw)?;
    let search = select_hidden_size(&scaled, config)?;
    let model = MlpModel {
        network: search.best.network.clone(),
        scaling,
        feature_names: train_raw.feature_names.clone(),
        fingerprint: train_raw.fingerprint(),
        seed: config.seed,
    };
    Ok((model, search))
}
