//! Electricity price forecasting with a market-power input.
//!
//! The crate computes the Residual Supply Index (RSI) from hourly market
//! records, turns the series into lagged calendar/load/price/RSI features,
//! trains a one-hidden-layer perceptron with Levenberg-Marquardt and measures
//! how much the RSI inputs change forecast error. A seeded pay-as-bid
//! simulator provides data with a controllable market-power channel.
//!
//! Loops over seeds, ablation cells, hidden-layer candidates and Jacobian
//! blocks run on rayon when the `parallel` feature (default) is enabled; see
//! [`exec::Exec`].

pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod market_data;
pub mod mlp;
pub mod regime;
pub mod rsi;

pub use error::{Error, Result};
pub use exec::Exec;
pub use regime::Regime;
