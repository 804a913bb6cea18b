//! Interpretable multi-horizon quantile forecasting for day-ahead
//! electricity prices.
//!
//! The centrepiece is the quantile neural basis model (QNBM): an additive
//! architecture in which one small shared network maps each scalar feature
//! to a set of basis values, feature-specific shape functions combine those
//! bases through an (optionally low-rank factorized) projection, and a
//! per-(hour, quantile) head turns shape outputs into conditional quantile
//! forecasts. A dense quantile-regression network (QR-DNN) baseline, pinball
//! training with early stopping and weekly-recalibration backtesting, a
//! probabilistic evaluation suite (CRPS, PICP, Kupiec, Diebold-Mariano),
//! quantile-averaging ensembles, and exact shape-function extraction round
//! out the toolkit.

#![allow(clippy::needless_range_loop)]

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod forecast;
pub mod model;
pub mod train;
pub mod eval;
pub mod interpret;
pub mod numkit;

pub use dataset::{TimeSeriesFrame, WindowConfig, WindowedDataset};
pub use error::Error;
pub use forecast::QuantileForecast;
pub use model::{AnyModel, ModelKind, QnbmConfig, QnbmParams, QrdnnConfig, QrdnnParams, QuantileNet};
pub use train::{BacktestPlan, GridSpec, ModelSpec, TrainConfig};
pub use numkit::{Matrix, RngState};
