//! Pinball objective, Adam optimizer, early-stopped mini-batch training,
//! grid search and the rolling weekly-recalibration backtest driver.

mod adam;
mod backtest;
mod early;
mod fit;
mod grid;
mod loss;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use backtest::{backtest, BacktestBlock, BacktestOutput, BacktestPlan};
pub use early::EarlyStopper;
pub use fit::{fit, write_history_csv, EpochStats, FitResult, ModelSpec, TrainConfig, ValidationScheme};
pub use grid::{grid_search, GridCell, GridOutcome, GridSpec};
pub use loss::{pinball_loss, pinball_value};

use crate::dataset::DataError;
use crate::forecast::ForecastError;
use crate::model::ModelError;
use crate::numkit::NumError;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset has too few rows to train on")]
    EmptyDataset,
    #[error("non-finite gradient in tensor '{tensor}'")]
    NonFiniteGradient { tensor: String },
    #[error("training diverged (loss became non-finite); last finite epoch: {last_finite_epoch:?}")]
    Diverged { last_finite_epoch: Option<usize> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Num(#[from] NumError),
}
