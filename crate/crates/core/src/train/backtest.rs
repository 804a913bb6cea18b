use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::fit::{fit, EpochStats, ModelSpec, TrainConfig, ValidationScheme};
use super::TrainError;
use crate::dataset::{build_forecast_inputs, build_windows, TimeSeriesFrame, WindowConfig};
use crate::forecast::QuantileForecast;
use crate::model::{AnyModel, QuantileNet};
use crate::numkit::Matrix;

fn default_cadence() -> usize {
    7
}

fn default_folds() -> usize {
    4
}

/// Rolling-origin backtest protocol: the model is retrained at the start of
/// every block on all data strictly before it, then forecasts the block.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BacktestPlan {
    pub test_start: NaiveDate,
    /// Inclusive.
    pub test_end: NaiveDate,
    #[serde(default = "default_cadence")]
    pub cadence_days: usize,
    /// Training lookback in days; `None` uses all available history.
    #[serde(default)]
    pub lookback_days: Option<usize>,
    /// Sequential validation folds averaged for the early-stopping signal.
    #[serde(default = "default_folds")]
    pub folds: usize,
}

pub struct BacktestBlock {
    pub start: NaiveDate,
    pub n_days: usize,
    pub model: AnyModel,
    pub history: Vec<EpochStats>,
    pub best_val_loss: f64,
}

pub struct BacktestOutput {
    pub forecast: QuantileForecast,
    pub blocks: Vec<BacktestBlock>,
}

/// Run the weekly-recalibration backtest.
///
/// For each block the conditioning is frozen at the block origin: price lags
/// anchor at the last pre-block days, so no price realized inside the block
/// (or later) reaches any input row, while day-ahead exogenous forecasts
/// stay day-specific. The series-age feature is normalized to each block's
/// training span and extrapolates past 1 on the forecast days.
pub fn backtest(
    spec: &ModelSpec,
    frame: &TimeSeriesFrame,
    window_cfg: &WindowConfig,
    train_cfg: &TrainConfig,
    plan: &BacktestPlan,
) -> Result<BacktestOutput, TrainError> {
    if plan.cadence_days == 0 {
        return Err(TrainError::InvalidConfig("cadence_days must be positive".into()));
    }
    if plan.folds == 0 {
        return Err(TrainError::InvalidConfig("folds must be positive".into()));
    }
    if plan.test_end < plan.test_start {
        return Err(TrainError::InvalidConfig(format!(
            "test_end {} precedes test_start {}",
            plan.test_end, plan.test_start
        )));
    }
    let start_day = frame.day_index(plan.test_start).ok_or_else(|| {
        TrainError::InvalidConfig(format!(
            "test_start {} is outside the frame ({} .. {} days)",
            plan.test_start,
            frame.day_date(0),
            frame.n_days()
        ))
    })?;
    let end_day = frame.day_index(plan.test_end).ok_or_else(|| {
        TrainError::InvalidConfig(format!("test_end {} is outside the frame", plan.test_end))
    })?;
    let max_lag = window_cfg.max_lag_days();
    let test_days = end_day - start_day + 1;

    let mut blocks = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(test_days);
    let mut block_start = start_day;
    while block_start <= end_day {
        let block_len = plan.cadence_days.min(end_day - block_start + 1);
        let train_from = match plan.lookback_days {
            Some(lb) => block_start.saturating_sub(lb),
            None => 0,
        };
        let train_days = block_start - train_from;
        if train_days < max_lag + 2 {
            return Err(TrainError::InvalidConfig(format!(
                "block starting {} has only {train_days} training day(s); need at least {}",
                frame.day_date(block_start),
                max_lag + 2
            )));
        }

        let slice_cfg = WindowConfig {
            age_origin_day: 0,
            age_reference_days: Some(train_days),
            ..window_cfg.clone()
        };

        // Training windows over the pre-block span only.
        let train_frame = frame.slice_days(train_from, block_start)?;
        let train_set = build_windows(&train_frame, &slice_cfg)?;
        let result = fit(
            spec,
            &train_set,
            train_cfg,
            ValidationScheme::SequentialFolds(plan.folds),
        )?;

        // Forecast inputs from the extended slice covering the block; the
        // origin is the first block day, so lags stay strictly pre-block.
        let ext_frame = frame.slice_days(train_from, block_start + block_len)?;
        let (inputs, layout, _) =
            build_forecast_inputs(&ext_frame, &slice_cfg, train_days, block_len)?;
        result.model.check_compatible(&layout)?;
        let block_forecast = result.model.predict(&inputs, Some(frame.day_date(block_start)))?;
        for d in 0..block_len {
            rows.push(block_forecast.data().row(d).to_vec());
        }

        blocks.push(BacktestBlock {
            start: frame.day_date(block_start),
            n_days: block_len,
            model: result.model,
            history: result.history,
            best_val_loss: result.best_val_loss,
        });
        block_start += block_len;
    }

    let first = blocks.first().expect("at least one block");
    let levels = first.model.levels().to_vec();
    let horizon = first.model.horizon();
    let data = Matrix::from_rows(&rows).map_err(TrainError::Num)?;
    let forecast = QuantileForecast::new(levels, horizon, data, Some(plan.test_start))?;
    Ok(BacktestOutput { forecast, blocks })
}
