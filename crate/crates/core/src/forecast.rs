use chrono::NaiveDate;
use thiserror::Error;

use crate::numkit::Matrix;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ForecastError {
    #[error("quantile levels must be non-empty, strictly increasing and inside (0,1)")]
    BadLevels,
    #[error("data shape {rows}x{cols} does not match days x (horizon {horizon} * levels {levels})")]
    BadShape { rows: usize, cols: usize, horizon: usize, levels: usize },
    #[error("quantile level {0} is not on the forecast grid")]
    LevelNotOnGrid(f64),
}

/// The 99 percentile levels 0.01 ..= 0.99.
pub fn percentile_levels() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Predicted conditional quantiles, shape (days x horizon x levels), stored
/// row-major per day with the (hour, level) pair flattened as h * levels + q.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileForecast {
    levels: Vec<f64>,
    horizon: usize,
    start_date: Option<NaiveDate>,
    data: Matrix,
}

impl QuantileForecast {
    pub fn new(
        levels: Vec<f64>,
        horizon: usize,
        data: Matrix,
        start_date: Option<NaiveDate>,
    ) -> Result<Self, ForecastError> {
        if levels.is_empty()
            || levels.windows(2).any(|w| w[0] >= w[1])
            || levels.iter().any(|&g| g <= 0.0 || g >= 1.0)
        {
            return Err(ForecastError::BadLevels);
        }
        if data.cols() != horizon * levels.len() {
            return Err(ForecastError::BadShape {
                rows: data.rows(),
                cols: data.cols(),
                horizon,
                levels: levels.len(),
            });
        }
        Ok(Self { levels, horizon, start_date, data })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn days(&self) -> usize {
        self.data.rows()
    }

    pub fn start_date(&self) -> Option<NaiveDate> {
        self.start_date
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn date_of(&self, day: usize) -> Option<NaiveDate> {
        self.start_date.map(|d| d + chrono::Duration::days(day as i64))
    }

    #[inline]
    pub fn get(&self, day: usize, hour: usize, level_idx: usize) -> f64 {
        self.data.get(day, hour * self.levels.len() + level_idx)
    }

    #[inline]
    pub fn set(&mut self, day: usize, hour: usize, level_idx: usize, value: f64) {
        self.data.set(day, hour * self.levels.len() + level_idx, value);
    }

    /// Index of a quantile level on the grid, matched to 1e-9.
    pub fn level_index(&self, gamma: f64) -> Result<usize, ForecastError> {
        self.levels
            .iter()
            .position(|&g| (g - gamma).abs() < 1e-9)
            .ok_or(ForecastError::LevelNotOnGrid(gamma))
    }

    /// Sort the per-(day, hour) quantile vector ascending, removing any
    /// quantile crossing while preserving the set of predicted values.
    pub fn sort_quantiles(&mut self) {
        let levels = self.levels.len();
        for d in 0..self.data.rows() {
            let row = self.data.row_mut(d);
            for h in 0..self.horizon {
                row[h * levels..(h + 1) * levels].sort_by(f64::total_cmp);
            }
        }
    }

    /// True when every (day, hour) cell is non-decreasing in the level.
    pub fn is_monotone(&self) -> bool {
        let levels = self.levels.len();
        for d in 0..self.data.rows() {
            let row = self.data.row(d);
            for h in 0..self.horizon {
                if row[h * levels..(h + 1) * levels].windows(2).any(|w| w[0] > w[1]) {
                    return false;
                }
            }
        }
        true
    }
}
