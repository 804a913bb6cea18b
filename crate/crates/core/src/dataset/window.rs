use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::calendar::{self, calendar_features};
use super::frame::{DataError, TimeSeriesFrame, HOURS_PER_DAY};
use crate::numkit::Matrix;

/// Provenance of one input column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    PriceLag { lag_days: usize, hour: usize },
    Exogenous { series: String, hour: usize },
    Calendar { name: String },
}

impl FeatureKind {
    pub fn name(&self) -> String {
        match self {
            FeatureKind::PriceLag { lag_days, hour } => format!("price_lag{lag_days}_h{hour:02}"),
            FeatureKind::Exogenous { series, hour } => format!("{series}_h{hour:02}"),
            FeatureKind::Calendar { name } => name.clone(),
        }
    }

    /// Inverse of [`FeatureKind::name`].
    pub fn parse(name: &str) -> Option<FeatureKind> {
        if let Some(rest) = name.strip_prefix("price_lag") {
            let (lag, hour) = rest.split_once("_h")?;
            return Some(FeatureKind::PriceLag {
                lag_days: lag.parse().ok()?,
                hour: hour.parse().ok()?,
            });
        }
        if name == calendar::DOW_SIN || name == calendar::DOW_COS || name == calendar::AGE {
            return Some(FeatureKind::Calendar { name: name.to_string() });
        }
        if let Some((series, hour)) = name.rsplit_once("_h") {
            if let Ok(hour) = hour.parse::<usize>() {
                if hour < HOURS_PER_DAY && !series.is_empty() {
                    return Some(FeatureKind::Exogenous { series: series.to_string(), hour });
                }
            }
        }
        None
    }

    /// Hour-of-day this column refers to; calendar features have none.
    pub fn hour(&self) -> Option<usize> {
        match self {
            FeatureKind::PriceLag { hour, .. } | FeatureKind::Exogenous { hour, .. } => Some(*hour),
            FeatureKind::Calendar { .. } => None,
        }
    }

    pub fn is_price_lag(&self) -> bool {
        matches!(self, FeatureKind::PriceLag { .. })
    }
}

/// Column layout of a windowed input matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureLayout {
    kinds: Vec<FeatureKind>,
}

impl FeatureLayout {
    pub fn new(kinds: Vec<FeatureKind>) -> Self {
        Self { kinds }
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.kinds.iter().map(FeatureKind::name).collect()
    }

    pub fn price_lag_columns(&self) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_price_lag())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.kinds.iter().position(|k| k.name() == name)
    }

    /// Stable 64-bit label of the layout, stored in checkpoints so a model is
    /// never silently applied to differently shaped inputs.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        for name in self.names() {
            for b in name.as_bytes() {
                hash ^= u64::from(*b);
                hash = hash.wrapping_mul(0x100000001b3);
            }
            hash ^= 0xff;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }
}

/// Sliding-window construction parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Day offsets whose 24 hourly prices enter the conditioning vector.
    pub price_lag_days: Vec<usize>,
    /// Steps predicted per day.
    pub horizon: usize,
    /// Exogenous series to include; `None` means every series in the frame.
    pub exogenous: Option<Vec<String>>,
    pub calendar_dow: bool,
    pub calendar_age: bool,
    /// Day index (relative to the frame) whose age is zero.
    pub age_origin_day: usize,
    /// Days spanning age 0..1; `None` means the whole frame.
    pub age_reference_days: Option<usize>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            price_lag_days: vec![1, 2, 7],
            horizon: HOURS_PER_DAY,
            exogenous: None,
            calendar_dow: true,
            calendar_age: true,
            age_origin_day: 0,
            age_reference_days: None,
        }
    }
}

impl WindowConfig {
    fn validate(&self) -> Result<(), DataError> {
        if self.price_lag_days.is_empty() {
            return Err(DataError::InvalidConfig("price_lag_days must be non-empty".into()));
        }
        if self.price_lag_days.contains(&0) {
            return Err(DataError::InvalidConfig("price lag offsets must be positive".into()));
        }
        if self.horizon == 0 || self.horizon > HOURS_PER_DAY {
            return Err(DataError::InvalidConfig(format!(
                "horizon must be in 1..=24, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn max_lag_days(&self) -> usize {
        self.price_lag_days.iter().copied().max().unwrap_or(0)
    }

    fn sorted_lags(&self) -> Vec<usize> {
        let mut lags = self.price_lag_days.clone();
        lags.sort_unstable();
        lags.dedup();
        lags
    }

    fn exogenous_list(&self, frame: &TimeSeriesFrame) -> Result<Vec<String>, DataError> {
        match &self.exogenous {
            None => Ok(frame.exogenous_names().iter().map(|s| s.to_string()).collect()),
            Some(names) => {
                for n in names {
                    if frame.exogenous(n).is_none() {
                        return Err(DataError::Schema(format!(
                            "exogenous series '{n}' not present in frame"
                        )));
                    }
                }
                Ok(names.clone())
            }
        }
    }

    pub fn layout(&self, frame: &TimeSeriesFrame) -> Result<FeatureLayout, DataError> {
        self.validate()?;
        let mut kinds = Vec::new();
        for lag in self.sorted_lags() {
            for hour in 0..HOURS_PER_DAY {
                kinds.push(FeatureKind::PriceLag { lag_days: lag, hour });
            }
        }
        for series in self.exogenous_list(frame)? {
            for hour in 0..HOURS_PER_DAY {
                kinds.push(FeatureKind::Exogenous { series: series.clone(), hour });
            }
        }
        if self.calendar_dow {
            kinds.push(FeatureKind::Calendar { name: calendar::DOW_SIN.to_string() });
            kinds.push(FeatureKind::Calendar { name: calendar::DOW_COS.to_string() });
        }
        if self.calendar_age {
            kinds.push(FeatureKind::Calendar { name: calendar::AGE.to_string() });
        }
        Ok(FeatureLayout::new(kinds))
    }
}

/// Input-output pairs: one row per delivery day.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub layout: FeatureLayout,
    pub horizon: usize,
    /// Frame day index of row 0's delivery day.
    pub first_day: usize,
    /// Calendar date of row 0's delivery day.
    pub start_date: Option<NaiveDate>,
}

impl WindowedDataset {
    pub fn feature_names(&self) -> Vec<String> {
        self.layout.names()
    }

    pub fn n_days(&self) -> usize {
        self.inputs.rows()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows [from, to) as a new dataset.
    pub fn slice_rows(&self, from: usize, to: usize) -> WindowedDataset {
        assert!(from <= to && to <= self.n_days());
        let take = |m: &Matrix| {
            Matrix::from_fn(to - from, m.cols(), |r, c| m.get(from + r, c))
        };
        WindowedDataset {
            inputs: take(&self.inputs),
            targets: take(&self.targets),
            layout: self.layout.clone(),
            horizon: self.horizon,
            first_day: self.first_day + from,
            start_date: self.start_date.map(|d| d + chrono::Duration::days(from as i64)),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> (Matrix, Matrix) {
        let inputs = Matrix::from_fn(rows.len(), self.inputs.cols(), |r, c| {
            self.inputs.get(rows[r], c)
        });
        let targets = Matrix::from_fn(rows.len(), self.targets.cols(), |r, c| {
            self.targets.get(rows[r], c)
        });
        (inputs, targets)
    }
}

fn assemble_row(
    frame: &TimeSeriesFrame,
    lags: &[usize],
    exo: &[String],
    lag_anchor_day: usize,
    delivery_day: usize,
    calendar_row: Option<&[f64]>,
    out: &mut Vec<f64>,
) {
    for &lag in lags {
        out.extend_from_slice(frame.price_day(lag_anchor_day - lag));
    }
    for series in exo {
        out.extend_from_slice(frame.exogenous_day(series, delivery_day).expect("validated"));
    }
    if let Some(cal) = calendar_row {
        out.extend_from_slice(cal);
    }
}

fn calendar_columns(cfg: &WindowConfig, full: &Matrix, row: usize, buf: &mut Vec<f64>) {
    buf.clear();
    if cfg.calendar_dow {
        buf.push(full.get(row, 0));
        buf.push(full.get(row, 1));
    }
    if cfg.calendar_age {
        buf.push(full.get(row, 2));
    }
}

/// Slice sliding-window input-output pairs from a frame: one row per day d
/// with enough lag history, pairing the flattened conditioning vector with
/// the 24-step (or `horizon`-step) price target of day d.
pub fn build_windows(frame: &TimeSeriesFrame, cfg: &WindowConfig) -> Result<WindowedDataset, DataError> {
    let layout = cfg.layout(frame)?;
    let max_lag = cfg.max_lag_days();
    if frame.n_days() < max_lag + 1 {
        return Err(DataError::InsufficientHistory {
            required_days: max_lag + 1,
            available_days: frame.n_days(),
        });
    }
    let lags = cfg.sorted_lags();
    let exo = cfg.exogenous_list(frame)?;
    let n_rows = frame.n_days() - max_lag;

    let dates: Vec<NaiveDate> = (0..frame.n_days()).map(|d| frame.day_date(d)).collect();
    let age_ref = cfg.age_reference_days.unwrap_or(frame.n_days());
    let cal = calendar_features(&dates, cfg.age_origin_day, age_ref);

    let mut inputs = Vec::with_capacity(n_rows * layout.len());
    let mut targets = Vec::with_capacity(n_rows * cfg.horizon);
    let mut cal_buf = Vec::new();
    for d in max_lag..frame.n_days() {
        calendar_columns(cfg, &cal, d, &mut cal_buf);
        assemble_row(frame, &lags, &exo, d, d, Some(&cal_buf), &mut inputs);
        targets.extend_from_slice(&frame.price_day(d)[..cfg.horizon]);
    }

    Ok(WindowedDataset {
        inputs: Matrix::from_vec(n_rows, layout.len(), inputs)
            .map_err(|e| DataError::InvalidConfig(e.to_string()))?,
        targets: Matrix::from_vec(n_rows, cfg.horizon, targets)
            .map_err(|e| DataError::InvalidConfig(e.to_string()))?,
        layout,
        horizon: cfg.horizon,
        first_day: max_lag,
        start_date: Some(frame.day_date(max_lag)),
    })
}

/// Conditioning vectors for a forecast block whose price history is frozen at
/// `origin_day`: every target day uses price lags anchored at the origin, so
/// no realized price at or after the origin can enter any input row.
/// Exogenous columns stay day-specific (they are day-ahead forecasts).
pub fn build_forecast_inputs(
    frame: &TimeSeriesFrame,
    cfg: &WindowConfig,
    origin_day: usize,
    block_days: usize,
) -> Result<(Matrix, FeatureLayout, Vec<NaiveDate>), DataError> {
    let layout = cfg.layout(frame)?;
    let max_lag = cfg.max_lag_days();
    if origin_day < max_lag {
        return Err(DataError::InsufficientHistory {
            required_days: max_lag,
            available_days: origin_day,
        });
    }
    if origin_day + block_days > frame.n_days() {
        return Err(DataError::InvalidConfig(format!(
            "forecast block [{origin_day}, {}) exceeds frame of {} days",
            origin_day + block_days,
            frame.n_days()
        )));
    }
    let lags = cfg.sorted_lags();
    let exo = cfg.exogenous_list(frame)?;

    let dates: Vec<NaiveDate> = (0..frame.n_days()).map(|d| frame.day_date(d)).collect();
    let age_ref = cfg.age_reference_days.unwrap_or(frame.n_days());
    let cal = calendar_features(&dates, cfg.age_origin_day, age_ref);

    let mut inputs = Vec::with_capacity(block_days * layout.len());
    let mut cal_buf = Vec::new();
    let mut out_dates = Vec::with_capacity(block_days);
    for d in origin_day..origin_day + block_days {
        calendar_columns(cfg, &cal, d, &mut cal_buf);
        assemble_row(frame, &lags, &exo, origin_day, d, Some(&cal_buf), &mut inputs);
        out_dates.push(frame.day_date(d));
    }
    let inputs = Matrix::from_vec(block_days, layout.len(), inputs)
        .map_err(|e| DataError::InvalidConfig(e.to_string()))?;
    Ok((inputs, layout, out_dates))
}
