//! Ingestion of hourly market CSVs, calendar features, sliding-window
//! dataset construction and a synthetic generator with known conditional
//! quantiles.

mod calendar;
mod frame;
mod synth;
mod window;

pub use calendar::{calendar_features, AGE, DOW_COS, DOW_SIN};
pub use frame::{load_csv, CsvSchema, DataError, TimeSeriesFrame, HOURS_PER_DAY};
pub use synth::{deterministic_frame, synth_generate, true_quantiles, SynthSpec};
pub use window::{
    build_forecast_inputs, build_windows, FeatureKind, FeatureLayout, WindowConfig,
    WindowedDataset,
};
