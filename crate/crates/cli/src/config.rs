use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qnbm_core::dataset::{CsvSchema, SynthSpec, WindowConfig};
use qnbm_core::model::{ModelKind, QnbmConfig, QrdnnConfig};
use qnbm_core::ensemble::EnsembleSpec;
use qnbm_core::train::{BacktestPlan, GridSpec, TrainConfig};

/// One declarative run description; subcommands pick the sections they need
/// and reject configs with unknown keys outright.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory for every artifact of the run.
    pub out: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub qnbm: Option<QnbmConfig>,
    #[serde(default)]
    pub qrdnn: Option<QrdnnConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub backtest: Option<BacktestPlan>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
    #[serde(default)]
    pub explain: Option<ExplainSection>,
    /// Also write the wide per-day forecast layout next to the long one.
    #[serde(default)]
    pub wide_forecast: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub csv: PathBuf,
    #[serde(default)]
    pub required_exogenous: Option<Vec<String>>,
    #[serde(default)]
    pub max_fill_hours: Option<usize>,
}

impl DataSection {
    pub fn schema(&self) -> CsvSchema {
        let mut schema = CsvSchema::default();
        if let Some(req) = &self.required_exogenous {
            schema.required_exogenous = req.clone();
        }
        if let Some(limit) = self.max_fill_hours {
            schema.max_fill_hours = limit;
        }
        schema
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_days: usize,
    #[serde(default)]
    pub spec: SynthSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub actuals_csv: PathBuf,
    pub forecasts: Vec<NamedForecast>,
    #[serde(default = "default_interval_levels")]
    pub interval_levels: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_interval_levels() -> Vec<f64> {
    vec![50.0, 90.0, 98.0]
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedForecast {
    pub name: String,
    pub csv: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub checkpoints: Vec<PathBuf>,
    /// Feature names to extract; defaults to every exogenous column.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_hours")]
    pub hours: Vec<usize>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Input rows used to compute the RevIN reference output scale.
    #[serde(default)]
    pub scale_data_csv: Option<PathBuf>,
}

fn default_gammas() -> Vec<f64> {
    vec![0.05, 0.95]
}

fn default_hours() -> Vec<usize> {
    vec![0, 6, 12, 18]
}

fn default_points() -> usize {
    201
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.unwrap_or(ModelKind::Qnbm)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require_data(&self) -> Result<&DataSection, ConfigError> {
        self.data
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("this command needs a 'data' section".into()))
    }

    pub fn window(&self) -> WindowConfig {
        self.window.clone().unwrap_or_default()
    }

    pub fn train(&self) -> TrainConfig {
        self.train.clone().unwrap_or_default()
    }

    /// Canonical hash of the effective config, recorded in run manifests.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", qnbm_core::model::fnv1a64(canonical.as_bytes()))
    }
}
