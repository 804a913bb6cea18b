//! Forecasting architectures: the quantile neural basis model, the dense
//! QR-DNN baseline, and the shared plumbing (RevIN, feature scaling,
//! factorized projections, checkpoints) behind both.

mod checkpoint;
mod common;
mod factorized;
mod qnbm;
mod qrdnn;
mod revin;

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::dataset::{FeatureKind, FeatureLayout};
    use crate::numkit::{Matrix, RngState};

    /// Minimal one-feature, one-output model whose bias acts as a scalar
    /// parameter slot for optimizer tests.
    pub(crate) fn scalar_probe_model(beta0: f64) -> QnbmParams {
        let layout = FeatureLayout::new(vec![FeatureKind::Calendar { name: "probe".into() }]);
        let config = QnbmConfig {
            n_units: 1,
            n_basis: 1,
            rank_shape: None,
            rank_head: None,
            dropout: 0.0,
            revin: false,
            quantile_levels: vec![0.5],
            sort_quantiles: false,
            ..QnbmConfig::default()
        };
        let mut rng = RngState::seed_from(0);
        let mut params = QnbmParams::init_with_layout(config, layout, 1, &mut rng).unwrap();
        params.beta = Matrix::from_vec(1, 1, vec![beta0]).unwrap();
        params
    }
}

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{fnv1a64, load_checkpoint, save_checkpoint, CheckpointError};
pub use common::{FeatureScaler, FeatureStats, Mode};
pub use factorized::{FactorizedMatrix, Projection};
pub use qnbm::{QnbmCache, QnbmConfig, QnbmParams};
pub use qrdnn::{QrdnnCache, QrdnnConfig, QrdnnParams};
pub use revin::RevinLayer;

use crate::dataset::FeatureLayout;
use crate::forecast::{ForecastError, QuantileForecast};
use crate::numkit::{Matrix, NumError, RngState};

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("input has {got} feature columns, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error(
        "model was trained on {model_features} features (fingerprint {model_fingerprint:016x}), \
         dataset has {data_features} (fingerprint {data_fingerprint:016x})"
    )]
    LayoutMismatch {
        model_features: usize,
        model_fingerprint: u64,
        data_features: usize,
        data_fingerprint: u64,
    },
    #[error("non-finite input value in feature '{feature}' at row {row}")]
    NanInput { feature: String, row: usize },
    #[error("stale activation cache: {0}")]
    StaleCache(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Which architecture a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qnbm,
    Qrdnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Qnbm => write!(f, "qnbm"),
            ModelKind::Qrdnn => write!(f, "qrdnn"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qnbm" => Ok(ModelKind::Qnbm),
            "qrdnn" => Ok(ModelKind::Qrdnn),
            other => Err(format!("unknown model kind '{other}' (expected qnbm or qrdnn)")),
        }
    }
}

/// Common contract of the trainable quantile forecasters.
pub trait QuantileNet: Clone {
    type Cache;

    fn n_features(&self) -> usize;
    fn horizon(&self) -> usize;
    fn levels(&self) -> &[f64];
    fn sort_enabled(&self) -> bool;
    fn layout(&self) -> &FeatureLayout;

    /// Trainable tensors, in a fixed documented order matching
    /// [`QuantileNet::tensors`] and the gradients from
    /// [`QuantileNet::backward`].
    fn tensor_names(&self) -> Vec<&'static str>;
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    /// One pass over a batch of rows. Outputs are in price units, one column
    /// per (hour, level). Train mode draws dropout masks from `rng`.
    fn forward(
        &self,
        x: &Matrix,
        mode: Mode,
        rng: Option<&mut RngState>,
    ) -> Result<(Matrix, Self::Cache), ModelError>;

    /// Gradients of every tensor given the upstream gradient on outputs.
    fn backward(&self, cache: &Self::Cache, grad_out: &Matrix) -> Result<Vec<Matrix>, ModelError>;

    fn n_outputs(&self) -> usize {
        self.horizon() * self.levels().len()
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Deterministic inference over `x`, applying quantile sorting when the
    /// model has it enabled. Rows are processed in chunks to bound memory.
    fn predict(&self, x: &Matrix, start_date: Option<NaiveDate>) -> Result<QuantileForecast, ModelError> {
        const CHUNK: usize = 256;
        let mut data = Matrix::zeros(x.rows(), self.n_outputs());
        let mut row = 0;
        while row < x.rows() {
            let end = (row + CHUNK).min(x.rows());
            let chunk = Matrix::from_fn(end - row, x.cols(), |r, c| x.get(row + r, c));
            let (out, _) = self.forward(&chunk, Mode::Eval, None)?;
            for r in 0..out.rows() {
                data.row_mut(row + r).copy_from_slice(out.row(r));
            }
            row = end;
        }
        let mut forecast =
            QuantileForecast::new(self.levels().to_vec(), self.horizon(), data, start_date)?;
        if self.sort_enabled() {
            forecast.sort_quantiles();
        }
        Ok(forecast)
    }
}

/// Model-kind-erased wrapper used by checkpoints, the backtester and the CLI.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Qnbm(QnbmParams),
    Qrdnn(QrdnnParams),
}

pub enum AnyCache {
    Qnbm(QnbmCache),
    Qrdnn(QrdnnCache),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Qnbm(_) => ModelKind::Qnbm,
            AnyModel::Qrdnn(_) => ModelKind::Qrdnn,
        }
    }

    pub fn as_qnbm(&self) -> Option<&QnbmParams> {
        match self {
            AnyModel::Qnbm(p) => Some(p),
            AnyModel::Qrdnn(_) => None,
        }
    }

    pub fn check_compatible(&self, layout: &FeatureLayout) -> Result<(), ModelError> {
        let own = self.layout();
        if own.fingerprint() != layout.fingerprint() {
            return Err(ModelError::LayoutMismatch {
                model_features: own.len(),
                model_fingerprint: own.fingerprint(),
                data_features: layout.len(),
                data_fingerprint: layout.fingerprint(),
            });
        }
        Ok(())
    }
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            AnyModel::Qnbm($p) => $body,
            AnyModel::Qrdnn($p) => $body,
        }
    };
}

impl QuantileNet for AnyModel {
    type Cache = AnyCache;

    fn n_features(&self) -> usize {
        dispatch!(self, p => p.n_features())
    }

    fn horizon(&self) -> usize {
        dispatch!(self, p => p.horizon())
    }

    fn levels(&self) -> &[f64] {
        dispatch!(self, p => p.levels())
    }

    fn sort_enabled(&self) -> bool {
        dispatch!(self, p => p.sort_enabled())
    }

    fn layout(&self) -> &FeatureLayout {
        dispatch!(self, p => p.layout())
    }

    fn tensor_names(&self) -> Vec<&'static str> {
        dispatch!(self, p => p.tensor_names())
    }

    fn tensors(&self) -> Vec<&Matrix> {
        dispatch!(self, p => p.tensors())
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        dispatch!(self, p => p.tensors_mut())
    }

    fn forward(
        &self,
        x: &Matrix,
        mode: Mode,
        rng: Option<&mut RngState>,
    ) -> Result<(Matrix, AnyCache), ModelError> {
        match self {
            AnyModel::Qnbm(p) => p.forward(x, mode, rng).map(|(o, c)| (o, AnyCache::Qnbm(c))),
            AnyModel::Qrdnn(p) => p.forward(x, mode, rng).map(|(o, c)| (o, AnyCache::Qrdnn(c))),
        }
    }

    fn backward(&self, cache: &AnyCache, grad_out: &Matrix) -> Result<Vec<Matrix>, ModelError> {
        match (self, cache) {
            (AnyModel::Qnbm(p), AnyCache::Qnbm(c)) => p.backward(c, grad_out),
            (AnyModel::Qrdnn(p), AnyCache::Qrdnn(c)) => p.backward(c, grad_out),
            _ => Err(ModelError::StaleCache("cache belongs to a different model kind".into())),
        }
    }
}
