use serde::{Deserialize, Serialize};

use super::fit::{fit, ModelSpec, TrainConfig, ValidationScheme};
use super::TrainError;
use crate::dataset::WindowedDataset;
use crate::model::{QnbmConfig, QrdnnConfig};

/// Discrete hyperparameter candidates, searched exhaustively.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_units: Vec<usize>,
    /// Basis count candidates; ignored for the dense baseline.
    pub n_basis: Vec<usize>,
    pub dropout: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        // The dense baseline's published search sets; basis-model runs
        // restrict widths to the reduced range.
        Self {
            n_units: vec![64, 128, 512, 640, 768],
            n_basis: vec![32, 64, 128],
            dropout: vec![0.0, 0.1, 0.3, 0.5],
            learning_rate: vec![1e-3, 5e-4, 1e-4, 5e-5],
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridCell {
    pub n_units: usize,
    pub n_basis: Option<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub val_loss: f64,
}

pub struct GridOutcome {
    pub best_spec: ModelSpec,
    pub best_config: TrainConfig,
    pub best_val_loss: f64,
    pub cells: Vec<GridCell>,
}

/// Exhaustive search over the grid's cartesian product, every cell trained
/// with the same seed; the minimal validation loss wins, ties broken by
/// enumeration order (n_units, then n_basis, then dropout, then rate).
pub fn grid_search(
    base_spec: &ModelSpec,
    dataset: &WindowedDataset,
    base_cfg: &TrainConfig,
    grid: &GridSpec,
    scheme: ValidationScheme,
) -> Result<GridOutcome, TrainError> {
    if grid.n_units.is_empty() || grid.dropout.is_empty() || grid.learning_rate.is_empty() {
        return Err(TrainError::InvalidConfig("grid candidate lists must be non-empty".into()));
    }
    let basis_choices: Vec<Option<usize>> = match base_spec {
        ModelSpec::Qnbm(_) => {
            if grid.n_basis.is_empty() {
                return Err(TrainError::InvalidConfig("grid.n_basis must be non-empty".into()));
            }
            grid.n_basis.iter().copied().map(Some).collect()
        }
        ModelSpec::Qrdnn(_) => vec![None],
    };

    let mut cells = Vec::new();
    let mut best: Option<(f64, ModelSpec, TrainConfig)> = None;
    for &n_units in &grid.n_units {
        for &n_basis in &basis_choices {
            for &dropout in &grid.dropout {
                for &learning_rate in &grid.learning_rate {
                    let spec = match base_spec {
                        ModelSpec::Qnbm(cfg) => ModelSpec::Qnbm(QnbmConfig {
                            n_units,
                            n_basis: n_basis.expect("qnbm grid carries basis counts"),
                            ..cfg.clone()
                        }),
                        ModelSpec::Qrdnn(cfg) => {
                            ModelSpec::Qrdnn(QrdnnConfig { n_units, ..cfg.clone() })
                        }
                    };
                    let cfg = TrainConfig {
                        dropout_rate: dropout,
                        learning_rate,
                        ..base_cfg.clone()
                    };
                    // Diverging cells rank last instead of aborting the search.
                    let val_loss = match fit(&spec, dataset, &cfg, scheme) {
                        Ok(result) => result.best_val_loss,
                        Err(TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. }) => {
                            f64::INFINITY
                        }
                        Err(other) => return Err(other),
                    };
                    cells.push(GridCell { n_units, n_basis, dropout, learning_rate, val_loss });
                    let is_better = best.as_ref().map(|(b, _, _)| val_loss < *b).unwrap_or(true);
                    if is_better && val_loss.is_finite() {
                        best = Some((val_loss, spec, cfg));
                    }
                }
            }
        }
    }
    let (best_val_loss, best_spec, best_config) = best.ok_or_else(|| {
        TrainError::InvalidConfig("every grid cell diverged; no usable configuration".into())
    })?;
    Ok(GridOutcome { best_spec, best_config, best_val_loss, cells })
}
