use std::io::Write;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::early::EarlyStopper;
use super::loss::{pinball_loss, pinball_value};
use super::TrainError;
use crate::dataset::WindowedDataset;
use crate::model::{AnyModel, Mode, QnbmConfig, QnbmParams, QrdnnConfig, QrdnnParams, QuantileNet};
use crate::numkit::{Matrix, RngState};

/// Optimization protocol shared by every training run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Batches are assembled from contiguous runs of this many samples.
    pub sub_block: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Reference protocol; the learning rate and dropout match the tuned
        // QNBM configuration for the German market (n_units 64, lr 5e-4,
        // dropout 0.1).
        Self {
            learning_rate: 5e-4,
            dropout_rate: 0.1,
            max_epochs: 800,
            patience: 20,
            batch_size: 128,
            sub_block: 32,
            validation_fraction: 0.20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "validation_fraction must be in (0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.patience > self.max_epochs {
            return Err(TrainError::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("max_epochs must be positive".into()));
        }
        if self.sub_block == 0 || self.batch_size == 0 || !self.batch_size.is_multiple_of(self.sub_block) {
            return Err(TrainError::InvalidConfig(format!(
                "batch_size {} must be a positive multiple of sub_block {}",
                self.batch_size, self.sub_block
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(TrainError::InvalidConfig("dropout_rate must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Architecture to instantiate before fitting; the dropout rate is taken
/// from the [`TrainConfig`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum ModelSpec {
    Qnbm(QnbmConfig),
    Qrdnn(QrdnnConfig),
}

impl ModelSpec {
    pub fn build(
        &self,
        dataset: &WindowedDataset,
        dropout: f64,
        rng: &mut RngState,
    ) -> Result<AnyModel, TrainError> {
        Ok(match self {
            ModelSpec::Qnbm(cfg) => {
                let cfg = QnbmConfig { dropout, ..cfg.clone() };
                AnyModel::Qnbm(QnbmParams::init(cfg, dataset, rng)?)
            }
            ModelSpec::Qrdnn(cfg) => {
                let cfg = QrdnnConfig { dropout, ..cfg.clone() };
                AnyModel::Qrdnn(QrdnnParams::init(cfg, dataset, rng)?)
            }
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Qnbm(_) => "qnbm",
            ModelSpec::Qrdnn(_) => "qrdnn",
        }
    }
}

/// How the validation rows used for early stopping are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationScheme {
    /// Seeded random subsample of the stated fraction.
    RandomSubsample,
    /// The chronological tail, split into this many sequential folds whose
    /// losses are averaged.
    SequentialFolds(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub struct FitResult {
    pub model: AnyModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct Split {
    train_rows: Vec<usize>,
    val_folds: Vec<Vec<usize>>,
}

fn split_rows(
    n: usize,
    cfg: &TrainConfig,
    scheme: ValidationScheme,
    rng: &mut RngState,
) -> Result<Split, TrainError> {
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    match scheme {
        ValidationScheme::RandomSubsample => {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let mut val: Vec<usize> = idx[..n_val].to_vec();
            let mut train: Vec<usize> = idx[n_val..].to_vec();
            // Keep chronological order so sub-blocks stay contiguous in time.
            val.sort_unstable();
            train.sort_unstable();
            Ok(Split { train_rows: train, val_folds: vec![val] })
        }
        ValidationScheme::SequentialFolds(k) => {
            if k == 0 {
                return Err(TrainError::InvalidConfig("fold count must be positive".into()));
            }
            if n_val < k {
                return Err(TrainError::InvalidConfig(format!(
                    "{n_val} validation rows cannot form {k} sequential folds"
                )));
            }
            let train: Vec<usize> = (0..n - n_val).collect();
            let val: Vec<usize> = (n - n_val..n).collect();
            let base = n_val / k;
            let extra = n_val % k;
            let mut folds = Vec::with_capacity(k);
            let mut at = 0;
            for f in 0..k {
                let len = base + usize::from(f < extra);
                folds.push(val[at..at + len].to_vec());
                at += len;
            }
            Ok(Split { train_rows: train, val_folds: folds })
        }
    }
}

/// Train a model on the windowed dataset: seeded validation split, epochs of
/// shuffled batches assembled from contiguous sub-blocks, Adam updates, and
/// early stopping on the validation pinball loss. Returns the parameters of
/// the best validation epoch.
pub fn fit(
    spec: &ModelSpec,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
    scheme: ValidationScheme,
) -> Result<FitResult, TrainError> {
    cfg.validate()?;
    let n = dataset.n_days();
    if n < 2 {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = RngState::seed_from(cfg.seed);
    let split = split_rows(n, cfg, scheme, &mut rng)?;

    // The model is initialized from training rows only.
    let train_view = {
        let (inputs, targets) = dataset.select_rows(&split.train_rows);
        WindowedDataset {
            inputs,
            targets,
            layout: dataset.layout.clone(),
            horizon: dataset.horizon,
            first_day: dataset.first_day,
            start_date: dataset.start_date,
        }
    };
    let mut model = spec.build(&train_view, cfg.dropout_rate, &mut rng)?;
    let levels = model.levels().to_vec();

    let val_sets: Vec<(Matrix, Matrix)> = split
        .val_folds
        .iter()
        .map(|rows| dataset.select_rows(rows))
        .collect();

    let n_train = split.train_rows.len();
    let blocks_per_batch = cfg.batch_size / cfg.sub_block;
    let batches_per_epoch = n_train.div_ceil(cfg.batch_size).max(1);

    let mut state = AdamState::new(&model);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut history = Vec::new();
    let mut best_model = model.clone();

    for epoch in 0..cfg.max_epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..batches_per_epoch {
            let mut batch_rows = Vec::with_capacity(cfg.batch_size);
            for _ in 0..blocks_per_batch {
                if n_train <= cfg.sub_block {
                    batch_rows.extend_from_slice(&split.train_rows);
                } else {
                    let start = rng.below(n_train - cfg.sub_block + 1);
                    batch_rows.extend_from_slice(&split.train_rows[start..start + cfg.sub_block]);
                }
            }
            let (bx, by) = dataset.select_rows(&batch_rows);
            let (out, cache) = model.forward(&bx, Mode::Train, Some(&mut rng))?;
            let (loss, grad) = pinball_loss(&by, &out, &levels)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    last_finite_epoch: history.last().map(|h: &EpochStats| h.epoch),
                });
            }
            epoch_loss += loss;
            let grads = model.backward(&cache, &grad)?;
            adam_step(&mut model, &grads, &mut state, cfg.learning_rate)?;
        }
        let train_loss = epoch_loss / batches_per_epoch as f64;

        let mut val_loss = 0.0;
        for (vx, vy) in &val_sets {
            let (vout, _) = model.forward(vx, Mode::Eval, None)?;
            val_loss += pinball_value(vy, &vout, &levels)?;
        }
        val_loss /= val_sets.len() as f64;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                last_finite_epoch: history.last().map(|h| h.epoch),
            });
        }

        history.push(EpochStats { epoch, train_loss, val_loss });
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_model = model.clone();
        }
        if stop {
            break;
        }
    }

    Ok(FitResult {
        model: best_model,
        history,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
    })
}

/// Training history in the `epoch,train_loss,val_loss` CSV format.
pub fn write_history_csv(history: &[EpochStats], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for h in history {
        writeln!(w, "{},{},{}", h.epoch, h.train_loss, h.val_loss)?;
    }
    Ok(())
}
