//! Multi-seed retraining with forecast aggregation by per-level quantile
//! averaging (vincentization).

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::WindowedDataset;
use crate::forecast::QuantileForecast;
use crate::model::{AnyModel, QuantileNet};
use crate::numkit::Matrix;
use crate::train::{fit, ModelSpec, TrainConfig, TrainError, ValidationScheme};

#[derive(Error, Debug)]
pub enum EnsembleError {
    #[error("member {member} forecast shape differs from member 0: {detail}")]
    ShapeMismatch { member: usize, detail: String },
    #[error("no forecasts to aggregate")]
    Empty,
    #[error("all {attempted} ensemble members diverged")]
    AllMembersDiverged { attempted: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn default_member_count() -> usize {
    5
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub member_count: usize,
    pub base_seed: u64,
    /// Train members on separate threads; results are identical either way.
    pub parallel: bool,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { member_count: default_member_count(), base_seed: 0, parallel: false }
    }
}

/// Per-(day, hour, level) arithmetic mean over members, optionally re-sorting
/// each (day, hour) cell afterwards.
pub fn aggregate(forecasts: &[QuantileForecast], resort: bool) -> Result<QuantileForecast, EnsembleError> {
    let first = forecasts.first().ok_or(EnsembleError::Empty)?;
    for (m, f) in forecasts.iter().enumerate().skip(1) {
        if f.days() != first.days() || f.horizon() != first.horizon() || f.levels() != first.levels()
        {
            return Err(EnsembleError::ShapeMismatch {
                member: m,
                detail: format!(
                    "{} day(s) x {} step(s) x {} level(s) vs {} x {} x {}",
                    f.days(),
                    f.horizon(),
                    f.levels().len(),
                    first.days(),
                    first.horizon(),
                    first.levels().len()
                ),
            });
        }
    }
    let scale = 1.0 / forecasts.len() as f64;
    let data = Matrix::from_fn(first.days(), first.horizon() * first.levels().len(), |r, c| {
        forecasts.iter().map(|f| f.data().get(r, c)).sum::<f64>() * scale
    });
    let mut out = QuantileForecast::new(
        first.levels().to_vec(),
        first.horizon(),
        data,
        first.start_date(),
    )
    .expect("shapes validated");
    if resort {
        out.sort_quantiles();
    }
    Ok(out)
}

pub struct EnsembleMember {
    pub seed: u64,
    pub model: AnyModel,
    pub best_val_loss: f64,
}

pub struct EnsembleOutput {
    pub forecast: QuantileForecast,
    pub members: Vec<EnsembleMember>,
    /// Diverged members skipped with their error text.
    pub skipped: Vec<(u64, String)>,
}

type MemberResult = Result<(AnyModel, QuantileForecast, f64), TrainError>;

fn train_member(
    spec: &ModelSpec,
    dataset: &WindowedDataset,
    inputs: &Matrix,
    cfg: &TrainConfig,
    scheme: ValidationScheme,
    seed: u64,
    start_date: Option<NaiveDate>,
) -> MemberResult {
    let member_cfg = TrainConfig { seed, ..cfg.clone() };
    let result = fit(spec, dataset, &member_cfg, scheme)?;
    let forecast = result.model.predict(inputs, start_date)?;
    Ok((result.model, forecast, result.best_val_loss))
}

/// Train `member_count` models from consecutive seeds base, base+1, ... and
/// aggregate their forecasts over `inputs`. Diverged members are skipped
/// with a warning entry; the run fails only if every member diverges.
pub fn run_ensemble(
    spec: &ModelSpec,
    dataset: &WindowedDataset,
    inputs: &Matrix,
    cfg: &TrainConfig,
    scheme: ValidationScheme,
    ensemble: &EnsembleSpec,
    start_date: Option<NaiveDate>,
) -> Result<EnsembleOutput, EnsembleError> {
    if ensemble.member_count == 0 {
        return Err(EnsembleError::Empty);
    }
    let seeds: Vec<u64> = (0..ensemble.member_count)
        .map(|m| ensemble.base_seed.wrapping_add(m as u64))
        .collect();

    let results: Vec<(u64, MemberResult)> = if ensemble.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| {
                    scope.spawn(move || {
                        train_member(spec, dataset, inputs, cfg, scheme, seed, start_date)
                    })
                })
                .collect();
            seeds
                .iter()
                .zip(handles)
                .map(|(&seed, h)| (seed, h.join().expect("member thread panicked")))
                .collect()
        })
    } else {
        seeds
            .iter()
            .map(|&seed| (seed, train_member(spec, dataset, inputs, cfg, scheme, seed, start_date)))
            .collect()
    };

    let mut members = Vec::new();
    let mut forecasts = Vec::new();
    let mut skipped = Vec::new();
    for (seed, result) in results {
        match result {
            Ok((model, forecast, best_val_loss)) => {
                members.push(EnsembleMember { seed, model, best_val_loss });
                forecasts.push(forecast);
            }
            Err(err @ (TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. })) => {
                skipped.push((seed, err.to_string()));
            }
            Err(other) => return Err(other.into()),
        }
    }
    if forecasts.is_empty() {
        return Err(EnsembleError::AllMembersDiverged { attempted: ensemble.member_count });
    }
    let resort = members[0].model.sort_enabled();
    let forecast = aggregate(&forecasts, resort)?;
    Ok(EnsembleOutput { forecast, members, skipped })
}
