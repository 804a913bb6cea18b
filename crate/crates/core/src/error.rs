use thiserror::Error;

use crate::dataset::DataError;
use crate::forecast::ForecastError;
use crate::numkit::NumError;

/// Umbrella error for operations that can fail across module boundaries.
#[derive(Error, Debug)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}
