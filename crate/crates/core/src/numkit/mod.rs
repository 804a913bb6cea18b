//! Minimal dense numeric core: row-major f64 matrices, a seeded deterministic
//! generator and the Gaussian special functions the rest of the crate needs.

mod gauss;
mod matrix;
mod rng;

pub use gauss::{norm_cdf, norm_ppf};
pub use matrix::{relu, Matrix, NumError};
pub use rng::{sample_normal, RngState, RNG_ALGORITHM};
