use super::TrainError;
use crate::numkit::Matrix;

/// Mean multi-stage pinball loss over every (day, hour, level) cell, with
/// the gradient on the predicted quantile matrix.
///
/// Each cell contributes (y - q) * gamma when y > q and (q - y) * (1 - gamma)
/// when y <= q; ties sit on the second branch, giving zero loss and gradient
/// (1 - gamma) toward the prediction.
///
/// `targets` is days x horizon; `quantiles` is days x (horizon * levels)
/// with level fastest-varying.
pub fn pinball_loss(
    targets: &Matrix,
    quantiles: &Matrix,
    levels: &[f64],
) -> Result<(f64, Matrix), TrainError> {
    if levels.is_empty() || levels.iter().any(|&g| g <= 0.0 || g >= 1.0) {
        return Err(TrainError::InvalidConfig(format!(
            "quantile levels must lie strictly inside (0,1): {levels:?}"
        )));
    }
    let n_levels = levels.len();
    if quantiles.rows() != targets.rows() || quantiles.cols() != targets.cols() * n_levels {
        return Err(TrainError::InvalidConfig(format!(
            "pinball shapes disagree: targets {}x{}, quantiles {}x{}, {} levels",
            targets.rows(),
            targets.cols(),
            quantiles.rows(),
            quantiles.cols(),
            n_levels
        )));
    }
    let count = (quantiles.rows() * quantiles.cols()) as f64;
    let inv = 1.0 / count;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(quantiles.rows(), quantiles.cols());
    for d in 0..targets.rows() {
        for h in 0..targets.cols() {
            let y = targets.get(d, h);
            for (qi, &gamma) in levels.iter().enumerate() {
                let o = h * n_levels + qi;
                let q = quantiles.get(d, o);
                if y > q {
                    total += (y - q) * gamma;
                    grad.set(d, o, -gamma * inv);
                } else {
                    total += (q - y) * (1.0 - gamma);
                    grad.set(d, o, (1.0 - gamma) * inv);
                }
            }
        }
    }
    Ok((total * inv, grad))
}

/// Mean pinball loss of a single row block without the gradient.
pub fn pinball_value(targets: &Matrix, quantiles: &Matrix, levels: &[f64]) -> Result<f64, TrainError> {
    pinball_loss(targets, quantiles, levels).map(|(v, _)| v)
}
