use super::EvalError;
use crate::forecast::QuantileForecast;
use crate::numkit::Matrix;

fn check_shapes(targets: &Matrix, forecast: &QuantileForecast) -> Result<(), EvalError> {
    if targets.rows() != forecast.days() || targets.cols() != forecast.horizon() {
        return Err(EvalError::ShapeMismatch(format!(
            "targets are {}x{}, forecast covers {} day(s) x {} step(s)",
            targets.rows(),
            targets.cols(),
            forecast.days(),
            forecast.horizon()
        )));
    }
    Ok(())
}

/// CRPS approximated as the mean pinball loss across the forecast's quantile
/// grid (no factor of two applied; on the 99-percentile grid this is the
/// "average pinball" convention).
pub fn crps_pinball(targets: &Matrix, forecast: &QuantileForecast) -> Result<f64, EvalError> {
    check_shapes(targets, forecast)?;
    let levels = forecast.levels();
    let mut total = 0.0;
    for d in 0..forecast.days() {
        for h in 0..forecast.horizon() {
            let y = targets.get(d, h);
            for (qi, &gamma) in levels.iter().enumerate() {
                let q = forecast.get(d, h, qi);
                total += if y > q { (y - q) * gamma } else { (q - y) * (1.0 - gamma) };
            }
        }
    }
    Ok(total / (forecast.days() * forecast.horizon() * levels.len()) as f64)
}

/// Per-day pinball loss aggregated with the L1 norm over the (hour, level)
/// grid; the loss series fed to the Diebold-Mariano comparison.
pub fn per_day_pinball_l1(targets: &Matrix, forecast: &QuantileForecast) -> Result<Vec<f64>, EvalError> {
    check_shapes(targets, forecast)?;
    let levels = forecast.levels();
    let mut out = Vec::with_capacity(forecast.days());
    for d in 0..forecast.days() {
        let mut day = 0.0;
        for h in 0..forecast.horizon() {
            let y = targets.get(d, h);
            for (qi, &gamma) in levels.iter().enumerate() {
                let q = forecast.get(d, h, qi);
                day += if y > q { (y - q) * gamma } else { (q - y) * (1.0 - gamma) };
            }
        }
        out.push(day);
    }
    Ok(out)
}

/// Mean absolute error of the median forecast.
pub fn mae(targets: &Matrix, forecast: &QuantileForecast) -> Result<f64, EvalError> {
    check_shapes(targets, forecast)?;
    let median = forecast
        .level_index(0.5)
        .map_err(|_| EvalError::LevelNotOnGrid { gamma: 0.5 })?;
    let mut total = 0.0;
    for d in 0..forecast.days() {
        for h in 0..forecast.horizon() {
            total += (targets.get(d, h) - forecast.get(d, h, median)).abs();
        }
    }
    Ok(total / (forecast.days() * forecast.horizon()) as f64)
}

/// Quantile levels bounding the central `level_pct` interval, e.g. 90 ->
/// (0.05, 0.95).
pub fn central_interval_levels(level_pct: f64) -> Result<(f64, f64), EvalError> {
    if !(0.0 < level_pct && level_pct < 100.0) {
        return Err(EvalError::InvalidParameter(format!(
            "interval level must be in (0,100) percent, got {level_pct}"
        )));
    }
    let lo = (1.0 - level_pct / 100.0) / 2.0;
    Ok((lo, 1.0 - lo))
}

/// Interval violation count for the central `level_pct` interval: (outside,
/// total), with inclusive bounds so ties count as covered.
pub fn interval_violations(
    targets: &Matrix,
    forecast: &QuantileForecast,
    level_pct: f64,
) -> Result<(usize, usize), EvalError> {
    check_shapes(targets, forecast)?;
    let (lo, hi) = central_interval_levels(level_pct)?;
    let lo_idx = forecast
        .level_index(lo)
        .map_err(|_| EvalError::LevelNotOnGrid { gamma: lo })?;
    let hi_idx = forecast
        .level_index(hi)
        .map_err(|_| EvalError::LevelNotOnGrid { gamma: hi })?;
    let mut outside = 0;
    let total = forecast.days() * forecast.horizon();
    for d in 0..forecast.days() {
        for h in 0..forecast.horizon() {
            let y = targets.get(d, h);
            if y < forecast.get(d, h, lo_idx) || y > forecast.get(d, h, hi_idx) {
                outside += 1;
            }
        }
    }
    Ok((outside, total))
}

/// Prediction interval coverage probability in percent.
pub fn picp(targets: &Matrix, forecast: &QuantileForecast, level_pct: f64) -> Result<f64, EvalError> {
    let (outside, total) = interval_violations(targets, forecast, level_pct)?;
    Ok(100.0 * (total - outside) as f64 / total.max(1) as f64)
}

/// Empirical frequency of y <= q_gamma for every level on the grid.
pub fn calibration_curve(targets: &Matrix, forecast: &QuantileForecast) -> Result<Vec<(f64, f64)>, EvalError> {
    check_shapes(targets, forecast)?;
    let total = (forecast.days() * forecast.horizon()) as f64;
    let mut out = Vec::with_capacity(forecast.levels().len());
    for (qi, &gamma) in forecast.levels().iter().enumerate() {
        let mut count = 0usize;
        for d in 0..forecast.days() {
            for h in 0..forecast.horizon() {
                if targets.get(d, h) <= forecast.get(d, h, qi) {
                    count += 1;
                }
            }
        }
        out.push((gamma, count as f64 / total));
    }
    Ok(out)
}
