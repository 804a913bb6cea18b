use serde::{Deserialize, Serialize};

use super::revin::RevinLayer;
use super::ModelError;
use crate::dataset::{FeatureKind, FeatureLayout};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-row RevIN statistics: (means, epsilon-guarded standard deviations).
pub type InstanceStats = (Vec<f64>, Vec<f64>);

/// Per-column training statistics, also serving as the observed feature
/// ranges for shape-function grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Training-set z-scoring for columns outside the RevIN group: exogenous
/// columns always, price lags only when RevIN is disabled, calendar never.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub stats: Vec<FeatureStats>,
    pub standardized: Vec<bool>,
}

impl FeatureScaler {
    pub fn fit(inputs: &Matrix, layout: &FeatureLayout, revin_enabled: bool) -> Self {
        let n = inputs.rows().max(1) as f64;
        let mut stats = Vec::with_capacity(inputs.cols());
        let mut standardized = Vec::with_capacity(inputs.cols());
        for c in 0..inputs.cols() {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for r in 0..inputs.rows() {
                let v = inputs.get(r, c);
                sum += v;
                min = min.min(v);
                max = max.max(v);
            }
            let mean = sum / n;
            let var = (0..inputs.rows())
                .map(|r| {
                    let d = inputs.get(r, c) - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            if inputs.rows() == 0 {
                min = 0.0;
                max = 0.0;
            }
            stats.push(FeatureStats { mean, std: var.sqrt(), min, max });
            standardized.push(match &layout.kinds()[c] {
                FeatureKind::Exogenous { .. } => true,
                FeatureKind::PriceLag { .. } => !revin_enabled,
                FeatureKind::Calendar { .. } => false,
            });
        }
        Self { stats, standardized }
    }

    /// Identity scaler (tests and hand-built models).
    pub fn identity(n_features: usize) -> Self {
        Self {
            stats: vec![FeatureStats { mean: 0.0, std: 1.0, min: 0.0, max: 1.0 }; n_features],
            standardized: vec![false; n_features],
        }
    }

    #[inline]
    pub fn apply(&self, col: usize, value: f64) -> f64 {
        if self.standardized[col] {
            let s = &self.stats[col];
            (value - s.mean) / s.std.max(1e-12)
        } else {
            value
        }
    }
}

/// Column classification of a layout, precomputed for the forward pass.
pub struct LayoutIndex {
    pub price_cols: Vec<usize>,
    pub col_hour: Vec<Option<usize>>,
}

impl LayoutIndex {
    pub fn new(layout: &FeatureLayout) -> Self {
        Self {
            price_cols: layout.price_lag_columns(),
            col_hour: layout.kinds().iter().map(FeatureKind::hour).collect(),
        }
    }
}

/// Validate raw inputs and produce the normalized design matrix plus the
/// per-row RevIN instance statistics (when enabled).
pub fn preprocess(
    x: &Matrix,
    layout: &FeatureLayout,
    scaler: &FeatureScaler,
    revin: &RevinLayer,
) -> Result<(Matrix, Option<InstanceStats>), ModelError> {
    let n_f = layout.len();
    if x.cols() != n_f {
        return Err(ModelError::FeatureMismatch { expected: n_f, got: x.cols() });
    }
    for r in 0..x.rows() {
        for (c, v) in x.row(r).iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NanInput {
                    feature: layout.kinds()[c].name(),
                    row: r,
                });
            }
        }
    }
    let index = LayoutIndex::new(layout);
    if revin.enabled && index.price_cols.is_empty() {
        return Err(ModelError::InvalidConfig(
            "RevIN requires at least one price-lag column".to_string(),
        ));
    }

    let mut xhat = Matrix::zeros(x.rows(), n_f);
    let stats = if revin.enabled {
        let mut means = Vec::with_capacity(x.rows());
        let mut sdevs = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let group: Vec<f64> = index.price_cols.iter().map(|&c| x.get(r, c)).collect();
            let (mean, sdev) = revin.instance_stats(&group);
            means.push(mean);
            sdevs.push(sdev);
        }
        Some((means, sdevs))
    } else {
        None
    };

    for r in 0..x.rows() {
        for c in 0..n_f {
            let v = x.get(r, c);
            let out = if revin.enabled && index.col_hour[c].is_some() && layout.kinds()[c].is_price_lag() {
                let (means, sdevs) = stats.as_ref().expect("revin stats");
                let hour = index.col_hour[c].expect("price lag has an hour");
                revin.normalize_value(v, means[r], sdevs[r], hour)
            } else {
                scaler.apply(c, v)
            };
            xhat.set(r, c, out);
        }
    }
    Ok((xhat, stats))
}

/// Map normalized-space head outputs back to price units. Output column
/// o = h * levels + q uses hour h's affine and the row's instance stats.
pub fn denormalize_outputs(
    qnorm: &Matrix,
    stats: &InstanceStats,
    revin: &RevinLayer,
    n_levels: usize,
) -> Matrix {
    let (means, sdevs) = stats;
    Matrix::from_fn(qnorm.rows(), qnorm.cols(), |r, o| {
        let hour = o / n_levels;
        revin.denormalize_value(qnorm.get(r, o), means[r], sdevs[r], hour)
    })
}

/// Backward pass of [`denormalize_outputs`]: the gradient on normalized
/// outputs plus the output-side affine gradients.
pub fn denorm_backward(
    grad_out: &Matrix,
    qnorm: &Matrix,
    stats: &InstanceStats,
    revin: &RevinLayer,
    n_levels: usize,
) -> (Matrix, Matrix, Matrix) {
    let (_, sdevs) = stats;
    let mut gnorm = Matrix::zeros(grad_out.rows(), grad_out.cols());
    let mut d_scale = Matrix::zeros(1, revin.scale.cols());
    let mut d_shift = Matrix::zeros(1, revin.shift.cols());
    for r in 0..grad_out.rows() {
        for o in 0..grad_out.cols() {
            let hour = o / n_levels;
            let scale = revin.scale.get(0, hour);
            let shift = revin.shift.get(0, hour);
            let gn = grad_out.get(r, o) * sdevs[r] / scale;
            gnorm.set(r, o, gn);
            d_shift.set(0, hour, d_shift.get(0, hour) - gn);
            d_scale.set(
                0,
                hour,
                d_scale.get(0, hour) - gn * (qnorm.get(r, o) - shift) / scale,
            );
        }
    }
    (gnorm, d_scale, d_shift)
}

/// Accumulate input-side affine gradients from the gradient on normalized
/// price-lag inputs: xhat = scale[h] * z + shift[h] with z the standardized
/// value, so d/d scale = z and d/d shift = 1.
pub fn input_affine_grads(
    dxhat: &Matrix,
    xhat: &Matrix,
    index: &LayoutIndex,
    revin: &RevinLayer,
    d_scale: &mut Matrix,
    d_shift: &mut Matrix,
) {
    for &c in &index.price_cols {
        let hour = index.col_hour[c].expect("price lag has an hour");
        let scale = revin.scale.get(0, hour);
        let shift = revin.shift.get(0, hour);
        for r in 0..dxhat.rows() {
            let g = dxhat.get(r, c);
            let z = (xhat.get(r, c) - shift) / scale;
            d_scale.set(0, hour, d_scale.get(0, hour) + g * z);
            d_shift.set(0, hour, d_shift.get(0, hour) + g);
        }
    }
}

/// Empirical gamma-quantile with linear interpolation between order
/// statistics (the common "type 7" definition).
pub fn empirical_quantile(sorted: &[f64], gamma: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = gamma * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Targets mapped into the space the head predicts in: identity without
/// RevIN, per-instance standardization by each row's price-lag statistics
/// with it. Output biases must be anchored in this space.
pub fn head_space_targets(
    inputs: &Matrix,
    targets: &Matrix,
    layout: &FeatureLayout,
    revin: &RevinLayer,
) -> Matrix {
    if !revin.enabled {
        return targets.clone();
    }
    let price_cols = layout.price_lag_columns();
    Matrix::from_fn(targets.rows(), targets.cols(), |r, h| {
        let group: Vec<f64> = price_cols.iter().map(|&c| inputs.get(r, c)).collect();
        let (mean, sdev) = revin.instance_stats(&group);
        (targets.get(r, h) - mean) / sdev
    })
}

/// Per-(hour, level) unconditional training quantiles, used to anchor output
/// biases at climatology.
pub fn unconditional_quantiles(targets: &Matrix, horizon: usize, levels: &[f64]) -> Matrix {
    let mut beta = Matrix::zeros(1, horizon * levels.len());
    for h in 0..horizon {
        let mut col: Vec<f64> = (0..targets.rows()).map(|r| targets.get(r, h)).collect();
        col.sort_by(f64::total_cmp);
        for (qi, &g) in levels.iter().enumerate() {
            let value = if col.is_empty() { 0.0 } else { empirical_quantile(&col, g) };
            beta.set(0, h * levels.len() + qi, value);
        }
    }
    beta
}
