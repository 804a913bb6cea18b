//! Exact shape-function extraction: the per-feature map from input value to
//! its contribution to a predicted quantile. Additivity makes the curves
//! exact attributions, so no masking or baseline input is needed.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::model::{QnbmParams, QuantileNet};
use crate::numkit::Matrix;

#[derive(Error, Debug)]
pub enum InterpretError {
    #[error("feature index {index} out of range ({count} features)")]
    BadFeature { index: usize, count: usize },
    #[error("hour {hour} exceeds the model horizon {horizon}")]
    BadHour { hour: usize, horizon: usize },
    #[error("quantile level {gamma} is not on the model grid")]
    LevelNotOnGrid { gamma: f64 },
    #[error("member {member} layout is incompatible with member 0")]
    IncompatibleMember { member: usize },
    #[error("empty member list")]
    NoMembers,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One extracted curve: contribution of a feature's value to one
/// (hour, level) output, per ensemble member.
#[derive(Clone, Debug, Serialize)]
pub struct ShapeCurve {
    pub feature: String,
    pub feature_index: usize,
    pub gamma: f64,
    pub hour: usize,
    pub member: usize,
    /// Grid in raw feature units, except price-lag features of RevIN models
    /// whose transform is instance-dependent: those use normalized units.
    pub xs: Vec<f64>,
    /// v[(hour, gamma), i] * f_i(x), scaled by `output_scale`.
    pub contributions: Vec<f64>,
    /// Raw shape-function values f_i(x).
    pub shape_values: Vec<f64>,
    /// True when the grid is in normalized rather than raw input units.
    pub normalized_input_units: bool,
    /// True when part of the grid lies outside the observed training range.
    pub out_of_range: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ShapeGridOptions {
    /// Evenly spaced grid points over the feature's training range.
    pub points: usize,
    /// Fractional widening of the range on each side.
    pub expansion: f64,
}

impl Default for ShapeGridOptions {
    fn default() -> Self {
        Self { points: 201, expansion: 0.0 }
    }
}

/// Evenly spaced grid over the observed training range of a feature.
pub fn default_grid(params: &QnbmParams, feature: usize, options: ShapeGridOptions) -> Result<Vec<f64>, InterpretError> {
    check_feature(params, feature)?;
    let stats = &params.scaler.stats[feature];
    let (lo, hi) = widened(stats.min, stats.max, options.expansion);
    Ok(linspace(lo, hi, options.points.max(2)))
}

fn widened(min: f64, max: f64, expansion: f64) -> (f64, f64) {
    let span = (max - min).max(1e-9);
    (min - expansion * span, max + expansion * span)
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

fn check_feature(params: &QnbmParams, feature: usize) -> Result<(), InterpretError> {
    if feature >= params.n_features() {
        return Err(InterpretError::BadFeature { index: feature, count: params.n_features() });
    }
    Ok(())
}

/// Average RevIN instance standard deviation over a set of input rows,
/// mapping normalized head units to price units for curve scaling. Returns
/// 1.0 for models without RevIN.
pub fn reference_output_scale(params: &QnbmParams, inputs: &Matrix) -> f64 {
    if !params.revin.enabled {
        return 1.0;
    }
    let cols = params.layout.price_lag_columns();
    let mut total = 0.0;
    for r in 0..inputs.rows() {
        let group: Vec<f64> = cols.iter().map(|&c| inputs.get(r, c)).collect();
        let (_, sdev) = params.revin.instance_stats(&group);
        total += sdev;
    }
    total / inputs.rows().max(1) as f64
}

/// Evaluate one shape function on a grid of raw feature values and multiply
/// by the head weight of the requested (hour, level) output.
///
/// `output_scale` maps normalized head units to price units (use
/// [`reference_output_scale`] for RevIN models, 1.0 otherwise); the per-hour
/// inverse affine is applied on top of it.
pub fn extract_shape(
    params: &QnbmParams,
    feature: usize,
    gamma: f64,
    hour: usize,
    grid: &[f64],
    output_scale: f64,
    member: usize,
) -> Result<ShapeCurve, InterpretError> {
    check_feature(params, feature)?;
    if hour >= params.horizon() {
        return Err(InterpretError::BadHour { hour, horizon: params.horizon() });
    }
    let level_idx = params
        .levels()
        .iter()
        .position(|&g| (g - gamma).abs() < 1e-9)
        .ok_or(InterpretError::LevelNotOnGrid { gamma })?;
    let o = hour * params.levels().len() + level_idx;

    let weff_t = params.shape_proj.effective().transpose();
    let veff = params.head_proj.effective();
    let head_weight = veff.get(o, feature);
    let scale = if params.revin.enabled {
        output_scale / params.revin.scale.get(0, hour)
    } else {
        output_scale
    };

    let stats = &params.scaler.stats[feature];
    let mut xs = Vec::with_capacity(grid.len());
    let mut shape_values = Vec::with_capacity(grid.len());
    let mut contributions = Vec::with_capacity(grid.len());
    let mut normalized_units = false;
    let mut out_of_range = false;
    for &x in grid {
        let normalized = match params.normalize_feature(feature, x) {
            Some(v) => v,
            None => {
                normalized_units = true;
                x
            }
        };
        if !normalized_units && (x < stats.min || x > stats.max) {
            out_of_range = true;
        }
        let f = params.basis_contribution_with(&weff_t, feature, normalized);
        xs.push(x);
        shape_values.push(f);
        contributions.push(head_weight * f * scale);
    }
    Ok(ShapeCurve {
        feature: params.layout.kinds()[feature].name(),
        feature_index: feature,
        gamma,
        hour,
        member,
        xs,
        contributions,
        shape_values,
        normalized_input_units: normalized_units,
        out_of_range,
    })
}

/// Curves for every (feature, gamma, hour) combination across ensemble
/// members, on one shared grid per feature spanning the union of the
/// members' training ranges.
pub fn extract_all(
    members: &[&QnbmParams],
    features: &[usize],
    gammas: &[f64],
    hours: &[usize],
    options: ShapeGridOptions,
    output_scales: &[f64],
) -> Result<Vec<ShapeCurve>, InterpretError> {
    let first = *members.first().ok_or(InterpretError::NoMembers)?;
    for (m, p) in members.iter().enumerate().skip(1) {
        if p.layout.fingerprint() != first.layout.fingerprint() {
            return Err(InterpretError::IncompatibleMember { member: m });
        }
    }
    let mut curves = Vec::new();
    for &feature in features {
        check_feature(first, feature)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in members {
            let s = &p.scaler.stats[feature];
            lo = lo.min(s.min);
            hi = hi.max(s.max);
        }
        let (lo, hi) = widened(lo, hi, options.expansion);
        let grid = linspace(lo, hi, options.points.max(2));
        for (m, p) in members.iter().enumerate() {
            let scale = output_scales.get(m).copied().unwrap_or(1.0);
            for &gamma in gammas {
                for &hour in hours {
                    curves.push(extract_shape(p, feature, gamma, hour, &grid, scale, m)?);
                }
            }
        }
    }
    Ok(curves)
}

/// Long-form CSV: x, contribution, member, feature, gamma, hour.
pub fn write_curves_csv(curves: &[ShapeCurve], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "x,contribution,shape_value,member,feature,gamma,hour")?;
    for c in curves {
        for ((x, v), f) in c.xs.iter().zip(&c.contributions).zip(&c.shape_values) {
            writeln!(w, "{x},{v},{f},{},{},{},{}", c.member, c.feature, c.gamma, c.hour)?;
        }
    }
    Ok(())
}

/// JSON manifest describing a curve bundle.
#[derive(Serialize)]
pub struct CurveManifest<'a> {
    pub curves: usize,
    pub features: Vec<&'a str>,
    pub gammas: Vec<f64>,
    pub hours: Vec<usize>,
    pub members: usize,
    pub grid_points: usize,
}

pub fn manifest_for(curves: &[ShapeCurve]) -> CurveManifest<'_> {
    let mut features: Vec<&str> = curves.iter().map(|c| c.feature.as_str()).collect();
    features.dedup();
    let mut gammas: Vec<f64> = curves.iter().map(|c| c.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let mut hours: Vec<usize> = curves.iter().map(|c| c.hour).collect();
    hours.sort_unstable();
    hours.dedup();
    let members = curves.iter().map(|c| c.member).max().map_or(0, |m| m + 1);
    CurveManifest {
        curves: curves.len(),
        features,
        gammas,
        hours,
        members,
        grid_points: curves.first().map_or(0, |c| c.xs.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureKind, FeatureLayout};
    use crate::model::{Mode, Projection, QnbmConfig};
    use crate::numkit::RngState;

    fn plain_model(seed: u64, n_units: usize, n_basis: usize) -> QnbmParams {
        let layout = FeatureLayout::new(vec![
            FeatureKind::Exogenous { series: "load_fcst".into(), hour: 0 },
            FeatureKind::Exogenous { series: "wind_fcst".into(), hour: 0 },
            FeatureKind::Calendar { name: "age".into() },
        ]);
        let config = QnbmConfig {
            n_units,
            n_basis,
            rank_shape: None,
            rank_head: None,
            dropout: 0.0,
            revin: false,
            quantile_levels: vec![0.05, 0.5, 0.95],
            sort_quantiles: false,
            ..QnbmConfig::default()
        };
        let mut rng = RngState::seed_from(seed);
        QnbmParams::init_with_layout(config, layout, 2, &mut rng).unwrap()
    }

    #[test]
    fn zero_head_weights_give_zero_curve() {
        let mut params = plain_model(1, 4, 3);
        if let Projection::Dense(v) = &mut params.head_proj {
            v.scale(0.0);
        }
        let grid = [-1.0, 0.0, 1.0];
        let curve = extract_shape(&params, 0, 0.5, 0, &grid, 1.0, 0).unwrap();
        assert!(curve.contributions.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn curve_differences_match_forward_pass_differences() {
        // Additivity makes the extraction exact: moving feature i between two
        // grid values moves the (hour, gamma) output by the same amount.
        let params = plain_model(7, 6, 4);
        let grid = [-1.5, -0.3, 0.2, 0.9, 2.0];
        let gamma = 0.95;
        let hour = 1;
        let curve = extract_shape(&params, 1, gamma, hour, &grid, 1.0, 0).unwrap();
        let o = hour * 3 + 2;
        for w in [[0usize, 1], [1, 3], [2, 4]] {
            let mut xa = Matrix::zeros(1, 3);
            let mut xb = Matrix::zeros(1, 3);
            xa.set(0, 1, grid[w[0]]);
            xb.set(0, 1, grid[w[1]]);
            let (ya, _) = params.forward(&xa, Mode::Eval, None).unwrap();
            let (yb, _) = params.forward(&xb, Mode::Eval, None).unwrap();
            let forward_delta = yb.get(0, o) - ya.get(0, o);
            let curve_delta = curve.contributions[w[1]] - curve.contributions[w[0]];
            assert!(
                (forward_delta - curve_delta).abs() < 1e-9,
                "{forward_delta} vs {curve_delta}"
            );
        }
    }

    #[test]
    fn curves_are_piecewise_linear_with_few_breakpoints() {
        // A biasless first layer kinks only at 0 and each basis output adds
        // at most two more kinks, so with 2 * n_basis + 1 <= n_units the
        // breakpoint count stays below the first-layer width.
        let params = plain_model(11, 8, 3);
        let grid = linspace(-3.0, 3.0, 4001);
        let curve = extract_shape(&params, 0, 0.5, 0, &grid, 1.0, 0).unwrap();
        let step = grid[1] - grid[0];
        let slopes: Vec<f64> = curve
            .contributions
            .windows(2)
            .map(|w| (w[1] - w[0]) / step)
            .collect();
        let scale = slopes.iter().fold(1.0_f64, |m, s| m.max(s.abs()));
        let breakpoints = slopes
            .windows(2)
            .filter(|w| (w[1] - w[0]).abs() > 1e-6 * scale)
            .count();
        assert!(breakpoints <= 8, "{breakpoints} breakpoints");
    }

    #[test]
    fn continuity_on_dense_grids() {
        let params = plain_model(13, 8, 4);
        let grid = linspace(-2.0, 2.0, 2001);
        let curve = extract_shape(&params, 2, 0.05, 0, &grid, 1.0, 0).unwrap();
        let max_jump = curve
            .contributions
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_jump < 0.1, "max jump {max_jump}");
    }

    #[test]
    fn bundle_is_stable_under_member_permutation() {
        let a = plain_model(17, 4, 3);
        let b = plain_model(19, 4, 3);
        let curves_ab = extract_all(&[&a, &b], &[0, 1], &[0.5], &[0], ShapeGridOptions::default(), &[1.0, 1.0]).unwrap();
        let curves_ba = extract_all(&[&b, &a], &[0, 1], &[0.5], &[0], ShapeGridOptions::default(), &[1.0, 1.0]).unwrap();
        assert_eq!(curves_ab.len(), curves_ba.len());
        for ca in &curves_ab {
            let m = 1 - ca.member;
            let cb = curves_ba
                .iter()
                .find(|c| c.member == m && c.feature_index == ca.feature_index)
                .unwrap();
            for (x, y) in ca.contributions.iter().zip(&cb.contributions) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn single_member_single_feature_bundle() {
        let a = plain_model(23, 4, 3);
        let curves = extract_all(&[&a], &[2], &[0.05, 0.95], &[0, 1], ShapeGridOptions { points: 11, expansion: 0.0 }, &[1.0]).unwrap();
        assert_eq!(curves.len(), 4);
        let manifest = manifest_for(&curves);
        assert_eq!(manifest.members, 1);
        assert_eq!(manifest.grid_points, 11);
        let mut csv = Vec::new();
        write_curves_csv(&curves, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 4 * 11);
    }

    #[test]
    fn out_of_range_grid_is_annotated_not_rejected() {
        let mut params = plain_model(29, 4, 3);
        params.scaler.stats[0].min = -1.0;
        params.scaler.stats[0].max = 1.0;
        let curve = extract_shape(&params, 0, 0.5, 0, &[-2.0, 0.0, 2.0], 1.0, 0).unwrap();
        assert!(curve.out_of_range);
        let inside = extract_shape(&params, 0, 0.5, 0, &[-0.5, 0.5], 1.0, 0).unwrap();
        assert!(!inside.out_of_range);
    }
}
