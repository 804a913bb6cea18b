//! Shape-function recovery on synthetic data with known linear effects.

use qnbm_core::dataset::{build_windows, synth_generate, SynthSpec, WindowConfig};
use qnbm_core::interpret::{extract_all, extract_shape, ShapeGridOptions};
use qnbm_core::model::{AnyModel, QnbmConfig, QnbmParams};
use qnbm_core::train::{fit, ModelSpec, TrainConfig, ValidationScheme};

fn fitted_noiseless_model() -> (QnbmParams, f64) {
    let true_slope = 0.08;
    let spec = SynthSpec {
        seed: 21,
        a: true_slope,
        b: 0.0,
        sigma: vec![0.0; 24],
        ..SynthSpec::default()
    };
    let frame = synth_generate(&spec, 250).unwrap();
    let window = WindowConfig {
        price_lag_days: vec![1],
        exogenous: Some(vec!["load_fcst".into()]),
        ..WindowConfig::default()
    };
    let dataset = build_windows(&frame, &window).unwrap();
    let model_spec = ModelSpec::Qnbm(QnbmConfig {
        n_units: 16,
        n_basis: 8,
        rank_shape: Some(4),
        rank_head: None,
        revin: false,
        quantile_levels: vec![0.1, 0.5, 0.9],
        ..QnbmConfig::default()
    });
    let cfg = TrainConfig {
        learning_rate: 5e-2,
        dropout_rate: 0.0,
        max_epochs: 150,
        patience: 150,
        batch_size: 8,
        sub_block: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let result = fit(&model_spec, &dataset, &cfg, ValidationScheme::RandomSubsample).unwrap();
    match result.model {
        AnyModel::Qnbm(p) => (p, true_slope),
        AnyModel::Qrdnn(_) => unreachable!(),
    }
}

fn central_slope(params: &QnbmParams, feature: usize, gamma: f64, hour: usize) -> f64 {
    let stats = &params.scaler.stats[feature];
    let span = stats.max - stats.min;
    let (lo, hi) = (stats.min + 0.1 * span, stats.max - 0.1 * span);
    let grid: Vec<f64> = (0..41).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
    let curve = extract_shape(params, feature, gamma, hour, &grid, 1.0, 0).unwrap();
    let n = grid.len() as f64;
    let mx = grid.iter().sum::<f64>() / n;
    let my = curve.contributions.iter().sum::<f64>() / n;
    let sxy: f64 = grid.iter().zip(&curve.contributions).map(|(x, v)| (x - mx) * (v - my)).sum();
    let sxx: f64 = grid.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn noiseless_linear_load_effect_slope_recovered_within_ten_percent() {
    let (params, true_slope) = fitted_noiseless_model();
    for hour in [6usize, 12, 20] {
        let feature = params
            .layout
            .index_of(&format!("load_fcst_h{hour:02}"))
            .unwrap();
        let slope = central_slope(&params, feature, 0.5, hour);
        let err = (slope - true_slope).abs() / true_slope;
        assert!(err < 0.10, "hour {hour}: slope {slope} vs {true_slope} ({:.1}%)", 100.0 * err);
    }
}

#[test]
fn price_lag_columns_carry_no_effect_in_this_generator() {
    // Lagged prices are conditionally irrelevant here, so their fitted
    // contributions stay an order of magnitude below the load effect.
    let (params, true_slope) = fitted_noiseless_model();
    let lag_feature = params.layout.index_of("price_lag1_h12").unwrap();
    let slope = central_slope(&params, lag_feature, 0.5, 12).abs();
    assert!(slope < 0.3 * true_slope, "spurious lag slope {slope}");
}

#[test]
fn bundle_extraction_covers_requested_cross_product() {
    let (params, _) = fitted_noiseless_model();
    let feature = params.layout.index_of("load_fcst_h12").unwrap();
    let curves = extract_all(
        &[&params],
        &[feature],
        &[0.1, 0.5, 0.9],
        &[0, 12, 23],
        ShapeGridOptions { points: 51, expansion: 0.1 },
        &[1.0],
    )
    .unwrap();
    assert_eq!(curves.len(), 9);
    assert!(curves.iter().all(|c| c.xs.len() == 51));
    // The widened grid extends past the observed training range.
    assert!(curves.iter().all(|c| c.out_of_range));
}
