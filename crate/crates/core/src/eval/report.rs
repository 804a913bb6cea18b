use std::io::Write;

use serde::Serialize;

use super::dm::dm_test;
use super::kupiec::kupiec_test;
use super::metrics::{calibration_curve, crps_pinball, interval_violations, mae, picp};
use super::EvalError;
use crate::forecast::QuantileForecast;
use crate::numkit::Matrix;

#[derive(Clone, Debug, Serialize)]
pub struct IntervalReport {
    pub level_pct: f64,
    pub picp_pct: f64,
    pub violations: usize,
    pub n: usize,
    pub kupiec_lr: f64,
    pub kupiec_reject: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationPoint {
    pub gamma: f64,
    pub empirical: f64,
}

/// Per-model metric bundle over a test span.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub days: usize,
    pub horizon: usize,
    pub mae: f64,
    pub crps: f64,
    pub intervals: Vec<IntervalReport>,
    pub calibration: Vec<CalibrationPoint>,
}

/// Compute the full metric bundle: MAE, CRPS, and per-level coverage with
/// Kupiec outcomes at significance `alpha`.
pub fn evaluate(
    model: &str,
    targets: &Matrix,
    forecast: &QuantileForecast,
    interval_levels_pct: &[f64],
    alpha: f64,
) -> Result<EvalReport, EvalError> {
    let mut intervals = Vec::with_capacity(interval_levels_pct.len());
    for &level in interval_levels_pct {
        let (outside, n) = interval_violations(targets, forecast, level)?;
        let kupiec = kupiec_test(outside, n, 1.0 - level / 100.0, alpha)?;
        intervals.push(IntervalReport {
            level_pct: level,
            picp_pct: picp(targets, forecast, level)?,
            violations: outside,
            n,
            kupiec_lr: kupiec.lr,
            kupiec_reject: kupiec.reject,
        });
    }
    Ok(EvalReport {
        model: model.to_string(),
        days: forecast.days(),
        horizon: forecast.horizon(),
        mae: mae(targets, forecast)?,
        crps: crps_pinball(targets, forecast)?,
        intervals,
        calibration: calibration_curve(targets, forecast)?
            .into_iter()
            .map(|(gamma, empirical)| CalibrationPoint { gamma, empirical })
            .collect(),
    })
}

/// Flat one-row-per-model CSV with the headline metrics and per-level
/// coverage columns.
pub fn write_reports_csv(reports: &[EvalReport], mut w: impl Write) -> std::io::Result<()> {
    let levels: Vec<f64> = reports
        .first()
        .map(|r| r.intervals.iter().map(|i| i.level_pct).collect())
        .unwrap_or_default();
    write!(w, "model,days,mae,crps")?;
    for level in &levels {
        write!(w, ",picp_{level},violations_{level},kupiec_lr_{level},kupiec_reject_{level}")?;
    }
    writeln!(w)?;
    for r in reports {
        write!(w, "{},{},{},{}", r.model, r.days, r.mae, r.crps)?;
        for i in &r.intervals {
            write!(w, ",{},{},{},{}", i.picp_pct, i.violations, i.kupiec_lr, i.kupiec_reject)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Per-curve calibration CSV (model, gamma, empirical frequency).
pub fn write_calibration_csv(reports: &[EvalReport], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "model,gamma,empirical")?;
    for r in reports {
        for p in &r.calibration {
            writeln!(w, "{},{},{}", r.model, p.gamma, p.empirical)?;
        }
    }
    Ok(())
}

/// Pairwise Diebold-Mariano comparisons over named per-day loss series, in
/// long CSV form ready for heatmap plotting.
pub fn write_dm_matrix_csv(
    names: &[String],
    per_day_losses: &[Vec<f64>],
    mut w: impl Write,
) -> Result<(), EvalError> {
    if names.len() != per_day_losses.len() {
        return Err(EvalError::InvalidParameter(
            "one loss series is required per model name".into(),
        ));
    }
    writeln!(w, "model_a,model_b,statistic,p_value").map_err(EvalError::Io)?;
    for (i, a) in names.iter().enumerate() {
        for (j, b) in names.iter().enumerate() {
            if i == j {
                continue;
            }
            let r = dm_test(&per_day_losses[i], &per_day_losses[j])?;
            writeln!(w, "{a},{b},{},{}", r.statistic, r.p_value).map_err(EvalError::Io)?;
        }
    }
    Ok(())
}
