use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::frame::{DataError, TimeSeriesFrame, HOURS_PER_DAY};
use crate::forecast::QuantileForecast;
use crate::numkit::{norm_ppf, RngState};

/// Generator for synthetic hourly price data with known conditional
/// quantiles: price = base(h) + a * load + b * wind + sigma(h) * eps with
/// standard normal eps, so the true gamma-quantile given the realized
/// exogenous values is det(d, h) + sigma(h) * ppf(gamma), in closed form.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    /// Load coefficient (price units per load unit).
    pub a: f64,
    /// Wind coefficient.
    pub b: f64,
    /// Per-hour noise standard deviation, 24 entries.
    pub sigma: Vec<f64>,
    pub base_level: f64,
    pub base_amplitude: f64,
    pub start_date: NaiveDate,
    pub load_mean: f64,
    pub load_daily_amplitude: f64,
    pub load_noise_std: f64,
    pub wind_mean: f64,
    pub wind_noise_std: f64,
    pub solar_peak: f64,
    pub solar_noise_std: f64,
    /// Hours whose load forecast carries random variation; the rest follow
    /// the deterministic daily profile. `None` means every hour.
    pub load_noise_hours: Option<Vec<usize>>,
    /// As above for the wind forecast.
    pub wind_noise_hours: Option<Vec<usize>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            a: 0.05,
            b: -0.04,
            sigma: default_sigma(),
            base_level: 60.0,
            base_amplitude: 12.0,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            load_mean: 500.0,
            load_daily_amplitude: 120.0,
            load_noise_std: 60.0,
            wind_mean: 250.0,
            wind_noise_std: 90.0,
            solar_peak: 180.0,
            solar_noise_std: 10.0,
            load_noise_hours: None,
            wind_noise_hours: None,
        }
    }
}

fn default_sigma() -> Vec<f64> {
    // Mild heteroskedasticity peaking in the evening hours.
    (0..HOURS_PER_DAY)
        .map(|h| 4.0 + 2.0 * (2.0 * std::f64::consts::PI * (h as f64 - 19.0) / 24.0).cos())
        .collect()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.sigma.len() != HOURS_PER_DAY {
            return Err(DataError::InvalidConfig(format!(
                "sigma must have 24 entries, got {}",
                self.sigma.len()
            )));
        }
        if self.sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(DataError::InvalidConfig("sigma entries must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn base(&self, hour: usize) -> f64 {
        self.base_level
            + self.base_amplitude * (2.0 * std::f64::consts::PI * hour as f64 / 24.0).sin()
    }

    /// Deterministic price component given realized exogenous values.
    pub fn deterministic(&self, load: f64, wind: f64, hour: usize) -> f64 {
        self.base(hour) + self.a * load + self.b * wind
    }
}

/// Generate an hourly frame of `n_days` days from the spec.
pub fn synth_generate(spec: &SynthSpec, n_days: usize) -> Result<TimeSeriesFrame, DataError> {
    spec.validate()?;
    if n_days < 30 {
        return Err(DataError::InvalidConfig(format!(
            "synthetic frames need n_days >= 30, got {n_days}"
        )));
    }
    let mut rng = RngState::seed_from(spec.seed);
    let load_active = |h: usize| spec.load_noise_hours.as_ref().is_none_or(|hs| hs.contains(&h));
    let wind_active = |h: usize| spec.wind_noise_hours.as_ref().is_none_or(|hs| hs.contains(&h));
    let n = n_days * HOURS_PER_DAY;
    let mut price = Vec::with_capacity(n);
    let mut load = Vec::with_capacity(n);
    let mut wind = Vec::with_capacity(n);
    let mut solar = Vec::with_capacity(n);
    for _d in 0..n_days {
        for h in 0..HOURS_PER_DAY {
            let hf = h as f64;
            let load_noise = if load_active(h) { spec.load_noise_std * rng.normal() } else { 0.0 };
            let wind_noise = if wind_active(h) { spec.wind_noise_std * rng.normal() } else { 0.0 };
            let l = spec.load_mean
                + spec.load_daily_amplitude * (2.0 * std::f64::consts::PI * (hf - 6.0) / 24.0).sin()
                + load_noise;
            let w = (spec.wind_mean + wind_noise).max(0.0);
            let daylight = (std::f64::consts::PI * (hf - 6.0) / 12.0).sin().max(0.0);
            let s = (spec.solar_peak * daylight + spec.solar_noise_std * rng.normal()).max(0.0);
            let eps = rng.normal();
            price.push(spec.deterministic(l, w, h) + spec.sigma[h] * eps);
            load.push(l);
            wind.push(w);
            solar.push(s);
        }
    }
    TimeSeriesFrame::from_parts(
        spec.start_date.and_hms_opt(0, 0, 0).unwrap(),
        price,
        vec![
            ("load_fcst".to_string(), load),
            ("wind_fcst".to_string(), wind),
            ("solar_fcst".to_string(), solar),
        ],
    )
}

/// Recompute the deterministic component of every hour from the frame's
/// realized exogenous values.
pub fn deterministic_frame(spec: &SynthSpec, frame: &TimeSeriesFrame) -> Result<Vec<f64>, DataError> {
    let load = frame
        .exogenous("load_fcst")
        .ok_or_else(|| DataError::Schema("frame lacks load_fcst".into()))?;
    let wind = frame
        .exogenous("wind_fcst")
        .ok_or_else(|| DataError::Schema("frame lacks wind_fcst".into()))?;
    Ok((0..frame.n_hours())
        .map(|t| spec.deterministic(load[t], wind[t], t % HOURS_PER_DAY))
        .collect())
}

/// Analytic conditional quantiles for days [from_day, from_day + n_days).
pub fn true_quantiles(
    spec: &SynthSpec,
    frame: &TimeSeriesFrame,
    from_day: usize,
    n_days: usize,
    levels: &[f64],
) -> Result<QuantileForecast, DataError> {
    spec.validate()?;
    if from_day + n_days > frame.n_days() {
        return Err(DataError::InvalidConfig(format!(
            "quantile range [{from_day}, {}) exceeds frame of {} days",
            from_day + n_days,
            frame.n_days()
        )));
    }
    let det = deterministic_frame(spec, frame)?;
    let ppf: Vec<f64> = levels.iter().map(|&g| norm_ppf(g)).collect();
    let mut data = crate::numkit::Matrix::zeros(n_days, HOURS_PER_DAY * levels.len());
    for d in 0..n_days {
        for h in 0..HOURS_PER_DAY {
            let base = det[(from_day + d) * HOURS_PER_DAY + h];
            for (qi, z) in ppf.iter().enumerate() {
                data.set(d, h * levels.len() + qi, base + spec.sigma[h] * z);
            }
        }
    }
    QuantileForecast::new(
        levels.to_vec(),
        HOURS_PER_DAY,
        data,
        Some(frame.day_date(from_day)),
    )
    .map_err(|e| DataError::InvalidConfig(e.to_string()))
}
