use chrono::{Datelike, NaiveDate};

use crate::numkit::Matrix;

pub const DOW_SIN: &str = "dow_sin";
pub const DOW_COS: &str = "dow_cos";
pub const AGE: &str = "age";

/// Per-day calendar features: cyclical day-of-week encoding plus a linear
/// series-age column.
///
/// Day-of-week uses angle 2*pi*dow/7 with Monday = 0. The age of row i is
/// (age_start + i) / (age_reference_days - 1): 0 at the start of the
/// reference span, 1 at its end, extrapolating beyond 1 afterwards.
pub fn calendar_features(dates: &[NaiveDate], age_start: usize, age_reference_days: usize) -> Matrix {
    let denom = (age_reference_days.saturating_sub(1)).max(1) as f64;
    let mut out = Matrix::zeros(dates.len(), 3);
    for (i, date) in dates.iter().enumerate() {
        let dow = date.weekday().num_days_from_monday() as f64;
        let angle = 2.0 * std::f64::consts::PI * dow / 7.0;
        out.set(i, 0, angle.sin());
        out.set(i, 1, angle.cos());
        out.set(i, 2, (age_start + i) as f64 / denom);
    }
    out
}
