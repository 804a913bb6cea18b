use super::EvalError;
use crate::numkit::norm_cdf;

/// Which model's per-day loss is smaller on average.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmDirection {
    FirstSmaller,
    SecondSmaller,
    Equal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    pub direction: DmDirection,
}

/// Diebold-Mariano test on per-period loss differentials d_t = a_t - b_t:
/// statistic = mean(d) / (std(d) / sqrt(n)) against a two-sided standard
/// normal reference. Degenerate variance maps to p = 0 (nonzero mean) or
/// p = 1 (identical losses).
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmResult, EvalError> {
    if loss_a.len() != loss_b.len() {
        return Err(EvalError::InvalidParameter(format!(
            "loss series lengths differ: {} vs {}",
            loss_a.len(),
            loss_b.len()
        )));
    }
    let n = loss_a.len();
    if n < 30 {
        return Err(EvalError::InvalidParameter(format!(
            "Diebold-Mariano needs at least 30 observations, got {n}"
        )));
    }
    let nf = n as f64;
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);

    let direction = if mean < 0.0 {
        DmDirection::FirstSmaller
    } else if mean > 0.0 {
        DmDirection::SecondSmaller
    } else {
        DmDirection::Equal
    };

    if var == 0.0 {
        return Ok(if mean == 0.0 {
            DmResult { statistic: 0.0, p_value: 1.0, direction }
        } else {
            DmResult {
                statistic: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p_value: 0.0,
                direction,
            }
        });
    }

    let statistic = mean / (var.sqrt() / nf.sqrt());
    let p_value = 2.0 * (1.0 - norm_cdf(statistic.abs()));
    Ok(DmResult { statistic, p_value: p_value.clamp(0.0, 1.0), direction })
}
