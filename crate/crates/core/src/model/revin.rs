use crate::dataset::HOURS_PER_DAY;
use crate::numkit::Matrix;

/// Reversible per-instance normalization of the price-lag feature group.
///
/// One (mean, std) pair is computed per input row over its price-lag values;
/// the layer removes that location/scale before the network and restores it
/// on the predicted quantiles, which live in the same price units. The
/// trainable affine is a pair of per-hour-of-day vectors applied after
/// standardization and inverted during output denormalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RevinLayer {
    pub enabled: bool,
    /// 1 x 24 multiplicative affine per hour-of-day.
    pub scale: Matrix,
    /// 1 x 24 additive affine per hour-of-day.
    pub shift: Matrix,
    pub epsilon: f64,
}

impl RevinLayer {
    pub fn new(enabled: bool, epsilon: f64) -> Self {
        Self {
            enabled,
            scale: Matrix::filled(1, HOURS_PER_DAY, 1.0),
            shift: Matrix::zeros(1, HOURS_PER_DAY),
            epsilon,
        }
    }

    /// Instance statistics of one row's price-lag values: mean and the
    /// epsilon-guarded standard deviation sqrt(var + eps), never zero.
    pub fn instance_stats(&self, values: &[f64]) -> (f64, f64) {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, (var + self.epsilon).sqrt())
    }

    #[inline]
    pub fn normalize_value(&self, x: f64, mean: f64, sdev: f64, hour: usize) -> f64 {
        self.scale.get(0, hour) * ((x - mean) / sdev) + self.shift.get(0, hour)
    }

    /// Inverse of [`RevinLayer::normalize_value`]; also maps normalized-space
    /// model outputs for hour `hour` back to price units.
    #[inline]
    pub fn denormalize_value(&self, xn: f64, mean: f64, sdev: f64, hour: usize) -> f64 {
        mean + sdev * (xn - self.shift.get(0, hour)) / self.scale.get(0, hour)
    }

    /// Normalize a price-lag group vector; `hours` gives each position's
    /// hour-of-day for affine indexing.
    pub fn normalize_group(&self, values: &[f64], hours: &[usize]) -> (Vec<f64>, f64, f64) {
        let (mean, sdev) = self.instance_stats(values);
        let out = values
            .iter()
            .zip(hours)
            .map(|(&v, &h)| self.normalize_value(v, mean, sdev, h))
            .collect();
        (out, mean, sdev)
    }

    pub fn denormalize_group(
        &self,
        normalized: &[f64],
        hours: &[usize],
        mean: f64,
        sdev: f64,
    ) -> Vec<f64> {
        normalized
            .iter()
            .zip(hours)
            .map(|(&v, &h)| self.denormalize_value(v, mean, sdev, h))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{sample_normal, RngState};

    fn hours(n: usize) -> Vec<usize> {
        (0..n).map(|i| i % 24).collect()
    }

    #[test]
    fn round_trip_identity() {
        let mut rng = RngState::seed_from(2);
        let mut layer = RevinLayer::new(true, 1e-8);
        layer.scale = sample_normal(&mut rng, 1, 24, 1.0, 0.2).unwrap();
        layer.shift = sample_normal(&mut rng, 1, 24, 0.0, 0.5).unwrap();
        let x: Vec<f64> = sample_normal(&mut rng, 1, 48, 50.0, 20.0).unwrap().into_vec();
        let hs = hours(48);
        let (normed, mean, sdev) = layer.normalize_group(&x, &hs);
        let back = layer.denormalize_group(&normed, &hs, mean, sdev);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_row_normalizes_to_zero_and_restores() {
        let layer = RevinLayer::new(true, 1e-8);
        let x = vec![42.0; 24];
        let hs = hours(24);
        let (normed, mean, sdev) = layer.normalize_group(&x, &hs);
        assert!(normed.iter().all(|v| v.abs() < 1e-12), "{normed:?}");
        assert!(sdev > 0.0);
        let back = layer.denormalize_group(&normed, &hs, mean, sdev);
        for b in back {
            assert!((b - 42.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shifted_copy_has_identical_normalization() {
        let layer = RevinLayer::new(true, 1e-8);
        let mut rng = RngState::seed_from(4);
        let x: Vec<f64> = sample_normal(&mut rng, 1, 48, 10.0, 5.0).unwrap().into_vec();
        let shifted: Vec<f64> = x.iter().map(|v| v + 37.5).collect();
        let hs = hours(48);
        let (na, _, _) = layer.normalize_group(&x, &hs);
        let (nb, _, _) = layer.normalize_group(&shifted, &hs);
        for (a, b) in na.iter().zip(&nb) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
