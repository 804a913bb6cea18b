use serde::{Deserialize, Serialize};

use super::common::{
    denorm_backward, denormalize_outputs, head_space_targets, input_affine_grads, preprocess,
    unconditional_quantiles, FeatureScaler, InstanceStats, LayoutIndex, Mode,
};
use super::revin::RevinLayer;
use super::{ModelError, QuantileNet};
use crate::dataset::{FeatureLayout, WindowedDataset};
use crate::forecast::percentile_levels;
use crate::numkit::{relu, sample_normal, Matrix, RngState};

/// Dense quantile-regression baseline: two ReLU hidden layers with dropout
/// mapping the conditioning vector straight to every (hour, level) quantile.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QrdnnConfig {
    /// Width of both hidden layers.
    pub n_units: usize,
    pub dropout: f64,
    pub revin: bool,
    pub revin_epsilon: f64,
    pub sort_quantiles: bool,
    pub quantile_levels: Vec<f64>,
    pub init_output_std: f64,
}

impl Default for QrdnnConfig {
    fn default() -> Self {
        Self {
            n_units: 64,
            dropout: 0.1,
            revin: true,
            revin_epsilon: 1e-8,
            sort_quantiles: true,
            quantile_levels: percentile_levels(),
            init_output_std: 0.05,
        }
    }
}

impl QrdnnConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.n_units == 0 {
            return Err(ModelError::InvalidConfig("n_units must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.quantile_levels.is_empty()
            || self.quantile_levels.windows(2).any(|w| w[0] >= w[1])
            || self.quantile_levels.iter().any(|&g| g <= 0.0 || g >= 1.0)
        {
            return Err(ModelError::InvalidConfig(
                "quantile levels must be strictly increasing inside (0,1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QrdnnParams {
    pub config: QrdnnConfig,
    pub layout: FeatureLayout,
    pub scaler: FeatureScaler,
    pub horizon: usize,
    /// n_units x n_features.
    pub w1: Matrix,
    /// 1 x n_units.
    pub b1: Matrix,
    /// n_units x n_units.
    pub w2: Matrix,
    /// 1 x n_units.
    pub b2: Matrix,
    /// (horizon * levels) x n_units.
    pub w3: Matrix,
    /// 1 x (horizon * levels).
    pub b3: Matrix,
    pub revin: RevinLayer,
}

pub struct QrdnnCache {
    pub(crate) xhat: Matrix,
    pub(crate) stats: Option<InstanceStats>,
    pub(crate) p1: Matrix,
    pub(crate) h1: Matrix,
    pub(crate) mask1: Option<Matrix>,
    pub(crate) p2: Matrix,
    pub(crate) h2: Matrix,
    pub(crate) mask2: Option<Matrix>,
    pub(crate) qnorm: Matrix,
    pub(crate) mode: Mode,
}

impl QrdnnParams {
    pub fn init(
        config: QrdnnConfig,
        dataset: &WindowedDataset,
        rng: &mut RngState,
    ) -> Result<Self, ModelError> {
        let mut params =
            Self::init_with_layout(config, dataset.layout.clone(), dataset.horizon, rng)?;
        params.scaler = FeatureScaler::fit(&dataset.inputs, &dataset.layout, params.config.revin);
        let anchored = head_space_targets(
            &dataset.inputs,
            &dataset.targets,
            &dataset.layout,
            &params.revin,
        );
        params.b3 =
            unconditional_quantiles(&anchored, dataset.horizon, &params.config.quantile_levels);
        Ok(params)
    }

    pub fn init_with_layout(
        config: QrdnnConfig,
        layout: FeatureLayout,
        horizon: usize,
        rng: &mut RngState,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if horizon == 0 {
            return Err(ModelError::InvalidConfig("horizon must be positive".into()));
        }
        let n_f = layout.len();
        if n_f == 0 {
            return Err(ModelError::InvalidConfig("layout has no features".into()));
        }
        if config.revin && layout.price_lag_columns().is_empty() {
            return Err(ModelError::InvalidConfig(
                "RevIN requires at least one price-lag column".into(),
            ));
        }
        let hg = horizon * config.quantile_levels.len();
        let n_u = config.n_units;
        let w1 = sample_normal(rng, n_u, n_f, 0.0, (2.0 / n_f as f64).sqrt())?;
        let w2 = sample_normal(rng, n_u, n_u, 0.0, (2.0 / n_u as f64).sqrt())?;
        let w3 = sample_normal(rng, hg, n_u, 0.0, config.init_output_std)?;
        let revin = RevinLayer::new(config.revin, config.revin_epsilon);
        Ok(Self {
            scaler: FeatureScaler::identity(n_f),
            b1: Matrix::zeros(1, n_u),
            b2: Matrix::zeros(1, n_u),
            b3: Matrix::zeros(1, hg),
            config,
            layout,
            horizon,
            w1,
            w2,
            w3,
            revin,
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.horizon * self.config.quantile_levels.len()
    }

    fn dropout_mask(
        &self,
        rows: usize,
        cols: usize,
        rng: &mut RngState,
    ) -> Matrix {
        let keep = 1.0 - self.config.dropout;
        let mut mask = Matrix::zeros(rows, cols);
        for v in mask.as_mut_slice() {
            *v = if rng.uniform() < keep { 1.0 } else { 0.0 };
        }
        mask
    }
}

impl QuantileNet for QrdnnParams {
    type Cache = QrdnnCache;

    fn n_features(&self) -> usize {
        self.layout.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn levels(&self) -> &[f64] {
        &self.config.quantile_levels
    }

    fn sort_enabled(&self) -> bool {
        self.config.sort_quantiles
    }

    fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    fn tensor_names(&self) -> Vec<&'static str> {
        let mut names = vec!["dense.w1", "dense.b1", "dense.w2", "dense.b2", "dense.w3", "dense.b3"];
        if self.revin.enabled {
            names.push("revin.scale");
            names.push("revin.shift");
        }
        names
    }

    fn tensors(&self) -> Vec<&Matrix> {
        let mut t = vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3];
        if self.revin.enabled {
            t.push(&self.revin.scale);
            t.push(&self.revin.shift);
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t: Vec<&mut Matrix> = vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ];
        if self.revin.enabled {
            t.push(&mut self.revin.scale);
            t.push(&mut self.revin.shift);
        }
        t
    }

    fn forward(
        &self,
        x: &Matrix,
        mode: Mode,
        mut rng: Option<&mut RngState>,
    ) -> Result<(Matrix, QrdnnCache), ModelError> {
        let (xhat, stats) = preprocess(x, &self.layout, &self.scaler, &self.revin)?;

        let mut p1 = xhat.matmul_nt(&self.w1)?;
        p1.add_row_broadcast(&self.b1)?;
        let h1_pre = relu(&p1);
        let (h1, mask1) = if mode == Mode::Train && self.config.dropout > 0.0 {
            let rng = rng.as_deref_mut().ok_or_else(|| {
                ModelError::InvalidConfig("train-mode forward with dropout needs an rng".into())
            })?;
            let keep = 1.0 - self.config.dropout;
            let mask = self.dropout_mask(h1_pre.rows(), h1_pre.cols(), rng);
            (h1_pre.zip_map(&mask, |a, m| a * m / keep)?, Some(mask))
        } else {
            (h1_pre, None)
        };

        let mut p2 = h1.matmul_nt(&self.w2)?;
        p2.add_row_broadcast(&self.b2)?;
        let h2_pre = relu(&p2);
        let (h2, mask2) = if mode == Mode::Train && self.config.dropout > 0.0 {
            let rng = rng.ok_or_else(|| {
                ModelError::InvalidConfig("train-mode forward with dropout needs an rng".into())
            })?;
            let keep = 1.0 - self.config.dropout;
            let mask = self.dropout_mask(h2_pre.rows(), h2_pre.cols(), rng);
            (h2_pre.zip_map(&mask, |a, m| a * m / keep)?, Some(mask))
        } else {
            (h2_pre, None)
        };

        let mut qnorm = h2.matmul_nt(&self.w3)?;
        qnorm.add_row_broadcast(&self.b3)?;

        let output = match &stats {
            Some(s) => denormalize_outputs(&qnorm, s, &self.revin, self.levels().len()),
            None => qnorm.clone(),
        };
        let cache = QrdnnCache { xhat, stats, p1, h1, mask1, p2, h2, mask2, qnorm, mode };
        Ok((output, cache))
    }

    fn backward(&self, cache: &QrdnnCache, grad_out: &Matrix) -> Result<Vec<Matrix>, ModelError> {
        if cache.mode != Mode::Train {
            return Err(ModelError::StaleCache(
                "backward requires a cache from a train-mode forward".into(),
            ));
        }
        if grad_out.shape() != cache.qnorm.shape() {
            return Err(ModelError::StaleCache(format!(
                "upstream gradient is {}x{}, cached outputs are {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                cache.qnorm.rows(),
                cache.qnorm.cols()
            )));
        }
        let levels = self.levels().len();
        let keep = 1.0 - self.config.dropout;
        let index = LayoutIndex::new(&self.layout);

        let (gnorm, mut d_scale, mut d_shift) = match &cache.stats {
            Some(stats) => denorm_backward(grad_out, &cache.qnorm, stats, &self.revin, levels),
            None => (
                grad_out.clone(),
                Matrix::zeros(1, self.revin.scale.cols()),
                Matrix::zeros(1, self.revin.shift.cols()),
            ),
        };

        let d_b3 = gnorm.col_sums();
        let d_w3 = gnorm.matmul_tn(&cache.h2)?;
        let d_h2 = gnorm.matmul(&self.w3)?;

        let d_h2pre = match &cache.mask2 {
            Some(m) => d_h2.zip_map(m, |g, mk| g * mk / keep)?,
            None => d_h2,
        };
        let d_p2 = d_h2pre.zip_map(&cache.p2, |g, pre| if pre > 0.0 { g } else { 0.0 })?;
        let d_b2 = d_p2.col_sums();
        let d_w2 = d_p2.matmul_tn(&cache.h1)?;
        let d_h1 = d_p2.matmul(&self.w2)?;

        let d_h1pre = match &cache.mask1 {
            Some(m) => d_h1.zip_map(m, |g, mk| g * mk / keep)?,
            None => d_h1,
        };
        let d_p1 = d_h1pre.zip_map(&cache.p1, |g, pre| if pre > 0.0 { g } else { 0.0 })?;
        let d_b1 = d_p1.col_sums();
        let d_w1 = d_p1.matmul_tn(&cache.xhat)?;

        if self.revin.enabled {
            let dxhat = d_p1.matmul(&self.w1)?;
            input_affine_grads(&dxhat, &cache.xhat, &index, &self.revin, &mut d_scale, &mut d_shift);
        }

        let mut grads = vec![d_w1, d_b1, d_w2, d_b2, d_w3, d_b3];
        if self.revin.enabled {
            grads.push(d_scale);
            grads.push(d_shift);
        }
        Ok(grads)
    }
}
