use serde::{Deserialize, Serialize};

use super::common::{
    denorm_backward, denormalize_outputs, head_space_targets, input_affine_grads, preprocess,
    unconditional_quantiles, FeatureScaler, InstanceStats, LayoutIndex, Mode,
};
use super::factorized::Projection;
use super::revin::RevinLayer;
use super::{ModelError, QuantileNet};
use crate::dataset::{FeatureLayout, WindowedDataset};
use crate::forecast::percentile_levels;
use crate::numkit::{relu, sample_normal, Matrix, RngState};

/// Architecture of a quantile neural basis model.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QnbmConfig {
    /// Width of the shared net's first hidden layer (units per scalar input).
    pub n_units: usize,
    /// Number of shared basis functions.
    pub n_basis: usize,
    /// Rank of the shape projection; `None` keeps it dense.
    pub rank_shape: Option<usize>,
    /// Rank of the quantile head; `None` keeps it dense.
    pub rank_head: Option<usize>,
    /// Dropout rate on the basis outputs, inverted scaling.
    pub dropout: f64,
    pub revin: bool,
    pub revin_epsilon: f64,
    /// Sort each (day, hour) quantile vector after inference.
    pub sort_quantiles: bool,
    pub quantile_levels: Vec<f64>,
    /// Initialization spread of the projection factors, keeping the
    /// effective matrices near zero so training starts at climatology.
    pub init_factor_std: f64,
}

impl Default for QnbmConfig {
    fn default() -> Self {
        Self {
            n_units: 64,
            n_basis: 32,
            rank_shape: Some(16),
            rank_head: Some(16),
            dropout: 0.1,
            revin: true,
            revin_epsilon: 1e-8,
            sort_quantiles: true,
            quantile_levels: percentile_levels(),
            init_factor_std: 0.05,
        }
    }
}

impl QnbmConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.n_units == 0 || self.n_basis == 0 {
            return Err(ModelError::InvalidConfig("n_units and n_basis must be positive".into()));
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

/// All trainable tensors of the QNBM plus the frozen preprocessing state.
///
/// The shared basis net is the two-layer scalar map
/// `z_k(x) = relu(sum_j w2[k,j] * relu(w1[j] * x) + b2[k])`; shape functions
/// combine the bases through the columns of the shape projection, and the
/// head turns shape outputs into one value per (hour, level) plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct QnbmParams {
    pub config: QnbmConfig,
    pub layout: FeatureLayout,
    pub scaler: FeatureScaler,
    pub horizon: usize,
    /// n_units x 1 first-layer weights (no first-layer bias).
    pub w1: Matrix,
    /// n_basis x n_units second-layer weights.
    pub w2: Matrix,
    /// 1 x n_basis second-layer bias.
    pub b2: Matrix,
    /// n_basis x n_features shape projection.
    pub shape_proj: Projection,
    /// (horizon * levels) x n_features quantile head.
    pub head_proj: Projection,
    /// 1 x (horizon * levels) output bias.
    pub beta: Matrix,
    pub revin: RevinLayer,
}

pub struct QnbmCache {
    pub(crate) xhat: Matrix,
    pub(crate) stats: Option<InstanceStats>,
    pub(crate) xflat: Matrix,
    pub(crate) p1: Matrix,
    pub(crate) u: Matrix,
    pub(crate) p2: Matrix,
    pub(crate) z: Matrix,
    pub(crate) mask: Option<Matrix>,
    pub(crate) f: Matrix,
    pub(crate) qnorm: Matrix,
    pub(crate) weff_t: Matrix,
    pub(crate) veff: Matrix,
    pub(crate) mode: Mode,
}

impl QnbmParams {
    /// Initialize for a training dataset: fits the feature scaler and anchors
    /// the output bias at the unconditional per-(hour, level) quantiles.
    pub fn init(
        config: QnbmConfig,
        dataset: &WindowedDataset,
        rng: &mut RngState,
    ) -> Result<Self, ModelError> {
        let mut params = Self::init_with_layout(
            config,
            dataset.layout.clone(),
            dataset.horizon,
            rng,
        )?;
        params.scaler = FeatureScaler::fit(&dataset.inputs, &dataset.layout, params.config.revin);
        let anchored = head_space_targets(
            &dataset.inputs,
            &dataset.targets,
            &dataset.layout,
            &params.revin,
        );
        params.beta =
            unconditional_quantiles(&anchored, dataset.horizon, &params.config.quantile_levels);
        Ok(params)
    }

    /// Initialize with an identity scaler and zero output bias.
    pub fn init_with_layout(
        config: QnbmConfig,
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
        let w1 = sample_normal(rng, config.n_units, 1, 0.0, (2.0f64).sqrt())?;
        let w2 = sample_normal(rng, config.n_basis, config.n_units, 0.0, (2.0 / config.n_units as f64).sqrt())?;
        let b2 = Matrix::zeros(1, config.n_basis);
        // The shape projection starts at unit contraction scale so shape
        // outputs are O(1) from the first step; only the head starts near
        // zero, anchoring initial forecasts at the climatological bias.
        // Starting both projections tiny stalls learning: gradients then
        // flow through a product of two near-zero matrices.
        let shape_std = match config.rank_shape {
            None => (1.0 / config.n_basis as f64).sqrt(),
            Some(r) => (1.0 / (r * config.n_basis) as f64).powf(0.25),
        };
        let shape_proj = Projection::init(config.n_basis, n_f, config.rank_shape, shape_std, rng)?;
        let head_proj = Projection::init(hg, n_f, config.rank_head, config.init_factor_std, rng)?;
        let revin = RevinLayer::new(config.revin, config.revin_epsilon);
        Ok(Self {
            scaler: FeatureScaler::identity(n_f),
            beta: Matrix::zeros(1, hg),
            config,
            layout,
            horizon,
            w1,
            w2,
            b2,
            shape_proj,
            head_proj,
            revin,
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.horizon * self.config.quantile_levels.len()
    }

    /// Shape-function values f_i(x_i) for each row and feature: the
    /// basis-net output combined through the shape projection, evaluated
    /// without dropout.
    pub fn shape_values(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        let (xhat, _) = preprocess(x, &self.layout, &self.scaler, &self.revin)?;
        Ok(self.shape_values_normalized(&xhat))
    }

    /// As [`QnbmParams::shape_values`] on an already-normalized design matrix.
    pub(crate) fn shape_values_normalized(&self, xhat: &Matrix) -> Matrix {
        let n = xhat.rows();
        let n_f = self.layout.len();
        let xflat = xhat.clone().reshape(n * n_f, 1).expect("row-major reshape");
        let u = relu(&xflat.matmul_nt(&self.w1).expect("shapes agree"));
        let mut p2 = u.matmul_nt(&self.w2).expect("shapes agree");
        p2.add_row_broadcast(&self.b2).expect("bias row");
        let z = relu(&p2);
        let weff_t = self.shape_proj.effective().transpose();
        let mut f = Matrix::zeros(n, n_f);
        for d in 0..n {
            for i in 0..n_f {
                let zr = z.row(d * n_f + i);
                let wr = weff_t.row(i);
                let mut acc = 0.0;
                for (&a, &b) in zr.iter().zip(wr) {
                    acc += a * b;
                }
                f.set(d, i, acc);
            }
        }
        f
    }

    /// Shape-function value f_i at an already-normalized scalar input,
    /// following the flattened forward pass operation for operation.
    pub fn basis_contribution(&self, feature: usize, normalized: f64) -> f64 {
        let weff_t = self.shape_proj.effective().transpose();
        self.basis_contribution_with(&weff_t, feature, normalized)
    }

    pub(crate) fn basis_contribution_with(
        &self,
        weff_t: &Matrix,
        feature: usize,
        normalized: f64,
    ) -> f64 {
        let n_u = self.config.n_units;
        let n_z = self.config.n_basis;
        let mut f = 0.0;
        let wr = weff_t.row(feature);
        for k in 0..n_z {
            let mut acc = 0.0;
            for j in 0..n_u {
                let u = (normalized * self.w1.get(j, 0)).max(0.0);
                acc += u * self.w2.get(k, j);
            }
            let z = (acc + self.b2.get(0, k)).max(0.0);
            f += z * wr[k];
        }
        f
    }

    /// Map a raw feature value to the normalized design value for column
    /// `col`. Returns `None` for price-lag columns of a RevIN model, whose
    /// transform is instance-dependent.
    pub fn normalize_feature(&self, col: usize, raw: f64) -> Option<f64> {
        if self.revin.enabled && self.layout.kinds()[col].is_price_lag() {
            None
        } else {
            Some(self.scaler.apply(col, raw))
        }
    }

    /// Verify a dataset layout matches the one the model was trained on.
    pub fn check_compatible(&self, layout: &FeatureLayout) -> Result<(), ModelError> {
        if self.layout.fingerprint() != layout.fingerprint() {
            return Err(ModelError::LayoutMismatch {
                model_features: self.layout.len(),
                model_fingerprint: self.layout.fingerprint(),
                data_features: layout.len(),
                data_fingerprint: layout.fingerprint(),
            });
        }
        Ok(())
    }
}

impl QuantileNet for QnbmParams {
    type Cache = QnbmCache;

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
        let mut names = vec!["basis.w1", "basis.w2", "basis.b2"];
        match self.shape_proj {
            Projection::Dense(_) => names.push("shape.w"),
            Projection::Factorized(_) => {
                names.push("shape.a");
                names.push("shape.b");
            }
        }
        match self.head_proj {
            Projection::Dense(_) => names.push("head.v"),
            Projection::Factorized(_) => {
                names.push("head.a");
                names.push("head.b");
            }
        }
        names.push("head.beta");
        if self.revin.enabled {
            names.push("revin.scale");
            names.push("revin.shift");
        }
        names
    }

    fn tensors(&self) -> Vec<&Matrix> {
        let mut t = vec![&self.w1, &self.w2, &self.b2];
        match &self.shape_proj {
            Projection::Dense(m) => t.push(m),
            Projection::Factorized(f) => {
                t.push(&f.a);
                t.push(&f.b);
            }
        }
        match &self.head_proj {
            Projection::Dense(m) => t.push(m),
            Projection::Factorized(f) => {
                t.push(&f.a);
                t.push(&f.b);
            }
        }
        t.push(&self.beta);
        if self.revin.enabled {
            t.push(&self.revin.scale);
            t.push(&self.revin.shift);
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t: Vec<&mut Matrix> = vec![&mut self.w1, &mut self.w2, &mut self.b2];
        match &mut self.shape_proj {
            Projection::Dense(m) => t.push(m),
            Projection::Factorized(f) => {
                t.push(&mut f.a);
                t.push(&mut f.b);
            }
        }
        match &mut self.head_proj {
            Projection::Dense(m) => t.push(m),
            Projection::Factorized(f) => {
                t.push(&mut f.a);
                t.push(&mut f.b);
            }
        }
        t.push(&mut self.beta);
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
        rng: Option<&mut RngState>,
    ) -> Result<(Matrix, QnbmCache), ModelError> {
        let (xhat, stats) = preprocess(x, &self.layout, &self.scaler, &self.revin)?;
        let n = x.rows();
        let n_f = self.layout.len();
        let xflat = xhat.clone().reshape(n * n_f, 1).expect("row-major reshape");

        let p1 = xflat.matmul_nt(&self.w1)?;
        let u = relu(&p1);
        let mut p2 = u.matmul_nt(&self.w2)?;
        p2.add_row_broadcast(&self.b2)?;
        let z_pre = relu(&p2);

        let (z, mask) = if mode == Mode::Train && self.config.dropout > 0.0 {
            let rng = rng.ok_or_else(|| {
                ModelError::InvalidConfig("train-mode forward with dropout needs an rng".into())
            })?;
            let keep = 1.0 - self.config.dropout;
            let mut mask = Matrix::zeros(z_pre.rows(), z_pre.cols());
            for v in mask.as_mut_slice() {
                *v = if rng.uniform() < keep { 1.0 } else { 0.0 };
            }
            let z = z_pre.zip_map(&mask, |a, m| a * m / keep)?;
            (z, Some(mask))
        } else {
            (z_pre, None)
        };

        let weff_t = self.shape_proj.effective().transpose();
        let mut f = Matrix::zeros(n, n_f);
        for d in 0..n {
            for i in 0..n_f {
                let zr = z.row(d * n_f + i);
                let wr = weff_t.row(i);
                let mut acc = 0.0;
                for (&a, &b) in zr.iter().zip(wr) {
                    acc += a * b;
                }
                f.set(d, i, acc);
            }
        }

        let veff = self.head_proj.effective();
        let mut qnorm = f.matmul_nt(&veff)?;
        qnorm.add_row_broadcast(&self.beta)?;

        let output = match &stats {
            Some(s) => denormalize_outputs(&qnorm, s, &self.revin, self.levels().len()),
            None => qnorm.clone(),
        };

        let cache = QnbmCache {
            xhat,
            stats,
            xflat,
            p1,
            u,
            p2,
            z,
            mask,
            f,
            qnorm,
            weff_t,
            veff,
            mode,
        };
        Ok((output, cache))
    }

    fn backward(&self, cache: &QnbmCache, grad_out: &Matrix) -> Result<Vec<Matrix>, ModelError> {
        if cache.mode != Mode::Train {
            return Err(ModelError::StaleCache(
                "backward requires a cache from a train-mode forward".into(),
            ));
        }
        let n = cache.f.rows();
        let n_f = self.layout.len();
        if grad_out.shape() != cache.qnorm.shape() {
            return Err(ModelError::StaleCache(format!(
                "upstream gradient is {}x{}, cached outputs are {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                cache.qnorm.rows(),
                cache.qnorm.cols()
            )));
        }
        if cache.weff_t.shape() != (n_f, self.config.n_basis)
            || cache.veff.shape() != (self.n_outputs(), n_f)
        {
            return Err(ModelError::StaleCache(
                "cached projections do not match the current architecture".into(),
            ));
        }
        let levels = self.levels().len();
        let index = LayoutIndex::new(&self.layout);

        // Output-side RevIN.
        let (gnorm, mut d_scale, mut d_shift) = match &cache.stats {
            Some(stats) => denorm_backward(grad_out, &cache.qnorm, stats, &self.revin, levels),
            None => (
                grad_out.clone(),
                Matrix::zeros(1, self.revin.scale.cols()),
                Matrix::zeros(1, self.revin.shift.cols()),
            ),
        };

        let d_beta = gnorm.col_sums();
        let d_veff = gnorm.matmul_tn(&cache.f)?;
        let d_f = gnorm.matmul(&cache.veff)?;

        // Shape projection and basis outputs.
        let mut d_weff_t = Matrix::zeros(n_f, self.config.n_basis);
        let mut d_z = Matrix::zeros(cache.z.rows(), cache.z.cols());
        for d in 0..n {
            for i in 0..n_f {
                let g = d_f.get(d, i);
                if g == 0.0 {
                    continue;
                }
                let s = d * n_f + i;
                let zr = cache.z.row(s);
                let dwr = d_weff_t.row_mut(i);
                for (dw, &zv) in dwr.iter_mut().zip(zr) {
                    *dw += g * zv;
                }
                let wr = cache.weff_t.row(i);
                let dzr = d_z.row_mut(s);
                for (dz, &wv) in dzr.iter_mut().zip(wr) {
                    *dz = g * wv;
                }
            }
        }
        let d_weff = d_weff_t.transpose();

        // Dropout and second relu.
        let d_zpre = match &cache.mask {
            Some(mask) => {
                let keep = 1.0 - self.config.dropout;
                d_z.zip_map(mask, |g, m| g * m / keep)?
            }
            None => d_z,
        };
        let d_p2 = d_zpre.zip_map(&cache.p2, |g, pre| if pre > 0.0 { g } else { 0.0 })?;

        let d_w2 = d_p2.matmul_tn(&cache.u)?;
        let d_b2 = d_p2.col_sums();
        let d_u = d_p2.matmul(&self.w2)?;

        // First relu and scalar input weights.
        let d_p1 = d_u.zip_map(&cache.p1, |g, pre| if pre > 0.0 { g } else { 0.0 })?;
        let d_w1 = d_p1.matmul_tn(&cache.xflat)?;

        // Input-side RevIN affine gradients flow through d xhat.
        if self.revin.enabled {
            let dxhat_flat = d_p1.matmul(&self.w1)?;
            let dxhat = dxhat_flat.reshape(n, n_f)?;
            input_affine_grads(&dxhat, &cache.xhat, &index, &self.revin, &mut d_scale, &mut d_shift);
        }

        let mut grads = vec![d_w1, d_w2, d_b2];
        match &self.shape_proj {
            Projection::Dense(_) => grads.push(d_weff),
            Projection::Factorized(fm) => {
                let (da, db) = fm.grads(&d_weff);
                grads.push(da);
                grads.push(db);
            }
        }
        match &self.head_proj {
            Projection::Dense(_) => grads.push(d_veff),
            Projection::Factorized(fm) => {
                let (da, db) = fm.grads(&d_veff);
                grads.push(da);
                grads.push(db);
            }
        }
        grads.push(d_beta);
        if self.revin.enabled {
            grads.push(d_scale);
            grads.push(d_shift);
        }
        Ok(grads)
    }
}
