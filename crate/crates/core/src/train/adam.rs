use super::TrainError;
use crate::model::QuantileNet;
use crate::numkit::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates, one pair per model tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new<M: QuantileNet>(model: &M) -> Self {
        let zeros: Vec<Matrix> = model
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over every tensor of the model.
pub fn adam_step<M: QuantileNet>(
    model: &mut M,
    grads: &[Matrix],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<(), TrainError> {
    let names = model.tensor_names();
    if grads.len() != names.len() || grads.len() != state.m.len() {
        return Err(TrainError::InvalidConfig(format!(
            "adam: {} gradients for {} tensors",
            grads.len(),
            names.len()
        )));
    }
    for (grad, name) in grads.iter().zip(&names) {
        if !grad.all_finite() {
            return Err(TrainError::NonFiniteGradient { tensor: (*name).to_string() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let m_correction = 1.0 - BETA1.powi(t);
    let v_correction = 1.0 - BETA2.powi(t);

    let mut tensors = model.tensors_mut();
    for (((tensor, grad), m), v) in tensors
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if tensor.shape() != grad.shape() {
            return Err(TrainError::InvalidConfig(
                "adam: gradient shape does not match tensor".to_string(),
            ));
        }
        let p = tensor.as_mut_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        for i in 0..p.len() {
            let g = grad.as_slice()[i];
            ms[i] = BETA1 * ms[i] + (1.0 - BETA1) * g;
            vs[i] = BETA2 * vs[i] + (1.0 - BETA2) * g * g;
            let m_hat = ms[i] / m_correction;
            let v_hat = vs[i] / v_correction;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
