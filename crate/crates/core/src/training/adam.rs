use crate::error::{Error, Result};
use crate::model::{CttsParams, Gradients};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment accumulators, laid out like [`Gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &CttsParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Bias-corrected Adam update of one flat buffer at 1-based step `step`.
pub fn adam_update(values: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], step: u64, lr: f64) -> Result<()> {
    if values.len() != grads.len() || m.len() != values.len() || v.len() != values.len() {
        return Err(Error::Dimension {
            op: "adam",
            left: vec![values.len()],
            right: vec![grads.len()],
        });
    }
    if step == 0 {
        return Err(Error::InvalidArgument("adam step count starts at 1".into()));
    }
    if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {g}")));
    }
    let c1 = 1.0 - BETA1.powi(step as i32);
    let c2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..values.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * grads[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * grads[i] * grads[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}

/// One Adam step over every parameter tensor; increments `state.step`.
pub fn adam_step(params: &mut CttsParams, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if grads.0.len() != tensors.len() || state.m.len() != tensors.len() {
        return Err(Error::Dimension {
            op: "adam",
            left: vec![tensors.len()],
            right: vec![grads.0.len()],
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step += 1;
    for (i, t) in tensors.iter_mut().enumerate() {
        adam_update(
            t.values_mut(),
            &grads.0[i],
            &mut state.m[i],
            &mut state.v[i],
            state.step,
            lr,
        )?;
    }
    Ok(())
}
