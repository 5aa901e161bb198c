//! Dense `f64` tensors, a reverse-mode tape over exactly the operations the
//! model needs, and a central-difference gradient checker.

mod gradcheck;
mod tape;
mod tensor;

use std::sync::atomic::{AtomicU64, Ordering};

pub use gradcheck::{grad_check, GradCheck};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times [`cross_entropy`] has clamped a probability in this process.
pub fn cross_entropy_clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

/// `-ln probs[label]`, with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs
        .get(label)
        .ok_or_else(|| Error::InvalidArgument(format!("label {label} out of range for {} classes", probs.len())))?;
    if p < PROB_FLOOR {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        return Ok(-PROB_FLOOR.ln());
    }
    // ln(1) is exactly 0; avoid returning -0.0
    Ok((-p.ln()).max(0.0))
}

/// Row-wise softmax without recording anything.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    tape::softmax_in_place(&mut out);
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
