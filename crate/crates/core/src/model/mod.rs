//! The CNN-Transformer hybrid.
//!
//! Pipeline per window: volatility-selected convolution, sinusoidal position
//! encoding, single-head self-attention at several pooled time scales,
//! segment-weighted pooling fused with the scale-weighted summaries, and a
//! one-hidden-layer MLP with softmax output.
//!
//! Every stage is recorded on a [`Tape`] so the same code path serves
//! inference and training.

mod checkpoint;
mod params;

use std::ops::Range;

pub use checkpoint::Checkpoint;
pub use params::{init_params, ConvKernel, CttsParams, Gradients};

use crate::data::{DEFAULT_NEUTRAL_BAND, INPUT_LEN};
use crate::error::{Error, Result};
use crate::numerics::{GradCheck, Tape, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CttsConfig {
    /// Window length T.
    pub seq_len: usize,
    pub d_model: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Pooling factors for multi-scale attention; must start with 1.
    pub scales: Vec<usize>,
    pub num_segments: usize,
    pub mlp_hidden: usize,
    pub num_classes: usize,
    pub neutral_band: f64,
    /// Switch for the additive sinusoidal encoding.
    pub positional_encoding: bool,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for CttsConfig {
    fn default() -> Self {
        CttsConfig {
            seq_len: INPUT_LEN,
            d_model: 16,
            k_min: 2,
            k_max: 7,
            scales: vec![1, 2, 4],
            num_segments: 4,
            mlp_hidden: 64,
            num_classes: 3,
            neutral_band: DEFAULT_NEUTRAL_BAND,
            positional_encoding: true,
            seed: 0,
        }
    }
}

impl CttsConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.seq_len == 0 {
            return fail("seq_len must be positive".into());
        }
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return fail(format!("d_model must be even and positive, got {}", self.d_model));
        }
        if self.k_min == 0 || self.k_min > self.k_max || self.k_max > self.seq_len {
            return fail(format!(
                "kernel sizes need 1 <= k_min <= k_max <= seq_len, got {}..={} with seq_len {}",
                self.k_min, self.k_max, self.seq_len
            ));
        }
        if self.scales.first() != Some(&1) {
            return fail(format!("scales must start with 1, got {:?}", self.scales));
        }
        if let Some(s) = self.scales.iter().find(|&&s| s == 0 || s > self.seq_len) {
            return fail(format!("scale {s} outside 1..={}", self.seq_len));
        }
        if self.num_segments == 0 || self.num_segments > self.seq_len {
            return fail(format!(
                "num_segments {} outside 1..={}",
                self.num_segments, self.seq_len
            ));
        }
        if self.mlp_hidden == 0 {
            return fail("mlp_hidden must be positive".into());
        }
        if self.num_classes != 3 {
            return fail(format!("num_classes must be 3, got {}", self.num_classes));
        }
        if !(self.neutral_band >= 0.0) {
            return fail(format!("neutral_band must be non-negative, got {}", self.neutral_band));
        }
        Ok(())
    }

    /// Kernel sizes held in the convolution bank.
    pub fn kernel_sizes(&self) -> Range<usize> {
        self.k_min..self.k_max + 1
    }
}

/// `floor(sigma_t / sigma_max * k_max)` clamped to `[k_min, k_max]`.
pub fn select_kernel(sigma_t: f64, sigma_max: f64, k_min: usize, k_max: usize) -> Result<usize> {
    if !(sigma_max > 0.0) || !(sigma_t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel selection needs sigma_max > 0 and sigma_t >= 0, got {sigma_t} / {sigma_max}"
        )));
    }
    let raw = (sigma_t / sigma_max * k_max as f64).floor();
    // saturating: sigma_t may exceed sigma_max at test time
    let k = if raw >= k_max as f64 { k_max } else { raw as usize };
    Ok(k.clamp(k_min, k_max))
}

/// Fixed table `p[t][2i] = sin(t / 10000^(2i/d))`, `p[t][2i+1] = cos(...)`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Tensor {
    let mut values = Vec::with_capacity(seq_len * d_model);
    for t in 0..seq_len {
        for j in 0..d_model {
            let i = j / 2;
            let angle = t as f64 / 10000f64.powf((2 * i) as f64 / d_model as f64);
            values.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(seq_len, d_model, values).unwrap()
}

/// Consecutive pooling windows of length `s`; the tail forms a shorter one.
pub fn pooling_groups(len: usize, s: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(s)).map(|g| g * s..((g + 1) * s).min(len)).collect()
}

/// `k` contiguous segments of length `floor(len / k)`, the last absorbing the
/// remainder.
pub fn segment_groups(len: usize, k: usize) -> Vec<Range<usize>> {
    let base = len / k;
    (0..k)
        .map(|i| i * base..if i + 1 == k { len } else { (i + 1) * base })
        .collect()
}

/// Parameter handles on one tape. Unselected kernels are not recorded.
#[derive(Debug, Clone)]
pub struct ParamVars {
    /// Indexed like [`CttsParams::tensors`].
    pub all: Vec<Option<Var>>,
    pub conv_weight: Var,
    pub conv_bias: Var,
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub scale_logits: Var,
    pub segment_logits: Var,
    pub mlp1_w: Var,
    pub mlp1_b: Var,
    pub mlp2_w: Var,
    pub mlp2_b: Var,
}

impl ParamVars {
    /// Records the parameters (only the bank entry for `kernel`) on the tape.
    pub fn record(tape: &mut Tape, params: &CttsParams, kernel: usize, track: bool) -> Result<Self> {
        let bank_index = params
            .conv_bank
            .iter()
            .position(|c| c.size == kernel)
            .ok_or_else(|| Error::InvalidArgument(format!("no kernel of size {kernel} in bank")))?;
        let mut all = vec![None; params.num_tensors()];
        let mut put = |tape: &mut Tape, index: usize, t: &Tensor| {
            let v = tape.leaf(t.clone().with_requires_grad(track));
            all[index] = Some(v);
            v
        };
        let base = 2 * params.conv_bank.len();
        let conv = &params.conv_bank[bank_index];
        let conv_weight = put(tape, 2 * bank_index, &conv.weight);
        let conv_bias = put(tape, 2 * bank_index + 1, &conv.bias);
        let w_q = put(tape, base, &params.w_q);
        let w_k = put(tape, base + 1, &params.w_k);
        let w_v = put(tape, base + 2, &params.w_v);
        let scale_logits = put(tape, base + 3, &params.scale_logits);
        let segment_logits = put(tape, base + 4, &params.segment_logits);
        let mlp1_w = put(tape, base + 5, &params.mlp1_w);
        let mlp1_b = put(tape, base + 6, &params.mlp1_b);
        let mlp2_w = put(tape, base + 7, &params.mlp2_w);
        let mlp2_b = put(tape, base + 8, &params.mlp2_b);
        Ok(ParamVars {
            all,
            conv_weight,
            conv_bias,
            w_q,
            w_k,
            w_v,
            scale_logits,
            segment_logits,
            mlp1_w,
            mlp1_b,
            mlp2_w,
            mlp2_b,
        })
    }
}

/// `ReLU(conv1d_same(window, W) + b)` over a `(T, 1)` input.
pub fn cnn_frontend(tape: &mut Tape, window: Var, weight: Var, bias: Var) -> Result<Var> {
    let conv = tape.conv1d_same(window, weight, bias)?;
    Ok(tape.relu(conv))
}

/// Adds the fixed sinusoidal table to `(T, d_model)` tokens.
pub fn positional_encode(tape: &mut Tape, tokens: Var) -> Result<Var> {
    let (t_len, d) = tape.value(tokens).dims2()?;
    if d % 2 != 0 {
        return Err(Error::Config(format!(
            "positional encoding needs even d_model, got {d}"
        )));
    }
    let table = tape.constant(positional_encoding(t_len, d));
    tape.add(tokens, table)
}

/// Single-head scaled dot-product attention. Returns `(A V, A)`.
pub fn self_attention(tape: &mut Tape, z: Var, w_q: Var, w_k: Var, w_v: Var) -> Result<(Var, Var)> {
    let (_, d) = tape.value(z).dims2()?;
    let q = tape.matmul(z, w_q)?;
    let k = tape.matmul(z, w_k)?;
    let v = tape.matmul(z, w_v)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax_rows(scores)?;
    let out = tape.matmul(attn, v)?;
    Ok((out, attn))
}

/// Output of [`multi_scale_attention`].
#[derive(Debug, Clone)]
pub struct MultiScale {
    /// One `(1, d_model)` time-averaged attention output per scale.
    pub pooled: Vec<Var>,
    /// Scale-1 attention outputs, `(T, d_model)`.
    pub full_res: Var,
    pub attention: Vec<Var>,
}

/// Average-pools `z` by each scale, attends, and mean-pools over time.
pub fn multi_scale_attention(
    tape: &mut Tape,
    z: Var,
    w_q: Var,
    w_k: Var,
    w_v: Var,
    scales: &[usize],
) -> Result<MultiScale> {
    let (t_len, _) = tape.value(z).dims2()?;
    if scales.first() != Some(&1) {
        return Err(Error::Config(format!("scales must start with 1, got {scales:?}")));
    }
    let mut pooled = Vec::with_capacity(scales.len());
    let mut attention = Vec::with_capacity(scales.len());
    let mut full_res = None;
    for &s in scales {
        if s == 0 || s > t_len {
            return Err(Error::Config(format!("scale {s} outside 1..={t_len}")));
        }
        let tokens = if s == 1 {
            z
        } else {
            tape.group_mean(z, pooling_groups(t_len, s))?
        };
        let (out, attn) = self_attention(tape, tokens, w_q, w_k, w_v)?;
        let len = tape.value(out).dims2()?.0;
        pooled.push(tape.group_mean(out, vec![0..len])?);
        attention.push(attn);
        full_res.get_or_insert(out);
    }
    Ok(MultiScale {
        pooled,
        full_res: full_res.unwrap(),
        attention,
    })
}

/// Output of [`adaptive_segmentation`].
#[derive(Debug, Clone)]
pub struct Segmented {
    /// `(K, d_model)` segment means.
    pub segments: Var,
    /// `(1, d_model)` fused representation.
    pub h_seg: Var,
}

/// `sum_k softmax(segment_logits)_k * mean(segment k) + sum_s softmax(scale_logits)_s * u_s`.
pub fn adaptive_segmentation(
    tape: &mut Tape,
    full_res: Var,
    pooled: &[Var],
    scale_logits: Var,
    segment_logits: Var,
    num_segments: usize,
) -> Result<Segmented> {
    let (t_len, _) = tape.value(full_res).dims2()?;
    if num_segments == 0 || num_segments > t_len {
        return Err(Error::Config(format!(
            "num_segments {num_segments} outside 1..={t_len}"
        )));
    }
    let segments = tape.group_mean(full_res, segment_groups(t_len, num_segments))?;
    let omega = tape.reshape(segment_logits, vec![1, num_segments])?;
    let omega = tape.softmax_rows(omega)?;
    let base = tape.matmul(omega, segments)?;

    let stacked = tape.concat_rows(pooled)?;
    let alpha = tape.reshape(scale_logits, vec![1, pooled.len()])?;
    let alpha = tape.softmax_rows(alpha)?;
    let multi = tape.matmul(alpha, stacked)?;
    let h_seg = tape.add(base, multi)?;
    Ok(Segmented { segments, h_seg })
}

/// Everything recorded for one window.
#[derive(Debug, Clone)]
pub struct Graph {
    pub params: ParamVars,
    pub kernel_used: usize,
    pub tokens: Var,
    pub encoded: Var,
    pub multi: MultiScale,
    pub segmented: Segmented,
    pub logits: Var,
}

fn head(
    tape: &mut Tape,
    tokens: Var,
    pv: &ParamVars,
    config: &CttsConfig,
) -> Result<(Var, MultiScale, Segmented, Var)> {
    let encoded = if config.positional_encoding {
        positional_encode(tape, tokens)?
    } else {
        tokens
    };
    let multi = multi_scale_attention(tape, encoded, pv.w_q, pv.w_k, pv.w_v, &config.scales)?;
    let segmented = adaptive_segmentation(
        tape,
        multi.full_res,
        &multi.pooled,
        pv.scale_logits,
        pv.segment_logits,
        config.num_segments,
    )?;
    let hidden = tape.matmul(segmented.h_seg, pv.mlp1_w)?;
    let hidden = tape.add_bias(hidden, pv.mlp1_b)?;
    let hidden = tape.relu(hidden);
    let logits = tape.matmul(hidden, pv.mlp2_w)?;
    let logits = tape.add_bias(logits, pv.mlp2_b)?;
    Ok((encoded, multi, segmented, logits))
}

/// Records the full pipeline for a normalized window with volatility `sigma_t`.
pub fn build_graph(
    tape: &mut Tape,
    inputs: &[f64],
    sigma_t: f64,
    params: &CttsParams,
    config: &CttsConfig,
    track: bool,
) -> Result<Graph> {
    if inputs.len() != config.seq_len {
        return Err(Error::Dimension {
            op: "forward",
            left: vec![inputs.len()],
            right: vec![config.seq_len],
        });
    }
    let sigma_max = params
        .sigma_max()
        .ok_or_else(|| Error::InvalidArgument("sigma_max has not been set on the parameters".into()))?;
    let kernel_used = select_kernel(sigma_t, sigma_max, config.k_min, config.k_max)?;
    let pv = ParamVars::record(tape, params, kernel_used, track)?;
    let window = tape.constant(Tensor::matrix(config.seq_len, 1, inputs.to_vec())?);
    let tokens = cnn_frontend(tape, window, pv.conv_weight, pv.conv_bias)?;
    let (encoded, multi, segmented, logits) = head(tape, tokens, &pv, config)?;
    Ok(Graph {
        params: pv,
        kernel_used,
        tokens,
        encoded,
        multi,
        segmented,
        logits,
    })
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub kernel_used: usize,
    /// Convolutional features, `(T, d_model)`.
    pub tokens: Tensor,
    /// Tokens after positional encoding.
    pub encoded: Tensor,
    pub per_scale_attention: Vec<Tensor>,
    pub per_scale_pooled: Vec<Vec<f64>>,
    pub segment_vectors: Vec<Vec<f64>>,
    pub h_seg: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    fn collect(tape: &Tape, g: &Graph) -> Self {
        let rows = |t: &Tensor| {
            let (r, _) = t.dims2().unwrap();
            (0..r).map(|i| t.row(i).to_vec()).collect::<Vec<_>>()
        };
        let logits = tape.value(g.logits).values().to_vec();
        ForwardTrace {
            kernel_used: g.kernel_used,
            tokens: tape.value(g.tokens).clone(),
            encoded: tape.value(g.encoded).clone(),
            per_scale_attention: g.multi.attention.iter().map(|&a| tape.value(a).clone()).collect(),
            per_scale_pooled: g
                .multi
                .pooled
                .iter()
                .map(|&p| tape.value(p).values().to_vec())
                .collect(),
            segment_vectors: rows(tape.value(g.segmented.segments)),
            h_seg: tape.value(g.segmented.h_seg).values().to_vec(),
            probs: crate::numerics::softmax(&logits),
            logits,
        }
    }
}

/// Inference on one normalized window.
pub fn forward_inputs(inputs: &[f64], sigma_t: f64, params: &CttsParams, config: &CttsConfig) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let g = build_graph(&mut tape, inputs, sigma_t, params, config, false)?;
    Ok(ForwardTrace::collect(&tape, &g))
}

pub fn forward(window: &crate::data::LabeledWindow, params: &CttsParams, config: &CttsConfig) -> Result<ForwardTrace> {
    forward_inputs(&window.inputs, window.volatility, params, config)
}

/// Runs everything after the convolution on caller-supplied `(T, d_model)`
/// tokens. The `k_min` bank entry is recorded but unused.
pub fn forward_from_tokens(tokens: &Tensor, params: &CttsParams, config: &CttsConfig) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let pv = ParamVars::record(&mut tape, params, config.k_min, false)?;
    let tokens = tape.constant(tokens.clone());
    let (encoded, multi, segmented, logits) = head(&mut tape, tokens, &pv, config)?;
    let g = Graph {
        params: pv,
        kernel_used: 0,
        tokens,
        encoded,
        multi,
        segmented,
        logits,
    };
    Ok(ForwardTrace::collect(&tape, &g))
}

/// Loss and parameter gradients for one window. `weight` scales the loss.
pub fn loss_and_gradients(
    inputs: &[f64],
    sigma_t: f64,
    label: usize,
    weight: f64,
    params: &CttsParams,
    config: &CttsConfig,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let g = build_graph(&mut tape, inputs, sigma_t, params, config, true)?;
    let loss = tape.softmax_cross_entropy(g.logits, label)?;
    let loss = tape.scale(loss, weight);
    tape.backward(loss)?;
    let value = tape.value(loss).values()[0];
    let grads = params
        .tensors()
        .iter()
        .zip(&g.params.all)
        .map(|(t, v)| match v.and_then(|v| tape.grad(v)) {
            Some(g) => g.to_vec(),
            None => vec![0.0; t.len()],
        })
        .collect();
    Ok((value, Gradients(grads)))
}

/// Cross-entropy of one window without recording gradients.
pub fn loss(inputs: &[f64], sigma_t: f64, label: usize, params: &CttsParams, config: &CttsConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let g = build_graph(&mut tape, inputs, sigma_t, params, config, false)?;
    let loss = tape.softmax_cross_entropy(g.logits, label)?;
    Ok(tape.value(loss).values()[0])
}

/// Compares [`loss_and_gradients`] against central differences of [`loss`]
/// for every entry of every parameter tensor.
pub fn gradient_check(
    inputs: &[f64],
    sigma_t: f64,
    label: usize,
    params: &CttsParams,
    config: &CttsConfig,
    step: f64,
) -> Result<GradCheck> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let (_, analytic) = loss_and_gradients(inputs, sigma_t, label, 1.0, params, config)?;
    let mut work = params.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        per_param: vec![0.0; analytic.0.len()],
        worst: (0, 0),
    };
    for (pi, g_tensor) in analytic.0.iter().enumerate() {
        for (ei, &g) in g_tensor.iter().enumerate() {
            let orig = params.tensors()[pi].values()[ei];
            let mut eval = |v: f64| -> Result<f64> {
                work.tensors_mut()[pi].values_mut()[ei] = v;
                loss(inputs, sigma_t, label, &work, config)
            };
            let plus = eval(orig + step)?;
            let minus = eval(orig - step)?;
            work.tensors_mut()[pi].values_mut()[ei] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let rel = (g - fd).abs() / (g.abs() + fd.abs()).max(1e-8);
            if rel > report.per_param[pi] {
                report.per_param[pi] = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ei);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
