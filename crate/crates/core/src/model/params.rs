use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CttsConfig;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One entry of the convolution bank: weight `(k, 1, d_model)`, bias `(d_model)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub size: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Learned parameters plus the volatility scale frozen at training start.
#[derive(Debug, Clone, PartialEq)]
pub struct CttsParams {
    pub conv_bank: Vec<ConvKernel>,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub scale_logits: Tensor,
    pub segment_logits: Tensor,
    pub mlp1_w: Tensor,
    pub mlp1_b: Tensor,
    pub mlp2_w: Tensor,
    pub mlp2_b: Tensor,
    sigma_max: Option<f64>,
}

/// Gradients laid out like [`CttsParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(params: &CttsParams) -> Self {
        Gradients(params.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_finite())
    }
}

impl CttsParams {
    /// All tensors in a fixed order: bank (weight, bias) per kernel size, then
    /// `w_q, w_k, w_v, scale_logits, segment_logits, mlp1_w, mlp1_b, mlp2_w, mlp2_b`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for c in &self.conv_bank {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out.extend([
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.scale_logits,
            &self.segment_logits,
            &self.mlp1_w,
            &self.mlp1_b,
            &self.mlp2_w,
            &self.mlp2_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for c in &mut self.conv_bank {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.extend([
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.scale_logits,
            &mut self.segment_logits,
            &mut self.mlp1_w,
            &mut self.mlp1_b,
            &mut self.mlp2_w,
            &mut self.mlp2_b,
        ]);
        out
    }

    /// Names matching [`CttsParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.conv_bank {
            out.push(format!("conv.{}.weight", c.size));
            out.push(format!("conv.{}.bias", c.size));
        }
        for n in [
            "attn.w_q",
            "attn.w_k",
            "attn.w_v",
            "scale_logits",
            "segment_logits",
            "mlp1.weight",
            "mlp1.bias",
            "mlp2.weight",
            "mlp2.bias",
        ] {
            out.push(n.to_string());
        }
        out
    }

    pub fn num_tensors(&self) -> usize {
        2 * self.conv_bank.len() + 9
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn sigma_max(&self) -> Option<f64> {
        self.sigma_max
    }

    /// Sets the volatility normalizer. Allowed once.
    pub fn freeze_sigma_max(&mut self, sigma_max: f64) -> Result<()> {
        if let Some(s) = self.sigma_max {
            return Err(Error::InvalidArgument(format!("sigma_max already frozen at {s}")));
        }
        if !(sigma_max.is_finite() && sigma_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma_max must be positive, got {sigma_max}"
            )));
        }
        self.sigma_max = Some(sigma_max);
        Ok(())
    }

    /// Shapes every tensor must have under `config`, in [`CttsParams::tensors`] order.
    pub fn expected_shapes(config: &CttsConfig) -> Vec<Vec<usize>> {
        let d = config.d_model;
        let mut out = Vec::new();
        for k in config.kernel_sizes() {
            out.push(vec![k, 1, d]);
            out.push(vec![d]);
        }
        out.extend([
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![config.scales.len()],
            vec![config.num_segments],
            vec![d, config.mlp_hidden],
            vec![config.mlp_hidden],
            vec![config.mlp_hidden, config.num_classes],
            vec![config.num_classes],
        ]);
        out
    }

    /// Assembles parameters from tensors in [`CttsParams::tensors`] order.
    pub fn from_tensors(config: &CttsConfig, tensors: Vec<Tensor>, sigma_max: Option<f64>) -> Result<Self> {
        let expected = Self::expected_shapes(config);
        if tensors.len() != expected.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (i, (t, e)) in tensors.iter().zip(&expected).enumerate() {
            if t.shape() != e.as_slice() {
                return Err(Error::Dimension {
                    op: "parameter",
                    left: t.shape().to_vec(),
                    right: vec![i],
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        let conv_bank = config
            .kernel_sizes()
            .map(|size| ConvKernel {
                size,
                weight: next(),
                bias: next(),
            })
            .collect();
        Ok(CttsParams {
            conv_bank,
            w_q: next(),
            w_k: next(),
            w_v: next(),
            scale_logits: next(),
            segment_logits: next(),
            mlp1_w: next(),
            mlp1_b: next(),
            mlp2_w: next(),
            mlp2_b: next(),
            sigma_max,
        })
    }
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), values).unwrap()
}

/// Glorot-uniform weights, zero biases, zero scale and segment logits.
/// The convolution fan-in is `k` and its fan-out `d_model`.
pub fn init_params(config: &CttsConfig, seed: u64) -> Result<CttsParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let mut tensors = Vec::new();
    for k in config.kernel_sizes() {
        tensors.push(glorot(&mut rng, &[k, 1, d], k, d));
        tensors.push(Tensor::zeros(&[d]));
    }
    for _ in 0..3 {
        tensors.push(glorot(&mut rng, &[d, d], d, d));
    }
    tensors.push(Tensor::zeros(&[config.scales.len()]));
    tensors.push(Tensor::zeros(&[config.num_segments]));
    tensors.push(glorot(&mut rng, &[d, config.mlp_hidden], d, config.mlp_hidden));
    tensors.push(Tensor::zeros(&[config.mlp_hidden]));
    tensors.push(glorot(
        &mut rng,
        &[config.mlp_hidden, config.num_classes],
        config.mlp_hidden,
        config.num_classes,
    ));
    tensors.push(Tensor::zeros(&[config.num_classes]));
    CttsParams::from_tensors(config, tensors, None)
}
