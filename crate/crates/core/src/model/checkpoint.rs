//! Line-oriented text checkpoint.
//!
//! ```text
//! ctts-checkpoint 1
//! seq_len 80
//! ...config keys...
//! sigma_max 0.0012
//! train_seed 7
//! tensor conv.2.weight 2,1,16
//! <row-major values, space separated>
//! ...
//! end
//! ```
//!
//! Floats are written in the shortest form that parses back to the same bits,
//! so load followed by save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use super::{CttsConfig, CttsParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &str = "ctts-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: CttsConfig,
    pub params: CttsParams,
    pub train_seed: u64,
}

fn field<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, String)> {
    let (n, l) = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
    let value = l
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Checkpoint(format!("line {n}: expected `{key}`")))?;
    Ok((n, value.to_string()))
}

fn join<T: std::fmt::Debug>(xs: &[T], sep: &str) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(sep)
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "seq_len {}", c.seq_len).unwrap();
        writeln!(s, "d_model {}", c.d_model).unwrap();
        writeln!(s, "k_min {}", c.k_min).unwrap();
        writeln!(s, "k_max {}", c.k_max).unwrap();
        writeln!(s, "scales {}", join(&c.scales, ",")).unwrap();
        writeln!(s, "num_segments {}", c.num_segments).unwrap();
        writeln!(s, "mlp_hidden {}", c.mlp_hidden).unwrap();
        writeln!(s, "num_classes {}", c.num_classes).unwrap();
        writeln!(s, "neutral_band {:?}", c.neutral_band).unwrap();
        writeln!(s, "positional_encoding {}", c.positional_encoding).unwrap();
        writeln!(s, "seed {}", c.seed).unwrap();
        match self.params.sigma_max() {
            Some(v) => writeln!(s, "sigma_max {v:?}").unwrap(),
            None => writeln!(s, "sigma_max none").unwrap(),
        }
        writeln!(s, "train_seed {}", self.train_seed).unwrap();
        for (name, t) in self.params.tensor_names().iter().zip(self.params.tensors()) {
            writeln!(s, "tensor {name} {}", join(t.shape(), ",")).unwrap();
            writeln!(s, "{}", join(t.values(), " ")).unwrap();
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(bad(1, "not a ctts checkpoint")),
        }
        fn num<T: std::str::FromStr>(f: (usize, String)) -> Result<T> {
            f.1.parse()
                .map_err(|_| Error::Checkpoint(format!("line {}: bad value `{}`", f.0, f.1)))
        }
        let seq_len = num(field(&mut lines, "seq_len")?)?;
        let d_model = num(field(&mut lines, "d_model")?)?;
        let k_min = num(field(&mut lines, "k_min")?)?;
        let k_max = num(field(&mut lines, "k_max")?)?;
        let (n, scales) = field(&mut lines, "scales")?;
        let scales = scales
            .split(',')
            .map(|s| num((n, s.to_string())))
            .collect::<Result<Vec<usize>>>()?;
        let config = CttsConfig {
            seq_len,
            d_model,
            k_min,
            k_max,
            scales,
            num_segments: num(field(&mut lines, "num_segments")?)?,
            mlp_hidden: num(field(&mut lines, "mlp_hidden")?)?,
            num_classes: num(field(&mut lines, "num_classes")?)?,
            neutral_band: num(field(&mut lines, "neutral_band")?)?,
            positional_encoding: num(field(&mut lines, "positional_encoding")?)?,
            seed: num(field(&mut lines, "seed")?)?,
        };
        config.validate()?;
        let sigma = field(&mut lines, "sigma_max")?;
        let sigma_max = if sigma.1 == "none" {
            None
        } else {
            Some(num::<f64>(sigma)?)
        };
        let train_seed = num(field(&mut lines, "train_seed")?)?;

        let shapes = CttsParams::expected_shapes(&config);
        let mut tensors = Vec::with_capacity(shapes.len());
        for _ in &shapes {
            let (n, header) = field(&mut lines, "tensor")?;
            let (_, dims) = header.rsplit_once(' ').ok_or_else(|| bad(n, "missing tensor shape"))?;
            let shape = dims
                .split(',')
                .map(|d| num((n, d.to_string())))
                .collect::<Result<Vec<usize>>>()?;
            let (n, body) = lines.next().ok_or_else(|| bad(n, "missing tensor values"))?;
            let values = body
                .split(' ')
                .map(|v| num((n, v.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            tensors.push(Tensor::new(shape, values).map_err(|e| bad(n, &e.to_string()))?);
        }
        match lines.next() {
            Some((_, "end")) => {}
            Some((n, _)) => return Err(bad(n, "expected `end`")),
            None => return Err(bad(0, "missing `end`")),
        }
        let params = CttsParams::from_tensors(&config, tensors, sigma_max)?;
        Ok(Checkpoint {
            config,
            params,
            train_seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
