use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PriceSeries, MIN_SERIES_LEN};
use crate::error::{Error, Result};

/// Regime-switching generator settings.
///
/// Log returns are `r_t = mu_t + e_t` with `e_t = momentum * e_{t-1} + noise * z_t`.
/// The drift `mu_t` starts at `drift` and flips sign at regime boundaries;
/// each step starts a new regime with probability `1 / mean_regime_length`.
/// While the drift is negative, drift and innovation are scaled by `down_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub symbol: String,
    pub length: usize,
    pub initial_price: f64,
    /// AR(1) coefficient on the return deviations.
    pub momentum: f64,
    /// Log drift per step in the first regime.
    pub drift: f64,
    /// Expected regime length in steps; `f64::INFINITY` disables switching.
    pub mean_regime_length: f64,
    /// Standard deviation of the Gaussian innovation.
    pub noise: f64,
    /// Multiplies both drift and noise while the drift is negative.
    pub down_scale: f64,
    pub start_timestamp: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            symbol: "SYN".into(),
            length: 2000,
            initial_price: 100.0,
            momentum: 0.1,
            drift: 6e-4,
            mean_regime_length: 300.0,
            noise: 1e-3,
            down_scale: 2.0,
            start_timestamp: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidArgument(format!("{field}: {msg}")));
        if self.symbol.is_empty() || self.symbol.contains(',') {
            return bad("symbol", format!("`{}` must be non-empty without commas", self.symbol));
        }
        if self.length < MIN_SERIES_LEN {
            return bad(
                "length",
                format!("{} is below the minimum {MIN_SERIES_LEN}", self.length),
            );
        }
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return bad("initial_price", format!("{} must be positive", self.initial_price));
        }
        if !(self.momentum.abs() < 1.0) {
            return bad("momentum", format!("{} must lie in (-1, 1)", self.momentum));
        }
        if !self.drift.is_finite() {
            return bad("drift", format!("{} must be finite", self.drift));
        }
        if !(self.mean_regime_length >= 1.0) {
            return bad(
                "mean_regime_length",
                format!("{} must be at least 1", self.mean_regime_length),
            );
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise", format!("{} must be non-negative", self.noise));
        }
        if !(self.down_scale.is_finite() && self.down_scale > 0.0) {
            return bad("down_scale", format!("{} must be positive", self.down_scale));
        }
        Ok(())
    }
}

/// Generates one series. A pure function of `(config, seed)`.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<PriceSeries> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip_prob = 1.0 / config.mean_regime_length;

    let mut prices = Vec::with_capacity(config.length);
    let mut log_price = config.initial_price.ln();
    let mut drift = config.drift;
    let mut deviation = 0.0;
    prices.push(config.initial_price);
    for _ in 1..config.length {
        // both draws every step so the stream layout does not depend on values
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        if u < flip_prob {
            drift = -drift;
        }
        let scale = if drift < 0.0 { config.down_scale } else { 1.0 };
        deviation = config.momentum * deviation + config.noise * scale * z;
        log_price += drift * scale + deviation;
        prices.push(log_price.exp());
    }
    let timestamps = (0..config.length as i64).map(|t| config.start_timestamp + t).collect();
    PriceSeries::new(config.symbol.clone(), timestamps, prices)
}
