//! Classical comparators: ARIMA by conditional least squares, EMA with fitted
//! smoothing and initial forecast, and a constant-class predictor. Point
//! forecasts become class probabilities through one shared confidence recipe.

mod arima;
mod ema;

use std::fmt;
use std::str::FromStr;

pub use arima::{arima_fit, arima_fit_or_last, arima_forecast, arima_predict, ArimaModel, ArimaOrder};
pub use ema::{ema_fit, ema_forecast, ema_objective, ema_optimal_initial, ema_predict, EmaModel};

use crate::data::{label_sign, Direction};
use crate::error::{Error, Result};
use crate::numerics::argmax;

/// Class probabilities indexed Down, Flat, Up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProbPrediction {
    pub probs: [f64; 3],
    pub predicted_class: Direction,
    pub confidence: f64,
}

impl ClassProbPrediction {
    /// Argmax with ties going to the lower class index.
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let i = argmax(&probs);
        ClassProbPrediction {
            probs,
            predicted_class: Direction::from_index(i).unwrap(),
            confidence: probs[i],
        }
    }

    /// Mass `c` on `point`, `(1 - c) / 2` on each other class.
    pub fn from_confidence(point: Direction, c: f64) -> Self {
        let rest = (1.0 - c) / 2.0;
        let mut probs = [rest; 3];
        probs[point.index()] = c;
        let z: f64 = probs.iter().sum();
        Self::from_probs(probs.map(|p| p / z))
    }
}

/// `exp(-e)` with `e` the mean absolute in-sample one-step error over the
/// sample standard deviation of the window prices.
pub fn forecast_confidence(abs_errors: &[f64], window: &[f64]) -> Result<f64> {
    let sd = sample_std(window);
    if !(sd > 0.0) {
        return Err(Error::DegenerateWindow(window.first().copied().unwrap_or(0.0)));
    }
    if abs_errors.is_empty() {
        return Err(Error::InvalidArgument("no in-sample forecasts to score".into()));
    }
    let e = abs_errors.iter().sum::<f64>() / abs_errors.len() as f64 / sd;
    Ok((-e).exp())
}

pub(crate) fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn point_prediction(forecast: f64, window: &[f64], neutral_band: f64, confidence: f64) -> ClassProbPrediction {
    let last = *window.last().unwrap();
    ClassProbPrediction::from_confidence(label_sign(forecast, last, neutral_band), confidence)
}

/// Probability 1 on `fixed_class`.
pub fn naive_constant_predict(fixed_class: Direction) -> ClassProbPrediction {
    let mut probs = [0.0; 3];
    probs[fixed_class.index()] = 1.0;
    ClassProbPrediction::from_probs(probs)
}

/// Baselines selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Arima,
    Ema,
    Naive,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Arima => "arima",
            BaselineKind::Ema => "ema",
            BaselineKind::Naive => "naive",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "arima" => Ok(BaselineKind::Arima),
            "ema" => Ok(BaselineKind::Ema),
            "naive" => Ok(BaselineKind::Naive),
            other => Err(Error::InvalidArgument(format!(
                "unknown baseline `{other}` (expected arima, ema or naive)"
            ))),
        }
    }
}
