//! Price series ingestion, synthetic generation, and labeled window
//! construction.

mod csv;
mod split;
mod synthetic;

pub use self::csv::{load_csv, read_csv, write_csv};
pub use split::{chronological_split, DatasetSplit, SplitRatios};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::error::{Error, Result};

/// Number of price steps fed to the model.
pub const INPUT_LEN: usize = 80;
/// Steps needed for one labeled window (inputs plus the step being predicted).
pub const MIN_SERIES_LEN: usize = INPUT_LEN + 1;
/// Default relative-change dead zone for the flat class.
pub const DEFAULT_NEUTRAL_BAND: f64 = 1e-4;

/// Direction of the next price move. Class indices follow `Down < Flat < Up`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Down,
    Flat,
    Up,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Down, Direction::Flat, Direction::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn sign(self) -> i8 {
        self as i8 - 1
    }

    pub fn from_sign(s: i8) -> Option<Self> {
        match s {
            -1 => Some(Direction::Down),
            0 => Some(Direction::Flat),
            1 => Some(Direction::Up),
            _ => None,
        }
    }
}

/// Univariate prices for one symbol, timestamps in minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    timestamps: Vec<i64>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, timestamps: Vec<i64>, prices: Vec<f64>) -> Result<Self> {
        let symbol = symbol.into();
        let invalid = |msg: String| Error::Validation {
            symbol: symbol.clone(),
            msg,
        };
        if timestamps.len() != prices.len() {
            return Err(invalid(format!(
                "{} timestamps but {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid(format!("price {} at position {i} is not positive", prices[i])));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "timestamps not strictly increasing at position {}",
                i + 1
            )));
        }
        Ok(PriceSeries {
            symbol,
            timestamps,
            prices,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// One normalized model input and the direction of the step that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    /// Min-max scaled prices, all in `[0, 1]`.
    pub inputs: Vec<f64>,
    /// The same prices before scaling.
    pub raw: Vec<f64>,
    pub raw_last_price: f64,
    pub label: Direction,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Sample standard deviation of one-step log returns inside the window.
    pub volatility: f64,
    /// Position of the last input step in the source series.
    pub end_index: usize,
}

/// Result of windowing one series.
#[derive(Debug, Clone, Default)]
pub struct Windows {
    pub windows: Vec<LabeledWindow>,
    /// Constant windows that could not be scaled.
    pub degenerate: usize,
    /// Set when the series was shorter than [`MIN_SERIES_LEN`].
    pub too_short: bool,
}

/// Scales `x` affinely onto `[0, 1]`; returns the scaled values with the
/// original min and max.
pub fn minmax_scale(x: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "min-max scaling needs at least 2 values, got {}",
            x.len()
        )));
    }
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::DegenerateWindow(min));
    }
    let range = max - min;
    Ok((x.iter().map(|v| (v - min) / range).collect(), min, max))
}

/// Direction of `p_next` relative to `p_last`, flat when the relative change
/// is within `neutral_band`.
pub fn label_sign(p_next: f64, p_last: f64, neutral_band: f64) -> Direction {
    debug_assert!(p_last > 0.0);
    let r = (p_next - p_last) / p_last;
    if r.abs() <= neutral_band {
        Direction::Flat
    } else if r > 0.0 {
        Direction::Up
    } else {
        Direction::Down
    }
}

/// Sample standard deviation (n-1) of one-step log returns. Zero when fewer
/// than two returns exist.
pub fn rolling_volatility(window: &[f64]) -> Result<f64> {
    if let Some(p) = window.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "volatility needs positive prices, got {p}"
        )));
    }
    // Welford
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for w in window.windows(2) {
        let r = (w[1] / w[0]).ln();
        n += 1;
        let delta = r - mean;
        mean += delta / n as f64;
        m2 += delta * (r - mean);
    }
    if n < 2 {
        return Ok(0.0);
    }
    Ok((m2 / (n - 1) as f64).sqrt())
}

/// Slides an [`INPUT_LEN`] window over the series with the given stride. The
/// label compares the step after the window with the window's last price.
pub fn make_windows(series: &PriceSeries, stride: usize, neutral_band: f64) -> Result<Windows> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    if !(neutral_band >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "neutral band must be non-negative, got {neutral_band}"
        )));
    }
    let prices = series.prices();
    let mut out = Windows::default();
    if prices.len() < MIN_SERIES_LEN {
        out.too_short = true;
        return Ok(out);
    }
    for start in (0..=prices.len() - MIN_SERIES_LEN).step_by(stride) {
        let raw = &prices[start..start + INPUT_LEN];
        let (inputs, scale_min, scale_max) = match minmax_scale(raw) {
            Ok(s) => s,
            Err(Error::DegenerateWindow(_)) => {
                out.degenerate += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let last = raw[INPUT_LEN - 1];
        out.windows.push(LabeledWindow {
            inputs,
            raw: raw.to_vec(),
            raw_last_price: last,
            label: label_sign(prices[start + INPUT_LEN], last, neutral_band),
            scale_min,
            scale_max,
            volatility: rolling_volatility(raw)?,
            end_index: start + INPUT_LEN - 1,
        });
    }
    Ok(out)
}
