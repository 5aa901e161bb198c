use super::{forecast_confidence, point_prediction, sample_std, ClassProbPrediction};
use crate::error::{Error, Result};

const GRID_STEPS: usize = 100;
const GOLDEN_ITERATIONS: usize = 80;

/// `p_hat[t+1] = alpha * p[t] + (1 - alpha) * p_hat[t]`, `p_hat[0] = initial_forecast`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaModel {
    pub alpha: f64,
    pub initial_forecast: f64,
}

/// Forecasts as `a[t] * init + b[t]` for `t = 0..n`.
fn coefficients(window: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let n = window.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let (mut at, mut bt) = (1.0, 0.0);
    for &p in window {
        a.push(at);
        b.push(bt);
        at *= 1.0 - alpha;
        bt = alpha * p + (1.0 - alpha) * bt;
    }
    (a, b)
}

/// Initial forecast minimizing the objective for a fixed `alpha`.
pub fn ema_optimal_initial(window: &[f64], alpha: f64) -> f64 {
    let (a, b) = coefficients(window, alpha);
    let num: f64 = a.iter().zip(&b).zip(window).map(|((a, b), p)| a * (p - b)).sum();
    let den: f64 = a.iter().map(|a| a * a).sum();
    num / den
}

/// Mean squared one-step error `(1/n) sum_t (p_hat[t] - p[t])^2`, `t = 0..n`.
pub fn ema_objective(window: &[f64], alpha: f64, initial_forecast: f64) -> f64 {
    let mut hat = initial_forecast;
    let mut sse = 0.0;
    for &p in window {
        sse += (hat - p).powi(2);
        hat = alpha * p + (1.0 - alpha) * hat;
    }
    sse / window.len() as f64
}

fn profiled(window: &[f64], alpha: f64) -> (f64, f64) {
    let init = ema_optimal_initial(window, alpha);
    (ema_objective(window, alpha, init), init)
}

/// Joint least-squares fit: `alpha` on the grid `0.01..=1.00` with the
/// initial forecast solved exactly per `alpha`, then golden-section search
/// within one grid step of the best cell. Ties go to the larger `alpha`.
pub fn ema_fit(window: &[f64]) -> Result<EmaModel> {
    if window.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "EMA fit needs at least 3 prices, got {}",
            window.len()
        )));
    }
    if let Some(v) = window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("EMA input {v}")));
    }
    let mut best = (f64::INFINITY, 1.0, window[0]);
    for i in 1..=GRID_STEPS {
        let alpha = i as f64 / GRID_STEPS as f64;
        let (obj, init) = profiled(window, alpha);
        if obj <= best.0 {
            best = (obj, alpha, init);
        }
    }

    let step = 1.0 / GRID_STEPS as f64;
    let (mut lo, mut hi) = ((best.1 - step).max(1e-12), (best.1 + step).min(1.0));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = profiled(window, x1).0;
    let mut f2 = profiled(window, x2).0;
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = profiled(window, x1).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = profiled(window, x2).0;
        }
    }
    for alpha in [x1, x2, lo, hi] {
        let (obj, init) = profiled(window, alpha);
        if obj < best.0 {
            best = (obj, alpha, init);
        }
    }
    Ok(EmaModel {
        alpha: best.1,
        initial_forecast: best.2,
    })
}

/// All in-window forecasts `p_hat[0..=n]`; the last is the one-step-ahead forecast.
fn run(model: &EmaModel, window: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(window.len() + 1);
    let mut hat = model.initial_forecast;
    out.push(hat);
    for &p in window {
        hat = model.alpha * p + (1.0 - model.alpha) * hat;
        out.push(hat);
    }
    out
}

fn check(model: &EmaModel, window: &[f64]) -> Result<()> {
    if !(model.alpha > 0.0 && model.alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "EMA alpha must lie in (0, 1], got {}",
            model.alpha
        )));
    }
    if window.is_empty() {
        return Err(Error::InvalidArgument("EMA forecast on an empty window".into()));
    }
    Ok(())
}

/// Runs the recursion over the window and returns the next-step forecast.
pub fn ema_forecast(model: &EmaModel, window: &[f64]) -> Result<f64> {
    check(model, window)?;
    Ok(*run(model, window).last().unwrap())
}

/// Banded class of the forecast, confidence from the in-sample errors. A
/// constant window fitted exactly has confidence 1.
pub fn ema_predict(model: &EmaModel, window: &[f64], neutral_band: f64) -> Result<ClassProbPrediction> {
    check(model, window)?;
    let hats = run(model, window);
    let errors: Vec<f64> = hats.iter().zip(window).map(|(h, p)| (h - p).abs()).collect();
    let forecast = hats[window.len()];
    let c = if sample_std(window) == 0.0 && errors.iter().all(|e| *e == 0.0) {
        1.0
    } else {
        forecast_confidence(&errors, window)?
    };
    Ok(point_prediction(forecast, window, neutral_band, c))
}
