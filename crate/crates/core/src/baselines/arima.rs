use std::fmt;
use std::str::FromStr;

use super::{forecast_confidence, point_prediction, ClassProbPrediction};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-8;

/// ARIMA orders `(p, d, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        ArimaOrder { p: 2, d: 1, q: 1 }
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.p, self.d, self.q)
    }
}

impl FromStr for ArimaOrder {
    type Err = Error;

    /// Parses `p,d,q`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("ARIMA orders must look like p,d,q, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n = |i: usize| parts[i].parse::<usize>().map_err(|_| bad());
        Ok(ArimaOrder {
            p: n(0)?,
            d: n(1)?,
            q: n(2)?,
        })
    }
}

/// Fitted ARIMA on the `d`-times differenced window. The intercept is only
/// estimated when `d == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    /// In-sample one-step residuals of the differenced series.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The joint regression was singular and the MA terms were dropped.
    pub ar_only_fallback: bool,
    /// The AR-only regression was singular too; coefficients are zero.
    pub zero_fallback: bool,
}

impl ArimaModel {
    pub fn order(&self) -> ArimaOrder {
        ArimaOrder {
            p: self.p,
            d: self.d,
            q: self.q,
        }
    }

    fn uses_intercept(&self) -> bool {
        self.d == 0
    }
}

/// `levels[k]` is the `k`-th difference of `x`.
fn difference_levels(x: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut levels = vec![x.to_vec()];
    for _ in 0..d {
        let prev = levels.last().unwrap();
        levels.push(prev.windows(2).map(|w| w[1] - w[0]).collect());
    }
    levels
}

fn one_step(y: &[f64], e: &[f64], t: usize, phi: &[f64], theta: &[f64], c: f64) -> f64 {
    let mut pred = c;
    for (i, f) in phi.iter().enumerate() {
        pred += f * y[t - 1 - i];
    }
    for (j, th) in theta.iter().enumerate() {
        if t > j {
            pred += th * e[t - 1 - j];
        }
    }
    pred
}

/// Conditional residuals: zero before index `p`, then recursive.
fn residuals(y: &[f64], phi: &[f64], theta: &[f64], c: f64) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; y.len()];
    for t in p..y.len() {
        e[t] = y[t] - one_step(y, &e, t, phi, theta, c);
    }
    e
}

/// Least squares by normal equations and partially pivoted elimination.
/// `None` when the system is numerically singular.
fn least_squares(rows: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first().map_or(0, Vec::len);
    if k == 0 {
        return Some(Vec::new());
    }
    let mut a = vec![vec![0.0; k + 1]; k];
    for (x, y) in rows.iter().zip(target) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += x[i] * x[j];
            }
            a[i][k] += x[i] * y;
        }
    }
    let scale = (0..k).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1.0);
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            for c in col..=k {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][k] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct Coefficients {
    intercept: f64,
    phi: Vec<f64>,
    theta: Vec<f64>,
}

impl Coefficients {
    fn flat(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.phi);
        v.extend(&self.theta);
        v
    }
}

fn regress(y: &[f64], e: &[f64], p: usize, q: usize, intercept: bool) -> Option<Coefficients> {
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for t in p..y.len() {
        let mut row = Vec::with_capacity(intercept as usize + p + q);
        if intercept {
            row.push(1.0);
        }
        row.extend((1..=p).map(|i| y[t - i]));
        row.extend((1..=q).map(|j| if t >= j { e[t - j] } else { 0.0 }));
        rows.push(row);
        target.push(y[t]);
    }
    let beta = least_squares(&rows, &target)?;
    let off = intercept as usize;
    Some(Coefficients {
        intercept: if intercept { beta[0] } else { 0.0 },
        phi: beta[off..off + p].to_vec(),
        theta: beta[off + p..].to_vec(),
    })
}

/// Fits by iterated conditional least squares: residuals start at zero, then
/// alternate between regressing on lagged values and lagged residuals and
/// recomputing residuals, until coefficients move less than `1e-8` or 50
/// iterations pass. Non-convergence returns the last iterate inside the error.
pub fn arima_fit(window: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    let ArimaOrder { p, d, q } = order;
    if window.len() <= d || window.len() - d <= p + q + 5 {
        return Err(Error::InvalidArgument(format!(
            "ARIMA({p},{d},{q}) needs more than {} points, got {}",
            d + p + q + 5,
            window.len()
        )));
    }
    if let Some(v) = window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("ARIMA input {v}")));
    }
    let y = difference_levels(window, d).pop().unwrap();
    let intercept = d == 0;
    let mut model = ArimaModel {
        p,
        d,
        q,
        phi: vec![0.0; p],
        theta: vec![0.0; q],
        intercept: 0.0,
        residual_history: Vec::new(),
        iterations: 0,
        converged: false,
        ar_only_fallback: false,
        zero_fallback: false,
    };
    let finish = |mut m: ArimaModel, c: Coefficients| {
        m.residual_history = residuals(&y, &c.phi, &c.theta, c.intercept);
        m.intercept = c.intercept;
        m.phi = c.phi;
        m.theta = c.theta;
        m
    };
    let ar_only = |mut m: ArimaModel| {
        m.ar_only_fallback = q > 0;
        m.converged = true;
        match regress(&y, &vec![0.0; y.len()], p, 0, intercept) {
            Some(mut c) => {
                c.theta = vec![0.0; q];
                finish(m, c)
            }
            None => {
                m.zero_fallback = true;
                let c = Coefficients {
                    intercept: 0.0,
                    phi: vec![0.0; p],
                    theta: vec![0.0; q],
                };
                finish(m, c)
            }
        }
    };

    let mut e = vec![0.0; y.len()];
    let mut prev: Option<Vec<f64>> = None;
    for iteration in 1..=MAX_ITERATIONS {
        model.iterations = iteration;
        // first pass: residuals are still zero, fit the AR terms only
        let fitted = if iteration == 1 {
            regress(&y, &e, p, 0, intercept).map(|mut c| {
                c.theta = vec![0.0; q];
                c
            })
        } else {
            regress(&y, &e, p, q, intercept)
        };
        let Some(c) = fitted else {
            return Ok(ar_only(model));
        };
        let next_e = residuals(&y, &c.phi, &c.theta, c.intercept);
        if next_e.iter().any(|v| !v.is_finite()) {
            return Ok(ar_only(model));
        }
        let flat = c.flat();
        let settled = q == 0
            || prev
                .as_ref()
                .is_some_and(|old| old.iter().zip(&flat).all(|(a, b)| (a - b).abs() < TOLERANCE));
        if settled {
            model.converged = true;
            return Ok(finish(model, c));
        }
        prev = Some(flat);
        e = next_e;
        model.intercept = c.intercept;
        model.phi = c.phi;
        model.theta = c.theta;
    }
    model.residual_history = e;
    Err(Error::ArimaNotConverged {
        iterations: MAX_ITERATIONS,
        last: Box::new(model),
    })
}

/// [`arima_fit`], keeping the last iterate (with `converged == false`) when
/// the iteration budget runs out.
pub fn arima_fit_or_last(window: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    match arima_fit(window, order) {
        Err(Error::ArimaNotConverged { last, .. }) => Ok(*last),
        other => other,
    }
}

fn check_model(model: &ArimaModel, window: &[f64]) -> Result<()> {
    if model.phi.len() != model.p || model.theta.len() != model.q {
        return Err(Error::InvalidArgument(
            "ARIMA coefficients do not match the orders".into(),
        ));
    }
    if model.phi.iter().chain(&model.theta).any(|v| !v.is_finite()) || !model.intercept.is_finite() {
        return Err(Error::NonFinite("ARIMA coefficients".into()));
    }
    if window.len() <= model.d + model.p {
        return Err(Error::InvalidArgument(format!(
            "window of {} points too short for ARIMA({},{},{})",
            window.len(),
            model.p,
            model.d,
            model.q
        )));
    }
    Ok(())
}

/// One-step price forecast after the window, with the in-sample residuals of
/// the differenced series.
fn forecast_with_residuals(model: &ArimaModel, window: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_model(model, window)?;
    let levels = difference_levels(window, model.d);
    let y = &levels[model.d];
    let c = if model.uses_intercept() { model.intercept } else { 0.0 };
    let e = residuals(y, &model.phi, &model.theta, c);
    let mut value = one_step(y, &e, y.len(), &model.phi, &model.theta, c);
    for k in (0..model.d).rev() {
        value += levels[k].last().unwrap();
    }
    Ok((value, e))
}

/// One-step-ahead price forecast.
pub fn arima_forecast(model: &ArimaModel, window: &[f64]) -> Result<f64> {
    forecast_with_residuals(model, window).map(|(v, _)| v)
}

/// Banded class of the forecast, confidence from the in-sample errors.
pub fn arima_predict(model: &ArimaModel, window: &[f64], neutral_band: f64) -> Result<ClassProbPrediction> {
    let (forecast, e) = forecast_with_residuals(model, window)?;
    let errors: Vec<f64> = e[model.p..].iter().map(|v| v.abs()).collect();
    let c = forecast_confidence(&errors, window)?;
    Ok(point_prediction(forecast, window, neutral_band, c))
}
