//! Volatility-aware CNN-Transformer classifier for the sign of the next price
//! move, with ARIMA, EMA and constant baselines and an evaluation harness.

// `!(x > 0.0)` rejects NaN as well; indexed loops mirror the math
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::single_range_in_vec_init
)]

pub mod baselines;
pub mod cli;
pub mod data;
mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
mod parallel;
pub mod training;

pub use error::{Error, Result};
