//! Interference-aware throughput analysis and channel-fading threshold control
//! for UAV and ground nodes sharing unlicensed spectrum.
//!
//! The analytic pipeline runs geometry -> channel -> queueing/interference ->
//! throughput, the optimizers in [`policy_opt`] drive it, and [`simcheck`]
//! replays the same network slot by slot as an independent check.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod interference;
pub mod numerics;
pub mod policy_opt;
pub mod queueing;
pub mod scenario;
pub mod simcheck;
pub mod throughput;

pub use error::{Error, Result};
pub use scenario::{Network, Scenario};
pub use throughput::{Evaluator, LossBreakdown};

/// Rounds `x` to 12 significant digits, the precision used for reported numbers.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}
