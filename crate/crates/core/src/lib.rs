//! Balanced rate-distortion optimization.
//!
//! Rate and distortion are treated as two objectives whose log-gradients are
//! combined with simplex weights, so both losses improve at comparable
//! relative speed. Two weighting schemes are provided: a trajectory scheme
//! that nudges softmax logits once per step ([`solution1`]) and a closed-form
//! equality-constrained QP solved every step ([`solution2`]). The
//! [`trainer`] composes either with a base update rule, and [`metrics`]
//! covers improvement-speed analysis and BD-Rate.

// Comparisons are written `!(x > y)` so that NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod balance;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod optim;
pub mod problems;
pub mod solution1;
pub mod solution2;
pub mod trainer;
pub mod types;

pub use balance::{balanced_direction, improvement_speed, log_gradients, renorm_constant};
pub use error::{Error, Result};
pub use types::{GradPair, LossPair, ParamVector, SimplexWeights, SpeedPair, TraceRecord};
