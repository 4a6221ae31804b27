//! Differentiable two-objective test problems with analytic gradients.

mod codec;
mod fd;
mod patches;
mod quadratic;

use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

pub use codec::{ToyCodecConfig, ToyCodecProblem};
pub use fd::{fd_oracle, max_relative_error};
pub use patches::{make_patch_batch, Patch};
pub use quadratic::ImbalancedQuadratic;

use crate::error::Result;
use crate::types::{GradPair, LossPair, ParamVector};

/// Added to the rate NLL so the rate loss is strictly positive.
pub const RATE_FLOOR: f64 = 1e-6;

/// One iteration's data. `iteration` also keys the quantization-noise
/// stream, so every evaluation on the same batch sees the same noise.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub patches: &'a [Patch],
    pub iteration: u64,
}

impl Batch<'static> {
    pub fn empty(iteration: u64) -> Self {
        Batch {
            patches: &[],
            iteration,
        }
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Training batch for `iteration`.
    fn batch(&self, iteration: u64) -> Batch<'_>;

    /// Held-out batch used for final evaluation.
    fn eval_batch(&self) -> Batch<'_> {
        self.batch(u64::MAX)
    }

    /// Forward pass only.
    fn eval_losses(&self, theta: &[f64], batch: &Batch<'_>) -> Result<LossPair>;

    /// Forward and backward pass.
    fn eval_with_grads(&self, theta: &[f64], batch: &Batch<'_>) -> Result<(LossPair, GradPair)>;

    fn initial_theta(&self, seed: u64) -> ParamVector;

    /// Structural description (no trade-off or seed values) used to check
    /// that a checkpoint fits this problem.
    fn shape_descriptor(&self) -> String;

    /// Reconstruction quality in dB for problems that have one.
    fn quality_db(&self, _losses: &LossPair) -> Option<f64> {
        None
    }
}

pub fn eval_grads(problem: &dyn Problem, theta: &[f64], batch: &Batch<'_>) -> Result<GradPair> {
    Ok(problem.eval_with_grads(theta, batch)?.1)
}

/// Hash of the problem's structural descriptor.
pub fn shape_fingerprint(problem: &dyn Problem) -> String {
    let digest = Sha256::digest(problem.shape_descriptor().as_bytes());
    hex::encode(&digest[..16])
}

/// Counts forward and backward passes through the wrapped problem.
pub struct Counted<'p> {
    inner: &'p dyn Problem,
    forward: AtomicU64,
    backward: AtomicU64,
}

impl<'p> Counted<'p> {
    pub fn new(inner: &'p dyn Problem) -> Self {
        Self {
            inner,
            forward: AtomicU64::new(0),
            backward: AtomicU64::new(0),
        }
    }

    /// Loss evaluations (forward passes), with or without gradients.
    pub fn forward_passes(&self) -> u64 {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn backward_passes(&self) -> u64 {
        self.backward.load(Ordering::Relaxed)
    }
}

impl Problem for Counted<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn batch(&self, iteration: u64) -> Batch<'_> {
        self.inner.batch(iteration)
    }

    fn eval_batch(&self) -> Batch<'_> {
        self.inner.eval_batch()
    }

    fn eval_losses(&self, theta: &[f64], batch: &Batch<'_>) -> Result<LossPair> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.eval_losses(theta, batch)
    }

    fn eval_with_grads(&self, theta: &[f64], batch: &Batch<'_>) -> Result<(LossPair, GradPair)> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.backward.fetch_add(1, Ordering::Relaxed);
        self.inner.eval_with_grads(theta, batch)
    }

    fn initial_theta(&self, seed: u64) -> ParamVector {
        self.inner.initial_theta(seed)
    }

    fn shape_descriptor(&self) -> String {
        self.inner.shape_descriptor()
    }

    fn quality_db(&self, losses: &LossPair) -> Option<f64> {
        self.inner.quality_db(losses)
    }
}

pub(crate) fn check_dim(theta: &[f64], dim: usize) -> Result<()> {
    if theta.len() != dim {
        return Err(crate::error::Error::DimensionMismatch {
            expected: dim,
            got: theta.len(),
        });
    }
    crate::error::ensure_finite(theta, "parameters")
}
