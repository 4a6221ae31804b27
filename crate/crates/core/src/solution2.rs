//! Per-iteration closed-form weights from the equality-constrained QP
//! `min ½ wᵀQw  s.t.  w_R + w_D = 1`, followed by a softmax projection.

use serde::{Deserialize, Serialize};

use crate::balance::{balanced_direction_with, log_gradients};
use crate::error::{ensure_finite, Error, Result};
use crate::optim::UpdateRule;
use crate::problems::{Batch, Problem};
use crate::types::{dot, norm, GradPair, ParamVector, SimplexWeights, SpeedPair, TraceRecord};

/// Relative determinant threshold: Q is singular when
/// `q11 q22 − q12² ≤ SINGULAR_REL · q11 q22`.
pub const SINGULAR_REL: f64 = 1e-12;

/// Gram matrix of the two log-gradients (upper triangle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub q11: f64,
    pub q22: f64,
    pub q12: f64,
}

impl GramMatrix {
    pub fn det(&self) -> f64 {
        self.q11 * self.q22 - self.q12 * self.q12
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.q11 * self.q11 + self.q22 * self.q22 + 2.0 * self.q12 * self.q12).sqrt()
    }

    pub fn is_singular(&self) -> bool {
        !(self.det() > SINGULAR_REL * self.q11 * self.q22)
    }

    /// `½ wᵀ Q w`
    pub fn objective(&self, w: [f64; 2]) -> f64 {
        0.5 * (self.q11 * w[0] * w[0] + 2.0 * self.q12 * w[0] * w[1] + self.q22 * w[1] * w[1])
    }

    pub fn apply(&self, w: [f64; 2]) -> [f64; 2] {
        [
            self.q11 * w[0] + self.q12 * w[1],
            self.q12 * w[0] + self.q22 * w[1],
        ]
    }
}

pub fn gram(log_grads: &GradPair) -> Result<GramMatrix> {
    log_grads.validate()?;
    let q = GramMatrix {
        q11: dot(&log_grads.rate, &log_grads.rate),
        q22: dot(&log_grads.distortion, &log_grads.distortion),
        q12: dot(&log_grads.rate, &log_grads.distortion),
    };
    ensure_finite(&[q.q11, q.q22, q.q12], "gram matrix")?;
    Ok(q)
}

/// KKT solution of the equality-constrained QP. Components sum to one but
/// may be negative: dual feasibility is not enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub weights: [f64; 2],
    /// Multiplier of the equality constraint, `1 / (1ᵀ Q⁻¹ 1)`.
    pub kkt_lambda: f64,
}

/// `w = Q⁻¹1 / (1ᵀQ⁻¹1)` via the 2×2 adjugate.
pub fn qp_weights(q: &GramMatrix) -> Result<QpSolution> {
    ensure_finite(&[q.q11, q.q22, q.q12], "gram matrix")?;
    let det = q.det();
    if q.is_singular() {
        return Err(Error::SingularGram { det });
    }
    // Q⁻¹1 = (q22 − q12, q11 − q12) / det; the det cancels in w.
    let u = [q.q22 - q.q12, q.q11 - q.q12];
    let sum = u[0] + u[1];
    let w_rate = u[0] / sum;
    let weights = [w_rate, 1.0 - w_rate];
    let kkt_lambda = det / sum;
    if !(w_rate.is_finite() && kkt_lambda.is_finite()) {
        return Err(Error::SingularGram { det });
    }
    Ok(QpSolution {
        weights,
        kkt_lambda,
    })
}

pub fn project_simplex_softmax(raw: [f64; 2]) -> Result<SimplexWeights> {
    SimplexWeights::softmax(raw[0], raw[1])
}

#[derive(Debug, Clone)]
pub struct Solution2Step {
    pub theta: ParamVector,
    pub record: TraceRecord,
    pub gram: GramMatrix,
}

/// One iteration: losses, gradients, log-gradients, Gram matrix, QP
/// weights, softmax projection, balanced direction, parameter step.
///
/// A singular Gram matrix falls back to equal weights and sets
/// `record.fallback`.
pub fn solution2_step(
    problem: &dyn Problem,
    batch: &Batch<'_>,
    theta: &ParamVector,
    rule: &mut dyn UpdateRule,
    step_size: f64,
    renormalize: bool,
) -> Result<Solution2Step> {
    let (losses, grads) = problem.eval_with_grads(theta, batch)?;
    let log_grads = log_gradients(&losses, &grads)?;
    let q = gram(&log_grads)?;
    let (weights, raw, kkt_lambda, fallback) = match qp_weights(&q) {
        Ok(sol) => (
            project_simplex_softmax(sol.weights)?,
            Some(sol.weights),
            Some(sol.kkt_lambda),
            false,
        ),
        Err(Error::SingularGram { .. }) => (SimplexWeights::EQUAL, None, None, true),
        Err(e) => return Err(e),
    };
    let (direction, renorm) = balanced_direction_with(&weights, &losses, &grads, renormalize)?;
    let mut next_theta = theta.clone();
    rule.apply(&mut next_theta, &direction, step_size)?;
    let record = TraceRecord {
        iteration: batch.iteration,
        losses,
        weights,
        speeds: SpeedPair::default(),
        direction_norm: norm(&direction),
        step_size,
        renorm: Some(renorm),
        raw_weights: raw,
        kkt_lambda,
        fallback,
    };
    Ok(Solution2Step {
        theta: next_theta,
        record,
        gram: q,
    })
}
