//! Base parameter-update rules. A balancing mode produces a direction, the
//! rule turns it into a parameter step.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::types::ParamVector;

pub trait UpdateRule: Send {
    /// Apply one step along `direction` (treated as a gradient).
    fn apply(&mut self, theta: &mut ParamVector, direction: &[f64], step_size: f64) -> Result<()>;

    fn reset(&mut self) {}
}

/// `θ ← θ − α d`
#[derive(Debug, Clone, Copy, Default)]
pub struct PlainDescent;

impl UpdateRule for PlainDescent {
    fn apply(&mut self, theta: &mut ParamVector, direction: &[f64], step_size: f64) -> Result<()> {
        ensure_finite(direction, "update direction")?;
        theta.axpy(-step_size, direction)?;
        theta.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment rule with bias correction. Moments accumulate on the
/// direction it is handed, whatever mode produced it.
#[derive(Debug, Clone)]
pub struct AdaptiveMoments {
    params: AdamParams,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl AdaptiveMoments {
    pub fn new(params: AdamParams) -> Result<Self> {
        for (name, v) in [("beta1", params.beta1), ("beta2", params.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if !(params.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        Ok(Self {
            params,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

impl UpdateRule for AdaptiveMoments {
    fn apply(&mut self, theta: &mut ParamVector, direction: &[f64], step_size: f64) -> Result<()> {
        ensure_finite(direction, "update direction")?;
        if direction.len() != theta.dim() {
            return Err(Error::DimensionMismatch {
                expected: theta.dim(),
                got: direction.len(),
            });
        }
        if self.first.len() != direction.len() {
            self.first = vec![0.0; direction.len()];
            self.second = vec![0.0; direction.len()];
            self.steps = 0;
        }
        self.steps += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let t = self.steps as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, &g) in direction.iter().enumerate() {
            self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
            self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
            let m_hat = self.first[i] / bc1;
            let v_hat = self.second[i] / bc2;
            theta[i] -= step_size * m_hat / (v_hat.sqrt() + epsilon);
        }
        theta.validate()
    }

    fn reset(&mut self) {
        self.first.clear();
        self.second.clear();
        self.steps = 0;
    }
}
