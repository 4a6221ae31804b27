//! Trajectory-based balancing: softmax logits over the two objectives are
//! nudged once per training step by the observed per-objective log-loss
//! drop.

use serde::{Deserialize, Serialize};

use crate::balance::{balanced_direction_with, improvement_speed};
use crate::error::{Error, Result};
use crate::optim::UpdateRule;
use crate::problems::{Batch, Problem};
use crate::types::{norm, LossPair, ParamVector, SimplexWeights, SpeedPair, TraceRecord};

pub const DEFAULT_BETA: f64 = 0.025;
pub const DEFAULT_GAMMA: f64 = 0.001;

/// Softmax logits plus their learning rate and decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    xi: [f64; 2],
    beta: f64,
    gamma: f64,
}

impl Default for TrajectoryState {
    fn default() -> Self {
        Self {
            xi: [0.0, 0.0],
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl TrajectoryState {
    pub fn new(xi: [f64; 2], beta: f64, gamma: f64) -> Result<Self> {
        if !(xi[0].is_finite() && xi[1].is_finite()) {
            return Err(Error::NonFinite("softmax logits"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        Ok(Self { xi, beta, gamma })
    }

    pub fn xi(&self) -> [f64; 2] {
        self.xi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn swapped(&self) -> Self {
        Self {
            xi: [self.xi[1], self.xi[0]],
            ..*self
        }
    }
}

pub fn weights_of(state: &TrajectoryState) -> SimplexWeights {
    SimplexWeights::softmax(state.xi[0], state.xi[1]).expect("state logits are finite")
}

/// `∂w/∂ξ = diag(w) − w wᵀ`
pub fn softmax_jacobian(w: &SimplexWeights) -> [[f64; 2]; 2] {
    let (a, b) = (w.rate(), w.distortion());
    [[a * (1.0 - a), -a * b], [-a * b, b * (1.0 - b)]]
}

/// Per-objective drop in `log(1 + L)` between two evaluations.
pub fn shifted_log_drop(prev: &LossPair, next: &LossPair) -> Result<[f64; 2]> {
    prev.validate()?;
    next.validate()?;
    let drop = [
        prev.rate.ln_1p() - next.rate.ln_1p(),
        prev.distortion.ln_1p() - next.distortion.ln_1p(),
    ];
    if !(drop[0].is_finite() && drop[1].is_finite()) {
        return Err(Error::NonFinite("log-loss drop"));
    }
    Ok(drop)
}

/// `δ = S(w)ᵀ Δ`, with the Jacobian at the weights the step used.
pub fn logit_gradient(state: &TrajectoryState, drop: [f64; 2]) -> [f64; 2] {
    let s = softmax_jacobian(&weights_of(state));
    [
        s[0][0] * drop[0] + s[1][0] * drop[1],
        s[0][1] * drop[0] + s[1][1] * drop[1],
    ]
}

/// `ξ ← ξ − β(δ + γ ξ)`
pub fn logit_update(
    state: &TrajectoryState,
    prev: &LossPair,
    next: &LossPair,
) -> Result<TrajectoryState> {
    let drop = shifted_log_drop(prev, next)?;
    Ok(apply_logit_gradient(state, logit_gradient(state, drop)))
}

fn apply_logit_gradient(state: &TrajectoryState, delta: [f64; 2]) -> TrajectoryState {
    let mut next = *state;
    for i in 0..2 {
        next.xi[i] = state.xi[i] - state.beta * (delta[i] + state.gamma * state.xi[i]);
    }
    next
}

/// Outcome of one trajectory step.
#[derive(Debug, Clone)]
pub struct Solution1Step {
    pub theta: ParamVector,
    pub state: TrajectoryState,
    pub record: TraceRecord,
    /// Losses at the new parameters on the same batch.
    pub next_losses: LossPair,
    pub delta: [f64; 2],
}

/// One full iteration: losses and gradients at θ, balanced direction under
/// the current weights, parameter step, a second forward pass on the same
/// batch, then the logit update.
pub fn solution1_step(
    problem: &dyn Problem,
    batch: &Batch<'_>,
    theta: &ParamVector,
    state: &TrajectoryState,
    rule: &mut dyn UpdateRule,
    step_size: f64,
    renormalize: bool,
) -> Result<Solution1Step> {
    let weights = weights_of(state);
    let (losses, grads) = problem.eval_with_grads(theta, batch)?;
    let (direction, renorm) = balanced_direction_with(&weights, &losses, &grads, renormalize)?;

    let mut next_theta = theta.clone();
    rule.apply(&mut next_theta, &direction, step_size)?;

    let next_losses = problem.eval_losses(&next_theta, batch)?;
    let drop = shifted_log_drop(&losses, &next_losses)?;
    let delta = logit_gradient(state, drop);
    let next_state = apply_logit_gradient(state, delta);

    let record = TraceRecord {
        iteration: batch.iteration,
        losses,
        weights,
        speeds: SpeedPair::default(),
        direction_norm: norm(&direction),
        step_size,
        renorm: Some(renorm),
        raw_weights: None,
        kkt_lambda: None,
        fallback: false,
    };
    Ok(Solution1Step {
        theta: next_theta,
        state: next_state,
        record,
        next_losses,
        delta,
    })
}

/// Same-batch improvement speed of a trajectory step.
pub fn step_speed(step: &Solution1Step) -> Result<SpeedPair> {
    improvement_speed(&step.record.losses, &step.next_losses)
}
