use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamParams;
use crate::solution1::{TrajectoryState, DEFAULT_BETA, DEFAULT_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `d = ∇L_R + ∇L_D`
    Standard,
    Solution1,
    Solution2,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Solution1 => "solution1",
            Mode::Solution2 => "solution2",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "solution1" => Ok(Mode::Solution1),
            "solution2" => Ok(Mode::Solution2),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseRule {
    PlainDescent,
    AdaptiveMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchedulerConfig {
    None,
    ReduceOnPlateau { patience: u32, factor: f64 },
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig::ReduceOnPlateau {
            patience: 10,
            factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solution1Config {
    pub beta: f64,
    pub gamma: f64,
    pub xi0: [f64; 2],
}

impl Default for Solution1Config {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            xi0: [0.0, 0.0],
        }
    }
}

impl Solution1Config {
    pub fn initial_state(&self) -> Result<TrajectoryState> {
        TrajectoryState::new(self.xi0, self.beta, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub base_rule: BaseRule,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: u32,
    pub batches_per_epoch: u32,
    pub scheduler: SchedulerConfig,
    pub seed: u64,
    pub solution1: Solution1Config,
    /// Scale the balanced direction by the renormalization constant.
    pub renormalize: bool,
    pub fine_tune_from: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Standard,
            base_rule: BaseRule::AdaptiveMoments,
            step_size: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 200,
            batches_per_epoch: 8,
            scheduler: SchedulerConfig::default(),
            seed: 0,
            solution1: Solution1Config::default(),
            renormalize: true,
            fine_tune_from: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batches_per_epoch == 0 {
            return Err(Error::Config("batches_per_epoch must be at least 1".into()));
        }
        if let SchedulerConfig::ReduceOnPlateau { patience, factor } = self.scheduler {
            if patience < 1 {
                return Err(Error::Config("patience must be at least 1".into()));
            }
            if !(factor > 0.0 && factor < 1.0) {
                return Err(Error::Config(format!(
                    "factor must lie in (0, 1), got {factor}"
                )));
            }
        }
        self.solution1
            .initial_state()
            .map_err(|e| Error::Config(format!("solution1: {e}")))?;
        Ok(())
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamParams::default()
        }
    }

    /// Fine-tuning preset derived from a from-scratch config: closed-form
    /// weights, half the step size, a quarter of the epochs.
    pub fn fine_tune_preset(base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            mode: Mode::Solution2,
            step_size: base.step_size * 0.5,
            epochs: (base.epochs / 4).max(1),
            fine_tune_from: None,
            ..base.clone()
        }
    }

    pub fn total_iterations(&self) -> u64 {
        self.epochs as u64 * self.batches_per_epoch as u64
    }
}
