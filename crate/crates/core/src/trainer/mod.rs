//! Training loop: a problem, a balancing mode, a base update rule and a
//! plateau scheduler, emitting one trace record per iteration.

mod checkpoint;
mod config;
mod scheduler;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{BaseRule, Mode, SchedulerConfig, Solution1Config, TrainConfig};
pub use scheduler::{PlateauScheduler, PLATEAU_THRESHOLD};

use serde::Serialize;

use crate::balance::improvement_speed;
use crate::error::{ensure_finite, Error, Result};
use crate::optim::{AdaptiveMoments, PlainDescent, UpdateRule};
use crate::problems::{Counted, Problem};
use crate::solution1::{solution1_step, TrajectoryState};
use crate::solution2::solution2_step;
use crate::types::{norm, LossPair, ParamVector, SimplexWeights, SpeedPair, TraceRecord};

/// Work performed by a run, for per-step overhead accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OverheadCounters {
    pub iterations: u64,
    /// Forward passes (with or without gradients).
    pub loss_evals: u64,
    pub grad_evals: u64,
    pub gram_builds: u64,
    pub balanced_directions: u64,
    pub logit_updates: u64,
}

impl OverheadCounters {
    pub fn loss_evals_per_iteration(&self) -> f64 {
        self.loss_evals as f64 / self.iterations.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceRecord>,
    pub counters: OverheadCounters,
    /// Mean training loss `L_R + L_D` per epoch.
    pub epoch_losses: Vec<f64>,
    /// Step size in effect during each epoch.
    pub epoch_step_sizes: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_state(&self) -> Option<TrajectoryState> {
        self.checkpoint.trajectory_state
    }
}

/// Losses of `theta` on the problem's held-out batch.
pub fn evaluate(problem: &dyn Problem, theta: &[f64]) -> Result<LossPair> {
    problem.eval_losses(theta, &problem.eval_batch())
}

fn make_rule(config: &TrainConfig) -> Result<Box<dyn UpdateRule>> {
    Ok(match config.base_rule {
        BaseRule::PlainDescent => Box::new(PlainDescent),
        BaseRule::AdaptiveMoments => Box::new(AdaptiveMoments::new(config.adam_params())?),
    })
}

fn diverged(iteration: u64, err: Error) -> Error {
    match err {
        Error::NonFinite(_) | Error::NonPositiveLoss { .. } => Error::Diverged {
            iteration,
            reason: err.to_string(),
        },
        other => other,
    }
}

/// Train from the problem's seeded initialization (or `fine_tune_from`, when
/// the caller has already loaded it into `start`).
pub fn train(problem: &dyn Problem, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let theta = problem.initial_theta(config.seed);
    run(problem, config, theta, None, 0)
}

/// Resume from a checkpoint. `epochs = 0` returns the checkpoint untouched.
pub fn fine_tune(
    checkpoint: &Checkpoint,
    problem: &dyn Problem,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    checkpoint.check_compatible(problem)?;
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            checkpoint: checkpoint.clone(),
            trace: Vec::new(),
            counters: OverheadCounters::default(),
            epoch_losses: Vec::new(),
            epoch_step_sizes: Vec::new(),
        });
    }
    config.validate()?;
    run(
        problem,
        config,
        checkpoint.theta.clone(),
        checkpoint.trajectory_state,
        checkpoint.epoch,
    )
}

fn run(
    problem: &dyn Problem,
    config: &TrainConfig,
    mut theta: ParamVector,
    resume_state: Option<TrajectoryState>,
    start_epoch: u32,
) -> Result<TrainOutcome> {
    let counted = Counted::new(problem);
    let mut rule = make_rule(config)?;
    let mut scheduler = PlateauScheduler::new(config.scheduler);
    let mut state = match resume_state {
        Some(s) if config.mode == Mode::Solution1 => {
            TrajectoryState::new(s.xi(), config.solution1.beta, config.solution1.gamma)?
        }
        _ => config.solution1.initial_state()?,
    };
    let mut step_size = config.step_size;
    let mut counters = OverheadCounters::default();
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(config.total_iterations() as usize);
    let mut epoch_losses = Vec::with_capacity(config.epochs as usize);
    let mut epoch_step_sizes = Vec::with_capacity(config.epochs as usize);

    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for b in 0..config.batches_per_epoch {
            let iteration = epoch as u64 * config.batches_per_epoch as u64 + b as u64;
            let batch = counted.batch(iteration);
            let mut record = match config.mode {
                Mode::Standard => {
                    let (losses, grads) = counted
                        .eval_with_grads(&theta, &batch)
                        .map_err(|e| diverged(iteration, e))?;
                    let direction: Vec<f64> = grads
                        .rate
                        .iter()
                        .zip(&grads.distortion)
                        .map(|(a, b)| a + b)
                        .collect();
                    ensure_finite(&direction, "gradient sum")
                        .map_err(|e| diverged(iteration, e))?;
                    rule.apply(&mut theta, &direction, step_size)
                        .map_err(|e| diverged(iteration, e))?;
                    TraceRecord {
                        iteration,
                        losses,
                        weights: SimplexWeights::EQUAL,
                        speeds: SpeedPair::default(),
                        direction_norm: norm(&direction),
                        step_size,
                        renorm: None,
                        raw_weights: None,
                        kkt_lambda: None,
                        fallback: false,
                    }
                }
                Mode::Solution1 => {
                    let step = solution1_step(
                        &counted,
                        &batch,
                        &theta,
                        &state,
                        rule.as_mut(),
                        step_size,
                        config.renormalize,
                    )
                    .map_err(|e| diverged(iteration, e))?;
                    counters.balanced_directions += 1;
                    counters.logit_updates += 1;
                    theta = step.theta;
                    state = step.state;
                    step.record
                }
                Mode::Solution2 => {
                    let step = solution2_step(
                        &counted,
                        &batch,
                        &theta,
                        rule.as_mut(),
                        step_size,
                        config.renormalize,
                    )
                    .map_err(|e| diverged(iteration, e))?;
                    counters.gram_builds += 1;
                    counters.balanced_directions += 1;
                    theta = step.theta;
                    step.record
                }
            };
            if let Some(prev) = trace.last() {
                record.speeds = improvement_speed(&prev.losses, &record.losses)?;
            }
            total += record.losses.total();
            counters.iterations += 1;
            trace.push(record);
        }
        let mean = total / config.batches_per_epoch as f64;
        epoch_losses.push(mean);
        epoch_step_sizes.push(step_size);
        step_size = scheduler.step(mean, step_size)?;
    }

    counters.loss_evals = counted.forward_passes();
    counters.grad_evals = counted.backward_passes();
    let trajectory_state = (config.mode == Mode::Solution1).then_some(state);
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(
            problem,
            theta,
            trajectory_state,
            start_epoch + config.epochs,
        ),
        trace,
        counters,
        epoch_losses,
        epoch_step_sizes,
    })
}
