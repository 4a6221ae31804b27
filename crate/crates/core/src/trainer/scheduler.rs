use crate::error::Result;

use super::config::SchedulerConfig;

/// Relative improvement needed for an epoch to count as better.
pub const PLATEAU_THRESHOLD: f64 = 1e-4;

/// Multiplies the step size by `factor` once the monitored value has failed
/// to improve for more than `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    config: SchedulerConfig,
    best: f64,
    bad_epochs: u32,
}

impl PlateauScheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Self {
            config,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feed one epoch's metric; returns the step size for the next epoch.
    pub fn step(&mut self, metric: f64, step_size: f64) -> Result<f64> {
        let SchedulerConfig::ReduceOnPlateau { patience, factor } = self.config else {
            return Ok(step_size);
        };
        if metric < self.best * (1.0 - PLATEAU_THRESHOLD) {
            self.best = metric;
            self.bad_epochs = 0;
            return Ok(step_size);
        }
        self.bad_epochs += 1;
        if self.bad_epochs > patience {
            self.bad_epochs = 0;
            return Ok(step_size * factor);
        }
        Ok(step_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_every_two_flat_epochs_with_patience_one() {
        let mut s = PlateauScheduler::new(SchedulerConfig::ReduceOnPlateau {
            patience: 1,
            factor: 0.5,
        });
        let mut lr = 1.0;
        let mut history = Vec::new();
        for _ in 0..7 {
            lr = s.step(3.0, lr).unwrap();
            history.push(lr);
        }
        // first epoch sets the best value; then every second flat epoch halves
        assert_eq!(history, vec![1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.125]);
    }

    #[test]
    fn improving_metric_never_reduces() {
        let mut s = PlateauScheduler::new(SchedulerConfig::ReduceOnPlateau {
            patience: 2,
            factor: 0.1,
        });
        let mut lr = 0.01;
        for k in 0..20 {
            lr = s.step(10.0 - k as f64 * 0.1, lr).unwrap();
        }
        assert_eq!(lr, 0.01);
    }

    #[test]
    fn disabled_scheduler_is_inert() {
        let mut s = PlateauScheduler::new(SchedulerConfig::None);
        assert_eq!(s.step(1.0, 0.3).unwrap(), 0.3);
        assert_eq!(s.step(5.0, 0.3).unwrap(), 0.3);
    }
}
