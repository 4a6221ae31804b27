use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{shape_fingerprint, Problem};
use crate::solution1::TrajectoryState;
use crate::types::ParamVector;

pub const CHECKPOINT_FORMAT: &str = "rdbalance-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters plus the trajectory logits when the run had them.
///
/// `fingerprint` identifies the problem's structure (not its trade-off λ),
/// so a checkpoint can seed training at a different λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub problem: String,
    pub dim: usize,
    pub fingerprint: String,
    pub epoch: u32,
    pub theta: ParamVector,
    pub trajectory_state: Option<TrajectoryState>,
}

impl Checkpoint {
    pub fn new(
        problem: &dyn Problem,
        theta: ParamVector,
        trajectory_state: Option<TrajectoryState>,
        epoch: u32,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            problem: problem.name().into(),
            dim: problem.dim(),
            fingerprint: shape_fingerprint(problem),
            epoch,
            theta,
            trajectory_state,
        }
    }

    pub fn check_compatible(&self, problem: &dyn Problem) -> Result<()> {
        let expected = shape_fingerprint(problem);
        if self.fingerprint != expected || self.dim != problem.dim() || self.theta.dim() != self.dim
        {
            return Err(Error::FingerprintMismatch {
                expected,
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        ckpt.theta.validate()?;
        Ok(ckpt)
    }
}
