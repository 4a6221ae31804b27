use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_dim, Batch, Problem};
use crate::error::{ensure_finite, Error, Result};
use crate::types::{GradPair, LossPair, ParamVector};

/// `L_i(θ) = scale_i ‖θ − target_i‖² + floor`
///
/// With very different scales the two objectives pull at very different
/// speeds, which is the situation the balancing modes are meant for.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalancedQuadratic {
    pub scale_rate: f64,
    pub scale_distortion: f64,
    pub target_rate: Vec<f64>,
    pub target_distortion: Vec<f64>,
    pub floor: f64,
    pub init_radius: f64,
}

impl ImbalancedQuadratic {
    /// Conflicting instance: the targets must differ.
    pub fn new(
        scale_rate: f64,
        scale_distortion: f64,
        target_rate: Vec<f64>,
        target_distortion: Vec<f64>,
        floor: f64,
    ) -> Result<Self> {
        if target_rate == target_distortion {
            return Err(Error::InvalidInput(
                "rate and distortion targets coincide; use with_shared_target".into(),
            ));
        }
        Self::build(
            scale_rate,
            scale_distortion,
            target_rate,
            target_distortion,
            floor,
        )
    }

    /// Degenerate instance whose objectives share a minimizer.
    pub fn with_shared_target(
        scale_rate: f64,
        scale_distortion: f64,
        target: Vec<f64>,
        floor: f64,
    ) -> Result<Self> {
        Self::build(scale_rate, scale_distortion, target.clone(), target, floor)
    }

    fn build(
        scale_rate: f64,
        scale_distortion: f64,
        target_rate: Vec<f64>,
        target_distortion: Vec<f64>,
        floor: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("scale_rate", scale_rate),
            ("scale_distortion", scale_distortion),
            ("floor", floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if target_rate.is_empty() || target_rate.len() != target_distortion.len() {
            return Err(Error::DimensionMismatch {
                expected: target_rate.len(),
                got: target_distortion.len(),
            });
        }
        ensure_finite(&target_rate, "target_rate")?;
        ensure_finite(&target_distortion, "target_distortion")?;
        Ok(Self {
            scale_rate,
            scale_distortion,
            target_rate,
            target_distortion,
            floor,
            init_radius: 1.0,
        })
    }

    /// Seeded random instance with `scale_distortion / scale_rate = ratio`.
    /// Targets are drawn uniformly from `[-1, 1]^dim`.
    pub fn random(dim: usize, ratio: f64, floor: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            (0..dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let tr = draw();
        let td = draw();
        Self::new(1.0, ratio, tr, td, floor)
    }

    pub fn with_init_radius(mut self, radius: f64) -> Self {
        self.init_radius = radius;
        self
    }

    fn sq_dist(theta: &[f64], target: &[f64]) -> f64 {
        theta
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl Problem for ImbalancedQuadratic {
    fn name(&self) -> &str {
        "imbalanced_quadratic"
    }

    fn dim(&self) -> usize {
        self.target_rate.len()
    }

    fn batch(&self, iteration: u64) -> Batch<'_> {
        Batch::empty(iteration)
    }

    fn eval_losses(&self, theta: &[f64], _batch: &Batch<'_>) -> Result<LossPair> {
        check_dim(theta, self.dim())?;
        LossPair::new(
            self.scale_rate * Self::sq_dist(theta, &self.target_rate) + self.floor,
            self.scale_distortion * Self::sq_dist(theta, &self.target_distortion) + self.floor,
        )
    }

    fn eval_with_grads(&self, theta: &[f64], batch: &Batch<'_>) -> Result<(LossPair, GradPair)> {
        let losses = self.eval_losses(theta, batch)?;
        let grad = |scale: f64, target: &[f64]| {
            theta
                .iter()
                .zip(target)
                .map(|(a, b)| 2.0 * scale * (a - b))
                .collect::<Vec<_>>()
        };
        let grads = GradPair::new(
            grad(self.scale_rate, &self.target_rate),
            grad(self.scale_distortion, &self.target_distortion),
        )?;
        Ok((losses, grads))
    }

    fn initial_theta(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let r = self.init_radius;
        let v = (0..self.dim())
            .map(|_| if r > 0.0 { rng.gen_range(-r..r) } else { 0.0 })
            .collect();
        ParamVector::new(v).expect("finite draw")
    }

    fn shape_descriptor(&self) -> String {
        format!("imbalanced_quadratic;dim={}", self.dim())
    }
}
