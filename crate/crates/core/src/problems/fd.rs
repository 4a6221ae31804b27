use super::{Batch, Problem};
use crate::error::{Error, Result};
use crate::types::GradPair;

/// Central finite-difference gradients of both losses.
///
/// The batch (and therefore the quantization-noise draw) is held fixed
/// across the `±step` evaluations.
pub fn fd_oracle(
    problem: &dyn Problem,
    theta: &[f64],
    batch: &Batch<'_>,
    step: f64,
) -> Result<GradPair> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "fd step must be positive, got {step}"
        )));
    }
    let mut probe = theta.to_vec();
    let mut rate = Vec::with_capacity(theta.len());
    let mut distortion = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let x = probe[i];
        probe[i] = x + step;
        let plus = problem.eval_losses(&probe, batch)?;
        probe[i] = x - step;
        let minus = problem.eval_losses(&probe, batch)?;
        probe[i] = x;
        rate.push((plus.rate - minus.rate) / (2.0 * step));
        distortion.push((plus.distortion - minus.distortion) / (2.0 * step));
    }
    GradPair::new(rate, distortion)
}

/// Largest componentwise relative error between two gradient pairs.
///
/// Each component is compared relative to `max(|a|, |b|, 1e-3 · ‖a‖∞)`, so
/// entries that are tiny next to the rest of their vector are judged on the
/// vector's scale.
pub fn max_relative_error(analytic: &GradPair, numeric: &GradPair) -> f64 {
    fn one(a: &[f64], b: &[f64]) -> f64 {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-3 * scale).max(1e-300);
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
            .fold(0.0, f64::max)
    }
    one(&analytic.rate, &numeric.rate).max(one(&analytic.distortion, &numeric.distortion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LossPair, ParamVector};

    /// `L = aᵀθ + floor`, both objectives.
    struct Linear {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl Problem for Linear {
        fn name(&self) -> &str {
            "linear"
        }
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn batch(&self, iteration: u64) -> Batch<'_> {
            Batch::empty(iteration)
        }
        fn eval_losses(&self, theta: &[f64], _: &Batch<'_>) -> Result<LossPair> {
            let f = |w: &[f64]| w.iter().zip(theta).map(|(x, y)| x * y).sum::<f64>() + 10.0;
            LossPair::new(f(&self.a), f(&self.b))
        }
        fn eval_with_grads(
            &self,
            theta: &[f64],
            batch: &Batch<'_>,
        ) -> Result<(LossPair, GradPair)> {
            Ok((
                self.eval_losses(theta, batch)?,
                GradPair::new(self.a.clone(), self.b.clone())?,
            ))
        }
        fn initial_theta(&self, _: u64) -> ParamVector {
            ParamVector::zeros(self.a.len())
        }
        fn shape_descriptor(&self) -> String {
            "linear".into()
        }
    }

    #[test]
    fn linear_loss_is_exact() {
        let p = Linear {
            a: vec![0.5, -2.0, 0.25],
            b: vec![1.0, 4.0, -0.125],
        };
        let theta = [0.0, 0.0, 0.0];
        for step in [1e-1, 1e-3, 1e-5] {
            let g = fd_oracle(&p, &theta, &Batch::empty(0), step).unwrap();
            // only rounding of the loss values remains
            let tol = 4.0 * f64::EPSILON * 16.0 / step;
            for (x, y) in g
                .rate
                .iter()
                .chain(&g.distortion)
                .zip(p.a.iter().chain(&p.b))
            {
                assert!((x - y).abs() <= tol, "{x} vs {y} at step {step}");
            }
        }
    }

    #[test]
    fn rejects_nonpositive_step() {
        let p = Linear {
            a: vec![1.0],
            b: vec![1.0],
        };
        assert!(fd_oracle(&p, &[0.0], &Batch::empty(0), 0.0).is_err());
        assert!(fd_oracle(&p, &[0.0], &Batch::empty(0), -1e-5).is_err());
    }

    #[test]
    fn relative_error_uses_vector_scale_for_tiny_entries() {
        let a = GradPair::new(vec![1.0, 1e-9], vec![2.0, 0.0]).unwrap();
        let b = GradPair::new(vec![1.0, 2e-9], vec![2.0, 1e-8]).unwrap();
        assert!(max_relative_error(&a, &b) < 1e-5);
        let c = GradPair::new(vec![1.1, 0.0], vec![2.0, 0.0]).unwrap();
        assert!((max_relative_error(&a, &c) - 0.1 / 1.1).abs() < 1e-12);
    }
}
