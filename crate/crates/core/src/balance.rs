//! Objective-agnostic balancing primitives: log-gradients, the
//! renormalization constant, the balanced direction and improvement speed.
//!
//! Every function validates its inputs eagerly and never lets a NaN
//! through.

use crate::error::{ensure_finite, Error, Result};
use crate::types::{GradPair, LossPair, SimplexWeights, SpeedPair};

/// `(∇L_R / L_R, ∇L_D / L_D)`.
///
/// The division is by the raw loss. The `+1` log shift used for logit
/// updates does not apply here.
pub fn log_gradients(losses: &LossPair, grads: &GradPair) -> Result<GradPair> {
    losses.validate()?;
    grads.validate()?;
    let scale = |g: &[f64], l: f64| g.iter().map(|v| v / l).collect::<Vec<_>>();
    let out = GradPair {
        rate: scale(&grads.rate, losses.rate),
        distortion: scale(&grads.distortion, losses.distortion),
    };
    // tiny losses can push a finite gradient to infinity
    out.validate()?;
    Ok(out)
}

/// `c = (w_R / L_R + w_D / L_D)^-1`
pub fn renorm_constant(weights: &SimplexWeights, losses: &LossPair) -> Result<f64> {
    losses.validate()?;
    let inv = weights.rate() / losses.rate + weights.distortion() / losses.distortion;
    let c = 1.0 / inv;
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::NonFinite("renormalization constant"));
    }
    Ok(c)
}

/// Coefficients applied to the raw gradients by the balanced direction.
///
/// With renormalization on they are `(c w_R / L_R, c w_D / L_D)` and sum to
/// one. With it off, `c` is replaced by 1.
pub fn raw_coefficients(
    weights: &SimplexWeights,
    losses: &LossPair,
    renormalize: bool,
) -> Result<(f64, f64, f64)> {
    let c = if renormalize {
        renorm_constant(weights, losses)?
    } else {
        losses.validate()?;
        1.0
    };
    let a = c * weights.rate() / losses.rate;
    let b = c * weights.distortion() / losses.distortion;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("direction coefficients"));
    }
    Ok((a, b, c))
}

/// `d = c (w_R ∇log L_R + w_D ∇log L_D)`
pub fn balanced_direction(
    weights: &SimplexWeights,
    losses: &LossPair,
    grads: &GradPair,
) -> Result<Vec<f64>> {
    Ok(balanced_direction_with(weights, losses, grads, true)?.0)
}

/// Balanced direction with optional renormalization. Returns the direction
/// together with the constant that was applied.
pub fn balanced_direction_with(
    weights: &SimplexWeights,
    losses: &LossPair,
    grads: &GradPair,
    renormalize: bool,
) -> Result<(Vec<f64>, f64)> {
    let log_grads = log_gradients(losses, grads)?;
    let c = if renormalize {
        renorm_constant(weights, losses)?
    } else {
        1.0
    };
    let (wr, wd) = (weights.rate(), weights.distortion());
    let d: Vec<f64> = log_grads
        .rate
        .iter()
        .zip(&log_grads.distortion)
        .map(|(r, s)| c * (wr * r + wd * s))
        .collect();
    ensure_finite(&d, "balanced direction")?;
    Ok((d, c))
}

/// `s_i = (L_i,t - L_i,t+1) / L_i,t` on raw losses. Negative when a loss
/// went up.
pub fn improvement_speed(prev: &LossPair, next: &LossPair) -> Result<SpeedPair> {
    prev.validate()?;
    if !(next.rate.is_finite() && next.distortion.is_finite()) {
        return Err(Error::NonFinite("next losses"));
    }
    Ok(SpeedPair {
        rate: (prev.rate - next.rate) / prev.rate,
        distortion: (prev.distortion - next.distortion) / prev.distortion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::norm;
    use proptest::prelude::*;

    fn lp(r: f64, d: f64) -> LossPair {
        LossPair::new(r, d).unwrap()
    }

    fn gp(r: &[f64], d: &[f64]) -> GradPair {
        GradPair::new(r.to_vec(), d.to_vec()).unwrap()
    }

    fn w(r: f64, d: f64) -> SimplexWeights {
        SimplexWeights::new(r, d).unwrap()
    }

    #[test]
    fn log_gradients_examples() {
        let out = log_gradients(&lp(2.0, 4.0), &gp(&[1.0, 0.0], &[0.0, 2.0])).unwrap();
        assert_eq!(out.rate, vec![0.5, 0.0]);
        assert_eq!(out.distortion, vec![0.0, 0.5]);

        let g = gp(&[0.3, -1.7], &[2.5, 0.1]);
        assert_eq!(log_gradients(&lp(1.0, 1.0), &g).unwrap(), g);

        let out = log_gradients(&lp(0.5, 0.25), &gp(&[3.0], &[1.0])).unwrap();
        assert_eq!(out.rate, vec![6.0]);
        assert_eq!(out.distortion, vec![4.0]);
    }

    #[test]
    fn log_gradient_matches_fd_of_log_loss() {
        // 1-parameter quadratics with L = (0.5, 0.25) and L' = (3, 1) at x = 0
        let lr = |x: f64| 0.5 + 3.0 * x + x * x;
        let ld = |x: f64| 0.25 + x + x * x;
        let h = 1e-5;
        let fd = |f: &dyn Fn(f64) -> f64| (f(h).ln() - f(-h).ln()) / (2.0 * h);
        let out = log_gradients(&lp(lr(0.0), ld(0.0)), &gp(&[3.0], &[1.0])).unwrap();
        assert!((out.rate[0] - fd(&lr)).abs() < 1e-6 * 6.0);
        assert!((out.distortion[0] - fd(&ld)).abs() < 1e-6 * 4.0);
    }

    #[test]
    fn log_gradients_rejects_bad_losses() {
        let g = gp(&[1.0], &[1.0]);
        assert!(log_gradients(
            &LossPair {
                rate: 0.0,
                distortion: 1.0
            },
            &g
        )
        .is_err());
        assert!(log_gradients(
            &LossPair {
                rate: 1.0,
                distortion: -2.0
            },
            &g
        )
        .is_err());
        assert!(log_gradients(
            &LossPair {
                rate: f64::NAN,
                distortion: 1.0
            },
            &g
        )
        .is_err());
        let bad = GradPair {
            rate: vec![f64::INFINITY],
            distortion: vec![0.0],
        };
        assert!(log_gradients(&lp(1.0, 1.0), &bad).is_err());
        let ragged = GradPair {
            rate: vec![1.0, 2.0],
            distortion: vec![0.0],
        };
        assert!(log_gradients(&lp(1.0, 1.0), &ragged).is_err());
    }

    #[test]
    fn renorm_constant_examples() {
        assert_eq!(renorm_constant(&w(0.5, 0.5), &lp(1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(renorm_constant(&w(1.0, 0.0), &lp(2.0, 123.0)).unwrap(), 2.0);
        let c = renorm_constant(&w(0.5, 0.5), &lp(2.0, 4.0)).unwrap();
        assert!((c - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_direction_examples() {
        let d =
            balanced_direction(&w(0.5, 0.5), &lp(1.0, 1.0), &gp(&[1.0, 0.0], &[0.0, 1.0])).unwrap();
        assert_eq!(d, vec![0.5, 0.5]);

        let g = gp(&[0.7, -3.1, 11.0], &[5.0, 5.0, 5.0]);
        for losses in [lp(0.01, 9.0), lp(37.0, 0.2), lp(1.0, 1.0)] {
            let d = balanced_direction(&w(1.0, 0.0), &losses, &g).unwrap();
            for (a, b) in d.iter().zip(&g.rate) {
                assert!((a - b).abs() <= 1e-15 * b.abs());
            }
            let d = balanced_direction(&w(0.0, 1.0), &losses, &g).unwrap();
            for (a, b) in d.iter().zip(&g.distortion) {
                assert!((a - b).abs() <= 1e-15 * b.abs());
            }
        }

        // brute force: coefficients (0.5/2)(8/3) = 2/3 and (0.5/4)(8/3) = 1/3
        let d =
            balanced_direction(&w(0.5, 0.5), &lp(2.0, 4.0), &gp(&[1.0, 0.0], &[0.0, 1.0])).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn renorm_off_uses_unit_constant() {
        let (d, c) = balanced_direction_with(
            &w(0.5, 0.5),
            &lp(2.0, 4.0),
            &gp(&[1.0, 0.0], &[0.0, 1.0]),
            false,
        )
        .unwrap();
        assert_eq!(c, 1.0);
        assert_eq!(d, vec![0.25, 0.125]);
    }

    #[test]
    fn improvement_speed_examples() {
        let s = improvement_speed(&lp(1.0, 1.0), &lp(1.0, 1.0)).unwrap();
        assert_eq!((s.rate, s.distortion), (0.0, 0.0));
        let s = improvement_speed(&lp(2.0, 4.0), &lp(1.0, 3.0)).unwrap();
        assert_eq!((s.rate, s.distortion), (0.5, 0.25));
        let s = improvement_speed(&lp(1.0, 1.0), &lp(1.1, 0.5)).unwrap();
        assert!((s.rate + 0.1).abs() < 1e-15);
        assert_eq!(s.distortion, 0.5);
        assert!(improvement_speed(
            &LossPair {
                rate: 0.0,
                distortion: 1.0
            },
            &lp(1.0, 1.0)
        )
        .is_err());
    }

    fn vec_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, m)
    }

    proptest! {
        #[test]
        fn direction_is_convex_combination_of_raw_gradients(
            (gr, gd) in (1usize..12).prop_flat_map(|m| (vec_strategy(m), vec_strategy(m))),
            wr in 0.0..=1.0f64,
            lr in 1e-6..1e6f64,
            ld in 1e-6..1e6f64,
        ) {
            let weights = SimplexWeights::new(wr, 1.0 - wr).unwrap();
            let losses = lp(lr, ld);
            let grads = gp(&gr, &gd);
            let d = balanced_direction(&weights, &losses, &grads).unwrap();
            let (a, b, _) = raw_coefficients(&weights, &losses, true).unwrap();
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!((a + b - 1.0).abs() < 1e-10);
            for i in 0..d.len() {
                let expect = a * gr[i] + b * gd[i];
                let scale = gr[i].abs().max(gd[i].abs()).max(1e-300);
                prop_assert!((d[i] - expect).abs() <= 1e-10 * scale);
            }
            prop_assert!(norm(&d) <= norm(&gr).max(norm(&gd)) * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn log_gradients_are_loss_scale_equivariant(
            g in vec_strategy(4),
            h in vec_strategy(4),
            lr in 1e-3..1e3f64,
            ld in 1e-3..1e3f64,
            c in 1e-3..1e3f64,
        ) {
            let base = log_gradients(&lp(lr, ld), &gp(&g, &h)).unwrap();
            let scaled_g: Vec<f64> = g.iter().map(|v| v * c).collect();
            let scaled_h: Vec<f64> = h.iter().map(|v| v * c).collect();
            let scaled = log_gradients(&lp(c * lr, c * ld), &gp(&scaled_g, &scaled_h)).unwrap();
            for (x, y) in base.rate.iter().chain(&base.distortion)
                .zip(scaled.rate.iter().chain(&scaled.distortion)) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-12));
            }
        }

        #[test]
        fn relabeling_swaps_consistently(
            g in vec_strategy(3),
            h in vec_strategy(3),
            wr in 0.0..=1.0f64,
            lr in 1e-3..1e3f64,
            ld in 1e-3..1e3f64,
        ) {
            let weights = SimplexWeights::new(wr, 1.0 - wr).unwrap();
            let losses = lp(lr, ld);
            let grads = gp(&g, &h);
            let d = balanced_direction(&weights, &losses, &grads).unwrap();
            let e = balanced_direction(&weights.swapped(), &losses.swapped(), &grads.swapped()).unwrap();
            for (x, y) in d.iter().zip(&e) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
