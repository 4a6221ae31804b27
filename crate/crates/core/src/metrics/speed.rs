use serde::Serialize;

use crate::balance::improvement_speed;
use crate::error::{Error, Result};
use crate::types::{SpeedPair, TraceRecord};

/// Improvement speeds between consecutive records; `n` records give
/// `n − 1` entries.
pub fn speed_trace(trace: &[TraceRecord]) -> Result<Vec<SpeedPair>> {
    trace
        .windows(2)
        .map(|w| improvement_speed(&w[0].losses, &w[1].losses))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl SeriesStats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceGap {
    /// Statistics of `|s_R − s_D|`.
    pub gap: SeriesStats,
    pub rate: SeriesStats,
    pub distortion: SeriesStats,
    pub window: usize,
}

/// Summary statistics over the last `window` entries (all when `None`).
pub fn balance_gap(series: &[SpeedPair], window: Option<usize>) -> Result<BalanceGap> {
    if series.is_empty() {
        return Err(Error::InvalidInput(
            "balance_gap needs a nonempty series".into(),
        ));
    }
    let window = window.unwrap_or(series.len()).clamp(1, series.len());
    let tail = &series[series.len() - window..];
    Ok(BalanceGap {
        gap: SeriesStats::of(tail.iter().map(|s| (s.rate - s.distortion).abs())),
        rate: SeriesStats::of(tail.iter().map(|s| s.rate)),
        distortion: SeriesStats::of(tail.iter().map(|s| s.distortion)),
        window,
    })
}

/// Exponential moving average, `y_t = f y_{t−1} + (1 − f) x_t`, seeded
/// with the first value.
pub fn ema(values: &[f64], factor: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = None;
    for &v in values {
        let next = match acc {
            None => v,
            Some(prev) => factor * prev + (1.0 - factor) * v,
        };
        acc = Some(next);
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LossPair, SimplexWeights};

    fn record(iteration: u64, rate: f64, distortion: f64) -> TraceRecord {
        TraceRecord {
            iteration,
            losses: LossPair::new(rate, distortion).unwrap(),
            weights: SimplexWeights::EQUAL,
            speeds: SpeedPair::default(),
            direction_norm: 0.0,
            step_size: 0.1,
            renorm: None,
            raw_weights: None,
            kkt_lambda: None,
            fallback: false,
        }
    }

    #[test]
    fn constant_losses_give_zero_speed() {
        let trace: Vec<_> = (0..5).map(|i| record(i, 2.0, 3.0)).collect();
        let s = speed_trace(&trace).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|p| p.rate == 0.0 && p.distortion == 0.0));
    }

    #[test]
    fn halving_losses_give_half_speed() {
        let trace: Vec<_> = (0..6)
            .map(|i| record(i, 8.0 * 0.5f64.powi(i as i32), 0.5f64.powi(i as i32)))
            .collect();
        let s = speed_trace(&trace).unwrap();
        assert!(s.iter().all(|p| p.rate == 0.5 && p.distortion == 0.5));
    }

    #[test]
    fn fixture_trace_speeds() {
        // values recomputed by hand: (L_t - L_{t+1}) / L_t
        let trace = vec![
            record(0, 4.0, 10.0),
            record(1, 3.0, 9.0),
            record(2, 3.3, 6.0),
        ];
        let s = speed_trace(&trace).unwrap();
        assert_eq!(
            s[0],
            SpeedPair {
                rate: 0.25,
                distortion: 0.1
            }
        );
        assert!((s[1].rate + 0.1).abs() < 1e-15);
        assert!((s[1].distortion - 1.0 / 3.0).abs() < 1e-15);
        assert!(speed_trace(&trace[..1]).unwrap().is_empty());
    }

    #[test]
    fn gap_statistics() {
        let same = vec![
            SpeedPair {
                rate: 0.3,
                distortion: 0.3
            };
            7
        ];
        let g = balance_gap(&same, None).unwrap();
        assert_eq!((g.gap.mean, g.gap.std), (0.0, 0.0));

        let opposed = vec![
            SpeedPair {
                rate: 0.2,
                distortion: -0.2
            };
            7
        ];
        let g = balance_gap(&opposed, Some(3)).unwrap();
        assert!((g.gap.mean - 0.4).abs() < 1e-15);
        assert!(g.gap.std < 1e-15);
        assert_eq!(g.window, 3);
        assert!(balance_gap(&[], None).is_err());
    }

    #[test]
    fn ema_smoothing() {
        assert_eq!(ema(&[1.0, 0.0, 0.0], 0.5), vec![1.0, 0.5, 0.25]);
        assert!(ema(&[], 0.9).is_empty());
    }
}
