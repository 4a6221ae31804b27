//! Post-hoc analysis of traces and rate-distortion curves.

mod bdrate;
mod curve;
mod speed;

pub use bdrate::{bd_rate, bd_rate_report, BdRateReport, MIN_OVERLAP_DB, QUALITY_STEP_DB};
pub use curve::{read_curve_csv, write_curve_csv, RDCurve, RDPoint};
pub use speed::{balance_gap, ema, speed_trace, BalanceGap, SeriesStats};

/// `10 log10(peak² / mse)`; `+∞` when `mse` is zero.
pub fn psnr(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (peak * peak / mse).log10()
}
