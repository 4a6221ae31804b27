//! Bjøntegaard delta rate with a cubic fit of log-rate against quality.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::RDCurve;
use crate::error::{Error, Result};

/// Curves whose quality ranges overlap by less than this are rejected.
pub const MIN_OVERLAP_DB: f64 = 0.1;
/// Trapezoid spacing along the quality axis.
pub const QUALITY_STEP_DB: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct CubicFit {
    /// Coefficients in the normalized variable `(q − center) / scale`,
    /// constant term first.
    pub coefficients: [f64; 4],
    pub center: f64,
    pub scale: f64,
    /// RMS residual of the fit in natural-log rate units.
    pub residual_rms: f64,
}

impl CubicFit {
    fn eval(&self, quality: f64) -> f64 {
        let x = (quality - self.center) / self.scale;
        let c = &self.coefficients;
        ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BdRateReport {
    pub anchor: String,
    pub test: String,
    pub bd_rate_percent: f64,
    pub overlap_db: [f64; 2],
    pub samples: usize,
    pub anchor_fit: CubicFit,
    pub test_fit: CubicFit,
}

fn fit_log_rate(curve: &RDCurve, center: f64, scale: f64) -> Result<CubicFit> {
    let pts = curve.points();
    let n = pts.len();
    let design = DMatrix::from_fn(n, 4, |i, j| {
        ((pts[i].quality - center) / scale).powi(j as i32)
    });
    let target = DVector::from_iterator(n, pts.iter().map(|p| p.rate.ln()));
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&target, 1e-14)
        .map_err(|e| Error::InvalidCurve(format!("{}: cubic fit failed: {e}", curve.label())))?;
    let resid = &design * &coef - &target;
    let coefficients = [coef[0], coef[1], coef[2], coef[3]];
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidCurve(format!(
            "{}: degenerate cubic fit",
            curve.label()
        )));
    }
    Ok(CubicFit {
        coefficients,
        center,
        scale,
        residual_rms: (resid.norm_squared() / n as f64).sqrt(),
    })
}

fn trapezoid(fit: &CubicFit, lo: f64, hi: f64, intervals: usize) -> f64 {
    let h = (hi - lo) / intervals as f64;
    let mut acc = 0.5 * (fit.eval(lo) + fit.eval(hi));
    for i in 1..intervals {
        acc += fit.eval(lo + i as f64 * h);
    }
    acc * h
}

/// Average rate difference of `test` against `anchor` at equal quality, in
/// percent. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RDCurve, test: &RDCurve) -> Result<f64> {
    Ok(bd_rate_report(anchor, test)?.bd_rate_percent)
}

pub fn bd_rate_report(anchor: &RDCurve, test: &RDCurve) -> Result<BdRateReport> {
    anchor.check_monotone_quality()?;
    test.check_monotone_quality()?;
    let (a_lo, a_hi) = anchor.quality_range();
    let (t_lo, t_hi) = test.quality_range();
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if !(hi - lo >= MIN_OVERLAP_DB) {
        return Err(Error::InvalidCurve(format!(
            "no quality overlap between {} and {} (need at least {MIN_OVERLAP_DB} dB)",
            anchor.label(),
            test.label()
        )));
    }
    // one normalization for both curves keeps the fits comparable
    let center = 0.5 * (a_lo.min(t_lo) + a_hi.max(t_hi));
    let scale = (0.5 * (a_hi.max(t_hi) - a_lo.min(t_lo))).max(1e-12);
    let anchor_fit = fit_log_rate(anchor, center, scale)?;
    let test_fit = fit_log_rate(test, center, scale)?;

    let intervals = ((hi - lo) / QUALITY_STEP_DB).ceil().max(1.0) as usize;
    let area_a = trapezoid(&anchor_fit, lo, hi, intervals);
    let area_t = trapezoid(&test_fit, lo, hi, intervals);
    let mean_diff = (area_t - area_a) / (hi - lo);
    let bd = (mean_diff.exp() - 1.0) * 100.0;
    if !bd.is_finite() {
        return Err(Error::InvalidCurve("bd-rate is not finite".into()));
    }
    Ok(BdRateReport {
        anchor: anchor.label().to_string(),
        test: test.label().to_string(),
        bd_rate_percent: bd,
        overlap_db: [lo, hi],
        samples: intervals + 1,
        anchor_fit,
        test_fit,
    })
}
