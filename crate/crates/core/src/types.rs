//! Numeric value types shared by every balancing mode.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Tolerance on `w_rate + w_distortion = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Rate and distortion loss at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub rate: f64,
    pub distortion: f64,
}

impl LossPair {
    pub fn new(rate: f64, distortion: f64) -> Result<Self> {
        let pair = Self { rate, distortion };
        pair.validate()?;
        Ok(pair)
    }

    /// Both losses finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (which, value) in [("rate", self.rate), ("distortion", self.distortion)] {
            if !value.is_finite() {
                return Err(Error::NonFinite(which));
            }
            if value <= 0.0 {
                return Err(Error::NonPositiveLoss { which, value });
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.rate + self.distortion
    }

    pub fn swapped(&self) -> Self {
        Self {
            rate: self.distortion,
            distortion: self.rate,
        }
    }
}

/// Flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure_finite(&values, "parameter vector")?;
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&self.0, "parameter vector")
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &[f64]) -> Result<()> {
        if other.len() != self.0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.0.len(),
                got: other.len(),
            });
        }
        for (p, o) in self.0.iter_mut().zip(other) {
            *p += scale * o;
        }
        Ok(())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

/// Gradients of the two objectives over the same parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradPair {
    pub rate: Vec<f64>,
    pub distortion: Vec<f64>,
}

impl GradPair {
    pub fn new(rate: Vec<f64>, distortion: Vec<f64>) -> Result<Self> {
        let pair = Self { rate, distortion };
        pair.validate()?;
        Ok(pair)
    }

    pub fn dim(&self) -> usize {
        self.rate.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate.len() != self.distortion.len() {
            return Err(Error::DimensionMismatch {
                expected: self.rate.len(),
                got: self.distortion.len(),
            });
        }
        ensure_finite(&self.rate, "rate gradient")?;
        ensure_finite(&self.distortion, "distortion gradient")
    }

    pub fn swapped(&self) -> Self {
        Self {
            rate: self.distortion.clone(),
            distortion: self.rate.clone(),
        }
    }
}

/// A point on the two-element probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct SimplexWeights {
    rate: f64,
    distortion: f64,
}

impl SimplexWeights {
    pub const EQUAL: SimplexWeights = SimplexWeights {
        rate: 0.5,
        distortion: 0.5,
    };

    pub fn new(rate: f64, distortion: f64) -> Result<Self> {
        if !(rate.is_finite() && distortion.is_finite()) {
            return Err(Error::NonFinite("simplex weights"));
        }
        if rate < 0.0 || distortion < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative simplex weight ({rate}, {distortion})"
            )));
        }
        if (rate + distortion - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "simplex weights sum to {} (expected 1)",
                rate + distortion
            )));
        }
        Ok(Self { rate, distortion })
    }

    /// Softmax of two logits, computed with max-subtraction.
    pub fn softmax(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NonFinite("softmax logits"));
        }
        // Writing the smaller component as e/(1+e) with e <= 1 keeps the
        // sum within one ulp of 1.
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        let e = (lo - hi).exp();
        let small = e / (1.0 + e);
        let large = 1.0 - small;
        let (rate, distortion) = if a >= b {
            (large, small)
        } else {
            (small, large)
        };
        Ok(Self { rate, distortion })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn swapped(&self) -> Self {
        Self {
            rate: self.distortion,
            distortion: self.rate,
        }
    }
}

impl TryFrom<[f64; 2]> for SimplexWeights {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<SimplexWeights> for [f64; 2] {
    fn from(w: SimplexWeights) -> Self {
        [w.rate, w.distortion]
    }
}

/// Relative per-iteration loss decrease of each objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpeedPair {
    pub rate: f64,
    pub distortion: f64,
}

/// One iteration of a training trace.
///
/// `losses` are measured at the parameters the step started from, `weights`
/// are the weights used for that step. `speeds` compare this record's losses
/// with the previous record's and are zero for the first record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub losses: LossPair,
    pub weights: SimplexWeights,
    pub speeds: SpeedPair,
    pub direction_norm: f64,
    pub step_size: f64,
    /// Renormalization constant applied to the direction (1 when disabled).
    pub renorm: Option<f64>,
    /// Pre-projection weights from the QP (solution 2 only).
    pub raw_weights: Option<[f64; 2]>,
    pub kkt_lambda: Option<f64>,
    /// The QP fell back to equal weights on a singular gram matrix.
    pub fallback: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
