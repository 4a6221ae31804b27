use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    /// Bits per element.
    pub rate: f64,
    /// PSNR in dB.
    pub quality: f64,
}

/// At least four points with strictly increasing rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct RDCurve {
    label: String,
    points: Vec<RDPoint>,
}

#[derive(Deserialize)]
struct RawCurve {
    label: String,
    points: Vec<RDPoint>,
}

impl TryFrom<RawCurve> for RDCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        RDCurve::new(raw.label, raw.points)
    }
}

impl RDCurve {
    /// Sorts by rate and validates.
    pub fn new(label: impl Into<String>, mut points: Vec<RDPoint>) -> Result<Self> {
        let label = label.into();
        if points.len() < 4 {
            return Err(Error::InvalidCurve(format!(
                "{label}: need at least 4 points, got {}",
                points.len()
            )));
        }
        for p in &points {
            if !(p.rate.is_finite() && p.quality.is_finite()) {
                return Err(Error::InvalidCurve(format!("{label}: non-finite point")));
            }
            if p.rate <= 0.0 {
                return Err(Error::InvalidCurve(format!(
                    "{label}: rate must be positive"
                )));
            }
        }
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        if points.windows(2).any(|w| w[0].rate == w[1].rate) {
            return Err(Error::InvalidCurve(format!("{label}: duplicate rate")));
        }
        Ok(Self { label, points })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }

    /// Quality must rise with rate for the inverted fit to make sense.
    pub fn check_monotone_quality(&self) -> Result<()> {
        if self.points.windows(2).all(|w| w[1].quality > w[0].quality) {
            Ok(())
        } else {
            Err(Error::InvalidCurve(format!(
                "{}: quality is not strictly increasing with rate",
                self.label
            )))
        }
    }

    pub fn quality_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.quality), hi.max(p.quality))
            })
    }

    pub fn scale_rates(&self, factor: f64) -> Result<Self> {
        let pts = self
            .points
            .iter()
            .map(|p| RDPoint {
                rate: p.rate * factor,
                quality: p.quality,
            })
            .collect();
        Self::new(self.label.clone(), pts)
    }
}

/// CSV with header `rate,quality`.
pub fn read_curve_csv(path: &Path) -> Result<RDCurve> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["rate", "quality"] {
        return Err(Error::InvalidCurve(format!(
            "{}: expected header `rate,quality`",
            path.display()
        )));
    }
    let mut points = Vec::new();
    for row in reader.deserialize() {
        let p: RDPoint =
            row.map_err(|e| Error::InvalidCurve(format!("{}: {e}", path.display())))?;
        points.push(p);
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    RDCurve::new(label, points)
}

pub fn write_curve_csv(curve: &RDCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for p in curve.points() {
        w.serialize(p).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::InvalidCurve(format!("{}: {e}", path.display()))
    }
}
