use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{CovarianceSequence, SpectralDensity};
use crate::error::{invalid, Result};

/// Closed-form spectral densities with known Fourier coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AnalyticFamily {
    /// `omega = level`.
    Constant { level: f64 },
    /// `omega = |1 + a e^{i 2 pi theta}|^2`, `|a| < 1`.
    MovingAverage { a: f64 },
    /// `omega = 4 sin^2(pi theta)`.
    SinSquared,
    /// `omega = |theta_1| + |theta_2|` on the 2-torus.
    AbsSum,
}

impl AnalyticFamily {
    pub fn dim(&self) -> usize {
        match self {
            AnalyticFamily::AbsSum => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AnalyticFamily::Constant { level } if !(level > 0.0) => invalid("constant density must be positive"),
            AnalyticFamily::MovingAverage { a } if !(a.abs() < 1.0) => invalid("moving-average parameter needs |a| < 1"),
            _ => Ok(()),
        }
    }

    pub fn density(&self) -> SpectralDensity {
        match *self {
            AnalyticFamily::Constant { level } => SpectralDensity::analytic(1, move |_| level),
            AnalyticFamily::MovingAverage { a } => {
                SpectralDensity::analytic(1, move |t| 1.0 + a * a + 2.0 * a * (2.0 * PI * t[0]).cos())
            }
            AnalyticFamily::SinSquared => SpectralDensity::analytic(1, |t| 4.0 * (PI * t[0]).sin().powi(2)),
            AnalyticFamily::AbsSum => SpectralDensity::analytic(2, |t| t[0].abs() + t[1].abs()),
        }
    }

    /// Fourier coefficients on `|n| <= radius`, when they are finitely supported.
    pub fn covariances(&self, radius: usize) -> Option<Result<CovarianceSequence>> {
        let one_sided = |c: &[f64]| {
            let mut v = vec![0.0; radius + 1];
            for (slot, x) in v.iter_mut().zip(c) {
                *slot = *x;
            }
            CovarianceSequence::from_one_sided(&v, 0.0, 0.0)
        };
        match *self {
            AnalyticFamily::Constant { level } => Some(one_sided(&[level])),
            AnalyticFamily::MovingAverage { a } => Some(one_sided(&[1.0 + a * a, a])),
            AnalyticFamily::SinSquared => Some(one_sided(&[2.0, -1.0])),
            AnalyticFamily::AbsSum => None,
        }
    }

    /// Exact value of the squared interpolation distance, when known.
    pub fn squared_distance(&self) -> Option<f64> {
        match *self {
            AnalyticFamily::Constant { level } => Some(level),
            AnalyticFamily::MovingAverage { a } => Some(1.0 - a * a),
            AnalyticFamily::SinSquared => Some(0.0),
            AnalyticFamily::AbsSum => None,
        }
    }
}
