//! Triangulation from the measured LED-group separation.
//!
//! With focal length `f`, pixel pitch `α` and physical baseline `S` between
//! the two LED group centroids, an image separation of `W` pixels puts the
//! bar at depth `L = f·S / (W·α)`.

use std::fmt;
use std::str::FromStr;

use crate::config::{positive, ConfigError, KeyValues};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalConfig {
    focal_length_m: f64,
    pixel_pitch_m: f64,
    baseline_m: f64,
}

impl OpticalConfig {
    /// Every parameter must be finite and strictly positive.
    pub fn new(focal_length_m: f64, pixel_pitch_m: f64, baseline_m: f64) -> Option<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        (ok(focal_length_m) && ok(pixel_pitch_m) && ok(baseline_m)).then_some(Self {
            focal_length_m,
            pixel_pitch_m,
            baseline_m,
        })
    }

    /// Reads `optics.focal_length_m`, `optics.pixel_pitch_m`, `optics.baseline_m`.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        let get = |key: &str| kv.require::<f64>(key).and_then(|v| positive(key, v));
        Ok(Self {
            focal_length_m: get("optics.focal_length_m")?,
            pixel_pitch_m: get("optics.pixel_pitch_m")?,
            baseline_m: get("optics.baseline_m")?,
        })
    }

    pub fn focal_length_m(&self) -> f64 {
        self.focal_length_m
    }

    pub fn pixel_pitch_m(&self) -> f64 {
        self.pixel_pitch_m
    }

    pub fn baseline_m(&self) -> f64 {
        self.baseline_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("pixel separation must be positive, got {0}")]
pub struct DomainError(pub f64);

pub fn triangulate(w_px: f64, optics: &OpticalConfig) -> Result<f64, DomainError> {
    if w_px.is_nan() || w_px <= 0.0 {
        return Err(DomainError(w_px));
    }
    Ok(optics.focal_length_m * optics.baseline_m / (w_px * optics.pixel_pitch_m))
}

/// Why a window produced no distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FailureReason {
    EmptyRoi,
    SeparationFailure,
    LowPeak,
    NumericalIntegrity,
    NonPositiveDisplacement,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::EmptyRoi => "empty_roi",
            FailureReason::SeparationFailure => "separation_failure",
            FailureReason::LowPeak => "low_peak",
            FailureReason::NumericalIntegrity => "numerical_integrity",
            FailureReason::NonPositiveDisplacement => "non_positive_displacement",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            FailureReason::EmptyRoi,
            FailureReason::SeparationFailure,
            FailureReason::LowPeak,
            FailureReason::NumericalIntegrity,
            FailureReason::NonPositiveDisplacement,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| format!("unknown failure reason `{s}`"))
    }
}

/// One per accumulation window, valid or not.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeEstimate {
    pub window_start_us: u64,
    pub w_px: Option<f64>,
    pub distance_m: Option<f64>,
    pub peak_value: Option<f64>,
    pub failure: Option<FailureReason>,
}

impl RangeEstimate {
    pub fn invalid(window_start_us: u64, reason: FailureReason) -> Self {
        Self {
            window_start_us,
            w_px: None,
            distance_m: None,
            peak_value: None,
            failure: Some(reason),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }
}
