//! Per-vehicle false data detection at the roadside unit.
//!
//! Each frame is compared with the vehicle's recent accepted history. The
//! resulting Error and Weight deviations drive fuzzy inference, and crisp
//! threshold rules gate or escalate the fuzzy verdict.

mod baseline;
mod detector;
mod frame;
mod rules;

pub use baseline::{compute_deviations, Baseline, Deviations, Spread, WindowStats, DEFAULT_WINDOW, RANGE_FLOOR};
pub use detector::{DecisionFlags, DetectionDecision, Detector, DetectorConfig};
pub use frame::{read_frames, FrameError, TelemetryFrame};
pub use rules::{
    apply_crisp_rules, compose_error_probability, CrispRule, ErrorProbabilityModel, ThresholdPolicy,
    Thresholds,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectionError {
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
}
