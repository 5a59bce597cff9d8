use std::fmt;

use serde::{Deserialize, Serialize};

use super::baseline::{WindowStats, RANGE_FLOOR};
use super::DetectionError;

/// Crisp behaviour rules evaluated alongside fuzzy inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CrispRule {
    /// Reported value jumped by more than the allowed step.
    #[serde(rename = "R1_delta_I")]
    DeltaI,
    /// Composite error probability. Carried as metadata only; never triggered.
    #[serde(rename = "R2_prob")]
    Probability,
    /// Error above its threshold.
    #[serde(rename = "R3_error")]
    Error,
    /// Weight below its threshold.
    #[serde(rename = "R4_weight")]
    Weight,
}

impl CrispRule {
    pub fn as_str(self) -> &'static str {
        match self {
            CrispRule::DeltaI => "R1_delta_I",
            CrispRule::Probability => "R2_prob",
            CrispRule::Error => "R3_error",
            CrispRule::Weight => "R4_weight",
        }
    }
}

impl fmt::Display for CrispRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub i_threshold: f64,
    pub e_threshold: f64,
    pub w_threshold: f64,
    pub baseline_window: usize,
}

impl Thresholds {
    pub fn new(
        i_threshold: f64,
        e_threshold: f64,
        w_threshold: f64,
        baseline_window: usize,
    ) -> Result<Self, DetectionError> {
        let t = Self { i_threshold, e_threshold, w_threshold, baseline_window };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        for (name, v) in [
            ("I_threshold", self.i_threshold),
            ("E_threshold", self.e_threshold),
            ("W_threshold", self.w_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DetectionError::InvalidThreshold(format!("{name} = {v} must be positive")));
            }
        }
        if self.baseline_window == 0 {
            return Err(DetectionError::InvalidThreshold("baseline_window must be at least 1".into()));
        }
        Ok(())
    }

    /// Thresholds placed `fraction` of the observed range beyond the window
    /// mean, in the anomalous direction of each quantity. The reported-value
    /// step threshold is `fraction` of the observed range of `I`.
    pub fn from_stats(stats: &WindowStats, fraction: f64, baseline_window: usize) -> Self {
        Self {
            i_threshold: (fraction * stats.reported.range()).max(RANGE_FLOOR),
            e_threshold: (stats.error.mean + fraction * stats.error.range()).max(RANGE_FLOOR),
            w_threshold: (stats.weight.mean - fraction * stats.weight.range()).max(RANGE_FLOOR),
            baseline_window,
        }
    }
}

/// How thresholds are chosen for each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdPolicy {
    /// Derived from the vehicle's baseline window at each frame.
    Adaptive { fraction: f64 },
    Fixed(Thresholds),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Adaptive { fraction: 0.25 }
    }
}

/// Rules triggered by the raw frame values, in rule order. `R2` is never
/// included.
pub fn apply_crisp_rules(error: f64, weight: f64, delta_i: f64, t: &Thresholds) -> Vec<CrispRule> {
    let mut out = Vec::new();
    if delta_i > t.i_threshold {
        out.push(CrispRule::DeltaI);
    }
    if error > t.e_threshold {
        out.push(CrispRule::Error);
    }
    if weight < t.w_threshold {
        out.push(CrispRule::Weight);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbabilityModel {
    pub p_m: f64,
    pub p_f: f64,
    pub p_e: f64,
}

pub fn compose_error_probability(p_m: f64, p_f: f64) -> Result<ErrorProbabilityModel, DetectionError> {
    if !(0.0..=1.0).contains(&p_m) {
        return Err(DetectionError::InvalidProbability(format!("P_M = {p_m} is outside [0, 1]")));
    }
    if !(p_f.is_finite() && p_f >= 0.0) {
        return Err(DetectionError::InvalidProbability(format!("P_F = {p_f} must be non-negative")));
    }
    Ok(ErrorProbabilityModel { p_m, p_f, p_e: p_f + p_m })
}
