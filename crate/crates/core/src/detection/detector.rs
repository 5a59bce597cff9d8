use serde::{Deserialize, Serialize};

use super::baseline::{compute_deviations, Baseline, DEFAULT_WINDOW};
use super::rules::{apply_crisp_rules, CrispRule, ErrorProbabilityModel, ThresholdPolicy, Thresholds};
use super::{DetectionError, TelemetryFrame};
use crate::fuzzy::{FuzzySystem, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub baseline_window: usize,
    /// Frames a vehicle must have in its window before fuzzy inference runs.
    pub min_baseline: usize,
    pub thresholds: ThresholdPolicy,
    /// Attached to every decision when set.
    pub error_probability: Option<ErrorProbabilityModel>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            baseline_window: DEFAULT_WINDOW,
            min_baseline: 1,
            thresholds: ThresholdPolicy::default(),
            error_probability: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.baseline_window == 0 || self.min_baseline == 0 {
            return Err(DetectionError::InvalidThreshold(
                "baseline_window and min_baseline must be at least 1".into(),
            ));
        }
        if self.min_baseline > self.baseline_window {
            return Err(DetectionError::InvalidThreshold(
                "min_baseline cannot exceed baseline_window".into(),
            ));
        }
        match self.thresholds {
            ThresholdPolicy::Adaptive { fraction } if !(fraction.is_finite() && fraction > 0.0) => Err(
                DetectionError::InvalidThreshold(format!("fraction {fraction} must be positive")),
            ),
            ThresholdPolicy::Fixed(t) => t.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionFlags {
    pub cold_start: bool,
    pub malformed: bool,
    /// An input deviation fell outside the fuzzy universe and was clamped.
    pub clamped: bool,
    pub inconclusive: bool,
    /// R1, R3 and R4 together raised the verdict to YES.
    pub escalated: bool,
    /// The fuzzy verdict was lowered to NO because no crisp rule fired.
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDecision {
    pub vehicle_id: String,
    pub timestamp: i64,
    pub verdict: Verdict,
    pub severity: f64,
    pub triggered_rules: Vec<CrispRule>,
    pub error_dev_pct: f64,
    pub weight_dev_pct: f64,
    pub delta_i: f64,
    pub flags: DecisionFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_probability: Option<ErrorProbabilityModel>,
}

impl DetectionDecision {
    /// Whether the frame counts as injected false data.
    pub fn is_fdi(&self) -> bool {
        self.verdict == Verdict::Yes && !self.flags.malformed
    }

    /// Decision for a record that could not be parsed at all.
    pub fn rejected(vehicle_id: impl Into<String>, timestamp: i64, reason: impl Into<String>) -> Self {
        Self {
            vehicle_id: vehicle_id.into(),
            timestamp,
            verdict: Verdict::No,
            severity: 100.0,
            triggered_rules: Vec::new(),
            error_dev_pct: 0.0,
            weight_dev_pct: 0.0,
            delta_i: 0.0,
            flags: DecisionFlags { malformed: true, ..Default::default() },
            reason: Some(reason.into()),
            error_probability: None,
        }
    }
}

/// Stateful per-RSU detector: keeps one baseline per vehicle and turns each
/// incoming frame into a decision.
#[derive(Debug, Clone)]
pub struct Detector {
    system: FuzzySystem,
    config: DetectorConfig,
    baseline: Baseline,
    yes_floor: f64,
}

impl Detector {
    pub fn new(system: FuzzySystem, config: DetectorConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        let yes_floor = system
            .region_lower_bound(Verdict::Yes)
            .ok_or_else(|| DetectionError::InvalidThreshold("output has no YES region".into()))?;
        Ok(Self { baseline: Baseline::new(config.baseline_window), system, config, yes_floor })
    }

    pub fn system(&self) -> &FuzzySystem {
        &self.system
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    /// Lowest severity the output partition labels YES.
    pub fn yes_floor(&self) -> f64 {
        self.yes_floor
    }

    /// Thresholds that would apply to the next frame from `vehicle`.
    pub fn thresholds_for(&self, vehicle: &str) -> Option<Thresholds> {
        match self.config.thresholds {
            ThresholdPolicy::Fixed(t) => Some(t),
            ThresholdPolicy::Adaptive { fraction } => self
                .baseline
                .stats(vehicle)
                .map(|s| Thresholds::from_stats(&s, fraction, self.config.baseline_window)),
        }
    }

    /// Admits a frame known to be clean into the vehicle's baseline without
    /// judging it.
    pub fn calibrate(&mut self, frame: &TelemetryFrame) -> Result<(), String> {
        frame.validate()?;
        if self.baseline.last_timestamp(&frame.vehicle_id).is_some_and(|t| frame.timestamp <= t) {
            return Err(format!("timestamp {} is not increasing", frame.timestamp));
        }
        self.baseline.observe(frame);
        self.baseline.absorb(frame);
        Ok(())
    }

    pub fn detect(&mut self, frame: &TelemetryFrame) -> DetectionDecision {
        if let Err(reason) = frame.validate() {
            return DetectionDecision::rejected(&frame.vehicle_id, frame.timestamp, reason);
        }
        if let Some(last) = self.baseline.last_timestamp(&frame.vehicle_id) {
            if frame.timestamp <= last {
                return DetectionDecision::rejected(
                    &frame.vehicle_id,
                    frame.timestamp,
                    format!("timestamp {} does not follow {last}", frame.timestamp),
                );
            }
        }

        let stats = self
            .baseline
            .stats(&frame.vehicle_id)
            .filter(|s| s.count >= self.config.min_baseline);
        let dev = compute_deviations(
            frame,
            stats.as_ref(),
            self.baseline.last_reported(&frame.vehicle_id),
        );
        let mut decision = DetectionDecision {
            vehicle_id: frame.vehicle_id.clone(),
            timestamp: frame.timestamp,
            verdict: Verdict::No,
            severity: 0.0,
            triggered_rules: Vec::new(),
            error_dev_pct: dev.error_dev_pct,
            weight_dev_pct: dev.weight_dev_pct,
            delta_i: dev.delta_i,
            flags: DecisionFlags::default(),
            reason: None,
            error_probability: self.config.error_probability,
        };

        if dev.cold_start {
            decision.flags.cold_start = true;
            decision.reason = Some("cold start".into());
        } else {
            let thresholds = self.thresholds_for(&frame.vehicle_id).expect("baseline has statistics");
            decision.triggered_rules = apply_crisp_rules(frame.error, frame.weight, dev.delta_i, &thresholds);
            match self.system.infer(dev.error_dev_pct, dev.weight_dev_pct) {
                Ok(out) => {
                    decision.verdict = out.verdict;
                    decision.severity = out.severity;
                    decision.flags.clamped = out.clamped;
                    decision.flags.inconclusive = out.inconclusive;
                }
                Err(e) => {
                    return DetectionDecision::rejected(&frame.vehicle_id, frame.timestamp, e.to_string());
                }
            }
            self.resolve(&mut decision);
        }

        self.baseline.observe(frame);
        if decision.verdict == Verdict::No {
            self.baseline.absorb(frame);
        }
        decision
    }

    fn resolve(&self, d: &mut DetectionDecision) {
        let has = |r| d.triggered_rules.contains(&r);
        let all_three = has(CrispRule::DeltaI) && has(CrispRule::Error) && has(CrispRule::Weight);
        if all_three && d.verdict != Verdict::Yes {
            d.verdict = Verdict::Yes;
            d.severity = d.severity.max(self.yes_floor);
            d.flags.escalated = true;
            d.reason = Some("R1, R3 and R4 triggered together".into());
        } else if d.verdict != Verdict::No && d.triggered_rules.is_empty() {
            d.verdict = Verdict::No;
            d.flags.gated = true;
            d.reason = Some("no crisp rule triggered".into());
        }
    }
}
