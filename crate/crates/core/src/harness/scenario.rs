use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::HarnessError;
use crate::detection::{Baseline, TelemetryFrame, DEFAULT_WINDOW};

/// Deviation band in percent of the baseline range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn check(&self, name: &str) -> Result<(), HarnessError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0 && self.lo < self.hi) {
            return Err(HarnessError::Config(format!("{name} band [{}, {}] is empty", self.lo, self.hi)));
        }
        Ok(())
    }

    /// Uniform in `(lo, hi]`.
    fn sample_open_low(&self, rng: &mut impl Rng) -> f64 {
        let v = self.hi - (self.hi - self.lo) * rng.gen::<f64>();
        if v > self.lo { v } else { self.hi }
    }

    /// Uniform in `[lo, hi)`.
    fn sample_open_high(&self, rng: &mut impl Rng) -> f64 {
        rng.gen_range(self.lo..self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_cases: usize,
    pub vehicles_per_case: usize,
    pub calibration_frames: usize,
    pub frames_per_vehicle: usize,
    pub injection_rate: f64,
    /// Error and weight deviations of injected frames, drawn from `(lo, hi]`.
    pub injected: Band,
    /// Deviations of clean frames, drawn from `[lo, hi)`.
    pub clean: Band,
    /// Chance that an injected frame also jumps its reported value.
    pub jump_probability: f64,
    pub baseline_window: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_cases: 30,
            vehicles_per_case: 4,
            calibration_frames: 32,
            frames_per_vehicle: 40,
            injection_rate: 0.2,
            injected: Band::new(20.0, 100.0),
            clean: Band::new(0.0, 10.0),
            jump_probability: 0.3,
            baseline_window: DEFAULT_WINDOW,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.injection_rate) {
            return Err(HarnessError::Config(format!("injection rate {} is outside [0, 1]", self.injection_rate)));
        }
        if !(0.0..=1.0).contains(&self.jump_probability) {
            return Err(HarnessError::Config("jump probability must lie in [0, 1]".into()));
        }
        if self.n_cases == 0 || self.vehicles_per_case == 0 || self.calibration_frames == 0 || self.baseline_window == 0 {
            return Err(HarnessError::Config("cases, vehicles, calibration frames and window must be positive".into()));
        }
        self.injected.check("injected")?;
        self.clean.check("clean")
    }
}

/// A test frame with the ground truth it was generated from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledFrame {
    pub frame: TelemetryFrame,
    pub injected: bool,
    pub error_dev_pct: f64,
    pub weight_dev_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case {
    pub index: usize,
    /// Known-clean history admitted before any test frame.
    pub calibration: Vec<TelemetryFrame>,
    pub frames: Vec<LabeledFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub cases: Vec<Case>,
}

impl Scenario {
    pub fn frames(&self) -> impl Iterator<Item = &LabeledFrame> {
        self.cases.iter().flat_map(|c| c.frames.iter())
    }

    /// Digest over every label and declared deviation.
    pub fn label_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for f in self.frames() {
            h.update(f.frame.vehicle_id.as_bytes());
            h.update(f.frame.timestamp.to_le_bytes());
            h.update([f.injected as u8]);
            h.update(f.error_dev_pct.to_le_bytes());
            h.update(f.weight_dev_pct.to_le_bytes());
        }
        h.finalize().into()
    }
}

struct Profile {
    error: (f64, f64),
    weight: (f64, f64),
    reported: (f64, f64),
}

/// Generates labeled telemetry. Each frame's values are placed so that its
/// deviation from the clean history so far equals the declared one.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, HarnessError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut cases = Vec::with_capacity(config.n_cases);
    for index in 0..config.n_cases {
        let mut calibration = Vec::new();
        let mut frames = Vec::new();
        for v in 0..config.vehicles_per_case {
            let id = format!("c{index:02}-v{v}");
            let p = Profile {
                error: (rng.gen_range(5.0..15.0), rng.gen_range(2.0..6.0)),
                weight: (rng.gen_range(40.0..60.0), rng.gen_range(5.0..10.0)),
                reported: (rng.gen_range(50.0..150.0), rng.gen_range(1.0..5.0)),
            };
            let mut mirror = Baseline::new(config.baseline_window);
            let mut ts = 0i64;
            let mut reported = p.reported.0;
            for _ in 0..config.calibration_frames {
                ts += 100;
                reported = p.reported.0 + rng.gen_range(-1.0..1.0) * p.reported.1;
                let f = TelemetryFrame {
                    vehicle_id: id.clone(),
                    timestamp: ts,
                    reported_value: reported,
                    error: p.error.0 + rng.gen::<f64>() * p.error.1,
                    weight: p.weight.0 + rng.gen::<f64>() * p.weight.1,
                    neighbor_ids: Vec::new(),
                };
                mirror.observe(&f);
                mirror.absorb(&f);
                calibration.push(f);
            }
            for _ in 0..config.frames_per_vehicle {
                ts += 100;
                let stats = mirror.stats(&id).expect("calibrated");
                let injected = rng.gen_bool(config.injection_rate);
                let (de, dw) = if injected {
                    (config.injected.sample_open_low(&mut rng), config.injected.sample_open_low(&mut rng))
                } else {
                    (config.clean.sample_open_high(&mut rng), config.clean.sample_open_high(&mut rng))
                };
                let step = rng.gen_range(-0.1..0.1) * p.reported.1;
                let jump = injected && rng.gen_bool(config.jump_probability);
                reported += if jump { stats.reported.range().max(1.0) * rng.gen_range(2.0..4.0) } else { step };
                let error = stats.error.mean + de / 100.0 * stats.error.range();
                let weight = (stats.weight.mean - dw / 100.0 * stats.weight.range()).max(0.0);
                let f = TelemetryFrame {
                    vehicle_id: id.clone(),
                    timestamp: ts,
                    reported_value: reported,
                    error,
                    weight,
                    neighbor_ids: Vec::new(),
                };
                mirror.observe(&f);
                if !injected {
                    mirror.absorb(&f);
                }
                frames.push(LabeledFrame { frame: f, injected, error_dev_pct: de, weight_dev_pct: dw });
            }
        }
        frames.sort_by_key(|f| (f.frame.timestamp, f.frame.vehicle_id.clone()));
        cases.push(Case { index, calibration, frames });
    }
    Ok(Scenario { config: config.clone(), cases })
}
