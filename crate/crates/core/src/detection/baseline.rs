use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::TelemetryFrame;

/// Floor applied to observed ranges before dividing by them.
pub const RANGE_FLOOR: f64 = 1e-9;

pub const DEFAULT_WINDOW: usize = 32;

/// Mean and spread of one quantity over the baseline window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        Self { mean: sum / n, min, max }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowStats {
    pub count: usize,
    pub error: Spread,
    pub weight: Spread,
    pub reported: Spread,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Deviations {
    /// Percent by which Error exceeds its baseline mean, relative to the
    /// baseline range. Zero when Error is at or below the mean.
    pub error_dev_pct: f64,
    /// Percent by which Weight falls below its baseline mean, relative to
    /// the baseline range. Zero when Weight is at or above the mean.
    pub weight_dev_pct: f64,
    /// `|I_k - I_{k-1}|` against the vehicle's previous frame.
    pub delta_i: f64,
    pub cold_start: bool,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    error: f64,
    weight: f64,
    reported: f64,
}

#[derive(Debug, Clone, Default)]
struct History {
    window: VecDeque<Sample>,
    last_timestamp: Option<i64>,
    last_reported: Option<f64>,
}

/// Per-vehicle sliding statistics over recently accepted frames.
#[derive(Debug, Clone)]
pub struct Baseline {
    window: usize,
    vehicles: BTreeMap<String, History>,
}

impl Default for Baseline {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}

impl Baseline {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), vehicles: BTreeMap::new() }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stats(&self, vehicle: &str) -> Option<WindowStats> {
        let h = self.vehicles.get(vehicle)?;
        if h.window.is_empty() {
            return None;
        }
        Some(WindowStats {
            count: h.window.len(),
            error: Spread::of(h.window.iter().map(|s| s.error)),
            weight: Spread::of(h.window.iter().map(|s| s.weight)),
            reported: Spread::of(h.window.iter().map(|s| s.reported)),
        })
    }

    pub fn last_timestamp(&self, vehicle: &str) -> Option<i64> {
        self.vehicles.get(vehicle)?.last_timestamp
    }

    pub fn last_reported(&self, vehicle: &str) -> Option<f64> {
        self.vehicles.get(vehicle)?.last_reported
    }

    /// Records that `frame` was seen, without admitting it to the window.
    pub fn observe(&mut self, frame: &TelemetryFrame) {
        let h = self.vehicles.entry(frame.vehicle_id.clone()).or_default();
        h.last_timestamp = Some(frame.timestamp);
        h.last_reported = Some(frame.reported_value);
    }

    /// Admits `frame` into the vehicle's window, evicting the oldest sample when full.
    pub fn absorb(&mut self, frame: &TelemetryFrame) {
        let window = self.window;
        let h = self.vehicles.entry(frame.vehicle_id.clone()).or_default();
        if h.window.len() == window {
            h.window.pop_front();
        }
        h.window.push_back(Sample {
            error: frame.error,
            weight: frame.weight,
            reported: frame.reported_value,
        });
    }
}

/// Deviation of `frame` from the window. Without statistics the frame is a
/// cold start and all deviations are zero.
pub fn compute_deviations(
    frame: &TelemetryFrame,
    stats: Option<&WindowStats>,
    previous_reported: Option<f64>,
) -> Deviations {
    let Some(stats) = stats else {
        return Deviations { cold_start: true, ..Default::default() };
    };
    let error_dev_pct =
        100.0 * (frame.error - stats.error.mean).max(0.0) / stats.error.range().max(RANGE_FLOOR);
    let weight_dev_pct =
        100.0 * (stats.weight.mean - frame.weight).max(0.0) / stats.weight.range().max(RANGE_FLOOR);
    let delta_i = previous_reported.map_or(0.0, |p| (frame.reported_value - p).abs());
    Deviations { error_dev_pct, weight_dev_pct, delta_i, cold_start: false }
}
