use std::io::BufRead;

use serde::{Deserialize, Serialize};

/// One pre-fused telemetry record from a vehicle, as received by a roadside unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryFrame {
    pub vehicle_id: String,
    /// Milliseconds; strictly increasing per vehicle.
    pub timestamp: i64,
    /// Sensor measurement `I_k`, abstract units.
    pub reported_value: f64,
    /// Error `E_t`, non-negative.
    pub error: f64,
    /// Weight `W_t`, non-negative.
    pub weight: f64,
    #[serde(default)]
    pub neighbor_ids: Vec<String>,
}

impl TelemetryFrame {
    /// Reason the frame violates its value invariants, if any.
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("reported_value", self.reported_value),
            ("error", self.error),
            ("weight", self.weight),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if self.error < 0.0 {
            return Err("error is negative".into());
        }
        if self.weight < 0.0 {
            return Err("weight is negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses newline-delimited JSON frames, skipping blank lines. Each item is
/// either a frame or the parse failure for that line.
pub fn read_frames<R: BufRead>(reader: R) -> impl Iterator<Item = Result<TelemetryFrame, FrameError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(FrameError::Io(e))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(
            serde_json::from_str(&l).map_err(|source| FrameError::Parse { line: i + 1, source }),
        ),
    })
}
