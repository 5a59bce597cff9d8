//! Beta reputation per data source, driven by detection decisions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::DetectionDecision;
use crate::fuzzy::Verdict;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReputationError {
    #[error("source `{0}` is already registered")]
    Duplicate(String),
    #[error("source `{0}` is not registered")]
    NotFound(String),
    #[error("decision for `{0}` is malformed and carries no evidence")]
    Malformed(String),
    #[error("invalid reputation config: {0}")]
    InvalidConfig(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Evidence added per verdict. YES adds `yes_base + yes_severity * D/100`
/// to beta, WARNING adds `warning_severity * D/100` to beta, NO adds
/// `no_reward` to alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvidenceWeights {
    pub yes_base: f64,
    pub yes_severity: f64,
    pub warning_severity: f64,
    pub no_reward: f64,
}

impl Default for EvidenceWeights {
    fn default() -> Self {
        Self { yes_base: 1.0, yes_severity: 1.0, warning_severity: 0.5, no_reward: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReputationConfig {
    pub weights: EvidenceWeights,
    pub quarantine_floor: f64,
    pub hysteresis: f64,
    /// When set, evidence above the prior decays with this half-life (ms)
    /// between updates.
    pub half_life_ms: Option<f64>,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        Self {
            weights: EvidenceWeights::default(),
            quarantine_floor: 0.3,
            hysteresis: 0.05,
            half_life_ms: None,
        }
    }
}

impl ReputationConfig {
    pub fn validate(&self) -> Result<(), ReputationError> {
        let w = &self.weights;
        if [w.yes_base, w.yes_severity, w.warning_severity, w.no_reward]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(ReputationError::InvalidConfig("weights must be finite and non-negative".into()));
        }
        if !(self.quarantine_floor > 0.0 && self.quarantine_floor < 1.0) {
            return Err(ReputationError::InvalidConfig("quarantine floor must lie in (0, 1)".into()));
        }
        if !(self.hysteresis >= 0.0 && self.quarantine_floor + self.hysteresis < 1.0) {
            return Err(ReputationError::InvalidConfig("hysteresis must keep floor + band below 1".into()));
        }
        if self.half_life_ms.is_some_and(|h| !(h.is_finite() && h > 0.0)) {
            return Err(ReputationError::InvalidConfig("half-life must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationRecord {
    pub id: String,
    pub alpha: f64,
    pub beta: f64,
    /// `alpha / (alpha + beta)`.
    #[serde(rename = "R")]
    pub level: f64,
    #[serde(rename = "D")]
    pub last_detection_level: f64,
    #[serde(rename = "S")]
    pub status: bool,
    pub updated_at: i64,
    #[serde(default)]
    pub quarantined: bool,
}

impl ReputationRecord {
    fn fresh(id: String, now: i64) -> Self {
        Self {
            id,
            alpha: 1.0,
            beta: 1.0,
            level: 0.5,
            last_detection_level: 0.0,
            status: false,
            updated_at: now,
            quarantined: false,
        }
    }

    fn recompute(&mut self) {
        self.level = self.alpha / (self.alpha + self.beta);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationUpdate {
    pub id: String,
    pub old_r: f64,
    pub new_r: f64,
    pub detection_level: f64,
    pub status: bool,
    pub cause: Verdict,
    pub quarantined: bool,
}

/// Whether a source at `record.level` is quarantined. A source already in
/// quarantine stays there until its level rises above `floor + hysteresis`.
pub fn quarantine_check(record: &ReputationRecord, floor: f64, hysteresis: f64) -> bool {
    if record.quarantined {
        record.level <= floor + hysteresis
    } else {
        record.level < floor
    }
}

/// Single-writer reputation table keyed by source id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReputationStore {
    config: ReputationConfig,
    records: BTreeMap<String, ReputationRecord>,
}

impl ReputationStore {
    pub fn new(config: ReputationConfig) -> Result<Self, ReputationError> {
        config.validate()?;
        Ok(Self { config, records: BTreeMap::new() })
    }

    pub fn config(&self) -> &ReputationConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    pub fn init(&mut self, id: &str, now: i64) -> Result<&ReputationRecord, ReputationError> {
        if self.records.contains_key(id) {
            return Err(ReputationError::Duplicate(id.to_string()));
        }
        Ok(self.records.entry(id.to_string()).or_insert(ReputationRecord::fresh(id.to_string(), now)))
    }

    pub fn get_status(&self, id: &str) -> Result<&ReputationRecord, ReputationError> {
        self.records.get(id).ok_or_else(|| ReputationError::NotFound(id.to_string()))
    }

    pub fn is_quarantined(&self, id: &str) -> Result<bool, ReputationError> {
        Ok(self.get_status(id)?.quarantined)
    }

    pub fn records(&self) -> impl Iterator<Item = &ReputationRecord> {
        self.records.values()
    }

    /// Applies a detection decision to the source `id`.
    pub fn update_rep(
        &mut self,
        id: &str,
        decision: &DetectionDecision,
    ) -> Result<ReputationUpdate, ReputationError> {
        if decision.flags.malformed {
            return Err(ReputationError::Malformed(id.to_string()));
        }
        self.apply(id, decision.verdict, decision.severity, decision.timestamp)
    }

    /// Applies one piece of evidence: `verdict` with detection level `d` in
    /// `[0, 100]` observed at time `now`.
    pub fn apply(
        &mut self,
        id: &str,
        verdict: Verdict,
        d: f64,
        now: i64,
    ) -> Result<ReputationUpdate, ReputationError> {
        let config = self.config;
        let rec = self.records.get_mut(id).ok_or_else(|| ReputationError::NotFound(id.to_string()))?;
        let old_r = rec.level;
        if let Some(half_life) = config.half_life_ms {
            let dt = (now - rec.updated_at).max(0) as f64;
            let keep = 0.5f64.powf(dt / half_life);
            rec.alpha = 1.0 + (rec.alpha - 1.0) * keep;
            rec.beta = 1.0 + (rec.beta - 1.0) * keep;
        }
        let d = if d.is_finite() { d.clamp(0.0, 100.0) } else { 100.0 };
        let w = &config.weights;
        match verdict {
            Verdict::Yes => rec.beta += w.yes_base + w.yes_severity * d / 100.0,
            Verdict::Warning => rec.beta += w.warning_severity * d / 100.0,
            Verdict::No => rec.alpha += w.no_reward,
        }
        rec.recompute();
        rec.last_detection_level = d;
        rec.status = verdict == Verdict::Yes;
        rec.updated_at = rec.updated_at.max(now);
        rec.quarantined = quarantine_check(rec, config.quarantine_floor, config.hysteresis);
        Ok(ReputationUpdate {
            id: id.to_string(),
            old_r,
            new_r: rec.level,
            detection_level: d,
            status: rec.status,
            cause: verdict,
            quarantined: rec.quarantined,
        })
    }

    /// All records as a JSON array ordered by id.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records.values().collect::<Vec<_>>()).expect("records serialize")
    }

    pub fn from_json(config: ReputationConfig, text: &str) -> Result<Self, ReputationError> {
        let records: Vec<ReputationRecord> =
            serde_json::from_str(text).map_err(|e| ReputationError::Snapshot(e.to_string()))?;
        let mut store = Self::new(config)?;
        for mut r in records {
            if !(r.alpha >= 1.0 && r.beta >= 1.0 && r.alpha.is_finite() && r.beta.is_finite()) {
                return Err(ReputationError::Snapshot(format!("`{}` has alpha or beta below 1", r.id)));
            }
            r.recompute();
            if store.records.insert(r.id.clone(), r).is_some() {
                return Err(ReputationError::Snapshot("duplicate id".into()));
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ReputationStore {
        let mut s = ReputationStore::default();
        s.init("a", 0).unwrap();
        s
    }

    #[test]
    fn init_and_duplicates() {
        let mut s = store();
        assert_eq!(s.get_status("a").unwrap().level, 0.5);
        assert!(!s.get_status("a").unwrap().status);
        assert_eq!(s.init("a", 1), Err(ReputationError::Duplicate("a".into())));
        assert!(matches!(s.get_status("b"), Err(ReputationError::NotFound(_))));
    }

    #[test]
    fn yes_at_full_severity() {
        let mut s = store();
        let u = s.apply("a", Verdict::Yes, 100.0, 5).unwrap();
        let r = s.get_status("a").unwrap();
        assert_eq!((r.alpha, r.beta, r.level), (1.0, 3.0, 0.25));
        assert!(u.status && r.status);
        assert_eq!(u.old_r, 0.5);
        assert_eq!(r.last_detection_level, 100.0);
    }

    #[test]
    fn no_then_warning() {
        let mut s = store();
        s.apply("a", Verdict::No, 0.0, 1).unwrap();
        assert!((s.get_status("a").unwrap().level - 2.0 / 3.0).abs() < 1e-15);
        s.apply("a", Verdict::Warning, 50.0, 2).unwrap();
        assert_eq!(s.get_status("a").unwrap().beta, 1.25);
        assert!(!s.get_status("a").unwrap().status);
    }

    #[test]
    fn quarantine_hysteresis() {
        let floor = 0.3;
        let mut rec = ReputationRecord::fresh("x".into(), 0);
        rec.level = 0.5;
        assert!(!quarantine_check(&rec, floor, 0.05));
        rec.level = 0.25;
        assert!(quarantine_check(&rec, floor, 0.05));
        rec.quarantined = true;
        for level in [0.3, 0.32, 0.35] {
            rec.level = level;
            assert!(quarantine_check(&rec, floor, 0.05), "still held at {level}");
        }
        rec.level = 0.3500001;
        assert!(!quarantine_check(&rec, floor, 0.05));
        rec.quarantined = false;
        rec.level = 0.3;
        assert!(!quarantine_check(&rec, floor, 0.05));
    }

    #[test]
    fn decay_pulls_toward_prior() {
        let cfg = ReputationConfig { half_life_ms: Some(1000.0), ..Default::default() };
        let mut s = ReputationStore::new(cfg).unwrap();
        s.init("a", 0).unwrap();
        s.apply("a", Verdict::Yes, 100.0, 0).unwrap();
        s.apply("a", Verdict::No, 0.0, 1000).unwrap();
        let r = s.get_status("a").unwrap();
        assert_eq!((r.alpha, r.beta), (2.0, 2.0));
    }

    #[test]
    fn malformed_decision_is_refused() {
        let mut s = store();
        let d = DetectionDecision::rejected("a", 0, "bad");
        assert!(matches!(s.update_rep("a", &d), Err(ReputationError::Malformed(_))));
        assert_eq!(s.get_status("a").unwrap().level, 0.5);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = store();
        s.init("b", 0).unwrap();
        s.apply("b", Verdict::Yes, 85.0, 9).unwrap();
        let back = ReputationStore::from_json(ReputationConfig::default(), &s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(ReputationStore::from_json(ReputationConfig::default(), "[{]").is_err());
    }

    #[test]
    fn bad_config() {
        let cfg = ReputationConfig { quarantine_floor: 1.0, ..Default::default() };
        assert!(ReputationStore::new(cfg).is_err());
    }
}
