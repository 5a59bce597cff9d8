use serde::Serialize;

use super::scenario::{generate_scenario, Scenario, ScenarioConfig};
use super::HarnessError;
use crate::detection::{Detector, DetectorConfig};
use crate::fuzzy::FuzzySystem;

/// Severity cutoffs swept by the ROC: 0, 1, ..., 100.
pub const ROC_CUTOFFS: std::ops::RangeInclusive<u32> = 0..=100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// True-positive rate; zero without positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub cutoff: u32,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Descending cutoff, so both rates are nondecreasing along the list.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Frame score for the ROC: severity, or `None` for rejected frames, which
/// never count as positive.
pub type Score = Option<f64>;

pub fn roc_curve(scores: &[(Score, bool)]) -> RocCurve {
    let points: Vec<RocPoint> = ROC_CUTOFFS
        .rev()
        .map(|cutoff| {
            let mut c = Confusion::default();
            for (s, label) in scores {
                c.record(s.is_some_and(|s| s >= cutoff as f64), *label);
            }
            RocPoint { cutoff, fpr: c.fpr(), tpr: c.tpr() }
        })
        .collect();
    let auc = trapezoid_auc(&points);
    RocCurve { points, auc }
}

/// Area under the points, starting from the origin.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    let mut prev = (0.0, 0.0);
    let mut area = 0.0;
    for p in points {
        area += (p.fpr - prev.0) * (p.tpr + prev.1) / 2.0;
        prev = (p.fpr, p.tpr);
    }
    area
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub case: usize,
    pub frames: usize,
    pub injected: usize,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub accuracy: f64,
    /// Mean absolute gap between the measured and declared deviations of
    /// injected frames.
    pub mean_deviation_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub cases: Vec<CaseResult>,
    pub overall: Confusion,
    pub roc: RocCurve,
    pub scores: Vec<(Score, bool)>,
}

impl StudyReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }

    /// Confusion when frames with severity at or above `cutoff` count as positive.
    pub fn at_cutoff(&self, cutoff: f64) -> Confusion {
        let mut c = Confusion::default();
        for (s, label) in &self.scores {
            c.record(s.is_some_and(|s| s >= cutoff), *label);
        }
        c
    }
}

/// Runs every case through a fresh detector, calibrated on the case's
/// clean history. A frame is predicted injected when its verdict is YES.
pub fn run_detection_study(
    scenario: &Scenario,
    system: &FuzzySystem,
    config: &DetectorConfig,
) -> Result<StudyReport, HarnessError> {
    let mut cases = Vec::with_capacity(scenario.cases.len());
    let mut overall = Confusion::default();
    let mut scores = Vec::new();
    for case in &scenario.cases {
        let mut detector = Detector::new(system.clone(), config.clone())?;
        for f in &case.calibration {
            detector.calibrate(f).map_err(HarnessError::Config)?;
        }
        let mut confusion = Confusion::default();
        let (mut gap, mut injected) = (0.0, 0usize);
        for lf in &case.frames {
            let d = detector.detect(&lf.frame);
            confusion.record(d.is_fdi(), lf.injected);
            scores.push((if d.flags.malformed { None } else { Some(d.severity) }, lf.injected));
            if lf.injected {
                injected += 1;
                gap += ((d.error_dev_pct - lf.error_dev_pct).abs() + (d.weight_dev_pct - lf.weight_dev_pct).abs()) / 2.0;
            }
        }
        overall.tp += confusion.tp;
        overall.fp += confusion.fp;
        overall.tn += confusion.tn;
        overall.fn_ += confusion.fn_;
        cases.push(CaseResult {
            case: case.index,
            frames: case.frames.len(),
            injected,
            confusion,
            accuracy: confusion.accuracy(),
            mean_deviation_gap: if injected == 0 { 0.0 } else { gap / injected as f64 },
        });
    }
    let roc = roc_curve(&scores);
    Ok(StudyReport { cases, overall, roc, scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub injection_rate: f64,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub auc: f64,
}

/// Accuracy of the study at each injection rate, all else fixed.
pub fn accuracy_sweep(
    base: &ScenarioConfig,
    rates: &[f64],
    system: &FuzzySystem,
    config: &DetectorConfig,
) -> Result<Vec<SweepRow>, HarnessError> {
    rates
        .iter()
        .map(|&rate| {
            let scenario = generate_scenario(&ScenarioConfig { injection_rate: rate, ..base.clone() })?;
            let r = run_detection_study(&scenario, system, config)?;
            Ok(SweepRow {
                injection_rate: rate,
                accuracy: r.accuracy(),
                tpr: r.overall.tpr(),
                fpr: r.overall.fpr(),
                auc: r.roc.auc,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_useless_scores() {
        let perfect: Vec<_> = (0..10).map(|i| (Some(if i < 5 { 90.0 } else { 10.0 }), i < 5)).collect();
        let roc = roc_curve(&perfect);
        assert!((roc.auc - 1.0).abs() < 1e-12);
        let flat: Vec<_> = (0..10).map(|i| (Some(50.0), i % 2 == 0)).collect();
        assert!((roc_curve(&flat).auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn roc_points_monotone() {
        let scores: Vec<_> = (0..50).map(|i| (Some((i * 7 % 101) as f64), i % 3 == 0)).collect();
        let roc = roc_curve(&scores);
        for w in roc.points.windows(2) {
            assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
        assert_eq!(roc.points.last().unwrap().cutoff, 0);
        assert_eq!((roc.points.last().unwrap().fpr, roc.points.last().unwrap().tpr), (1.0, 1.0));
    }

    #[test]
    fn rejected_frames_never_positive() {
        let roc = roc_curve(&[(None, true), (Some(80.0), false)]);
        assert_eq!(roc.points.last().unwrap().tpr, 0.0);
    }
}
