//! Mamdani inference: min for rule conjunction, max for aggregation, centroid
//! defuzzification.

use serde::{Deserialize, Serialize};

use super::{Fuzzified, FuzzyError, LinguisticVariable, MembershipFunction, RuleMatrix, Verdict};

/// How a rule's firing strength shapes its consequent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Implication {
    /// Clip the consequent at the firing strength (classic Mamdani).
    #[default]
    Min,
    /// Scale the consequent by the firing strength.
    Product,
}

/// Activation of one rule-matrix cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleFiring {
    pub error_term: String,
    pub weight_term: String,
    pub verdict: Verdict,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyOutput {
    pub verdict: Verdict,
    /// Defuzzified severity, in percent.
    pub severity: f64,
    pub firing_strengths: Vec<RuleFiring>,
    /// Max firing strength per verdict, indexed by [`Verdict::index`].
    pub verdict_strengths: [f64; 3],
    /// Set when no rule fired; the verdict then defaults to NO at severity 0.
    pub inconclusive: bool,
    /// Set when either input was clamped into its range.
    pub clamped: bool,
}

impl FuzzyOutput {
    /// Strength of the strongest single rule.
    pub fn max_strength(&self) -> f64 {
        self.verdict_strengths.iter().copied().fold(0.0, f64::max)
    }
}

/// The two-input detector: Error and Weight deviations in, Detection severity out.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySystem {
    error: LinguisticVariable,
    weight: LinguisticVariable,
    detection: LinguisticVariable,
    rules: RuleMatrix,
    implication: Implication,
    /// Index into `detection.terms()` for each verdict.
    outputs: [usize; 3],
    /// Rule-matrix row/column to variable term index.
    error_index: Vec<usize>,
    weight_index: Vec<usize>,
}

impl FuzzySystem {
    pub fn new(
        error: LinguisticVariable,
        weight: LinguisticVariable,
        detection: LinguisticVariable,
        rules: RuleMatrix,
        implication: Implication,
    ) -> Result<Self, FuzzyError> {
        let lookup = |var: &LinguisticVariable, labels: &[String]| -> Result<Vec<usize>, FuzzyError> {
            labels
                .iter()
                .map(|l| {
                    var.labels().position(|t| t == l).ok_or_else(|| {
                        FuzzyError::InvalidRules(format!(
                            "rule term `{l}` is not a term of `{}`",
                            var.name()
                        ))
                    })
                })
                .collect()
        };
        let error_index = lookup(&error, rules.error_terms())?;
        let weight_index = lookup(&weight, rules.weight_terms())?;
        let mut outputs = [0usize; 3];
        for v in Verdict::ALL {
            outputs[v.index()] = detection
                .labels()
                .position(|l| l.eq_ignore_ascii_case(v.as_str()))
                .ok_or_else(|| {
                    FuzzyError::InvalidRules(format!(
                        "output variable `{}` lacks a `{v}` term",
                        detection.name()
                    ))
                })?;
        }
        Ok(Self { error, weight, detection, rules, implication, outputs, error_index, weight_index })
    }

    pub fn error(&self) -> &LinguisticVariable {
        &self.error
    }

    pub fn weight(&self) -> &LinguisticVariable {
        &self.weight
    }

    pub fn detection(&self) -> &LinguisticVariable {
        &self.detection
    }

    pub fn rules(&self) -> &RuleMatrix {
        &self.rules
    }

    pub fn implication(&self) -> Implication {
        self.implication
    }

    pub fn with_implication(mut self, implication: Implication) -> Self {
        self.implication = implication;
        self
    }

    pub fn output_term(&self, verdict: Verdict) -> &MembershipFunction {
        &self.detection.terms()[self.outputs[verdict.index()]]
    }

    pub fn infer(&self, error_x: f64, weight_x: f64) -> Result<FuzzyOutput, FuzzyError> {
        let e = self.error.fuzzify(error_x)?;
        let w = self.weight.fuzzify(weight_x)?;
        Ok(self.infer_fuzzified(&e, &w))
    }

    fn infer_fuzzified(&self, e: &Fuzzified, w: &Fuzzified) -> FuzzyOutput {
        let mut strengths = [0.0f64; 3];
        let firing_strengths: Vec<RuleFiring> = self
            .rules
            .rules()
            .map(|(i, j, verdict)| {
                let strength = e.degrees[self.error_index[i]].1.min(w.degrees[self.weight_index[j]].1);
                let s = &mut strengths[verdict.index()];
                *s = s.max(strength);
                RuleFiring {
                    error_term: self.rules.error_terms()[i].clone(),
                    weight_term: self.rules.weight_terms()[j].clone(),
                    verdict,
                    strength,
                }
            })
            .collect();

        let clamped = e.clamped || w.clamped;
        match self.aggregate(strengths).centroid() {
            Some(severity) => FuzzyOutput {
                verdict: self.classify(severity),
                severity,
                firing_strengths,
                verdict_strengths: strengths,
                inconclusive: false,
                clamped,
            },
            None => FuzzyOutput {
                verdict: Verdict::No,
                severity: 0.0,
                firing_strengths,
                verdict_strengths: strengths,
                inconclusive: true,
                clamped,
            },
        }
    }

    /// Output fuzzy set for the given per-verdict firing strengths.
    pub fn aggregate(&self, strengths: [f64; 3]) -> Aggregated<'_> {
        Aggregated { system: self, strengths }
    }

    /// The verdict whose output term has the highest degree at `severity`,
    /// ties going to the more severe verdict.
    pub fn classify(&self, severity: f64) -> Verdict {
        let mut best = (Verdict::No, f64::NEG_INFINITY);
        for v in Verdict::ALL {
            let mu = self.output_term(v).evaluate(severity);
            if mu >= best.1 {
                best = (v, mu);
            }
        }
        best.0
    }

    /// Lowest severity classified as `verdict`, searched on a 0.001 grid.
    pub fn region_lower_bound(&self, verdict: Verdict) -> Option<f64> {
        let (lo, hi) = self.detection.range();
        let steps = ((hi - lo) * 1000.0).round() as usize;
        (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).find(|&y| self.classify(y) == verdict)
    }
}

/// Aggregated output membership `mu(y) = max_v imp(s_v, mu_v(y))`.
#[derive(Debug, Clone, Copy)]
pub struct Aggregated<'a> {
    system: &'a FuzzySystem,
    strengths: [f64; 3],
}

impl Aggregated<'_> {
    pub fn strengths(&self) -> [f64; 3] {
        self.strengths
    }

    pub fn membership(&self, y: f64) -> f64 {
        Verdict::ALL
            .iter()
            .map(|&v| {
                let s = self.strengths[v.index()];
                if s <= 0.0 {
                    return 0.0;
                }
                let mu = self.system.output_term(v).evaluate(y);
                match self.system.implication {
                    Implication::Min => s.min(mu),
                    Implication::Product => s * mu,
                }
            })
            .fold(0.0, f64::max)
    }

    /// Centre of mass of the aggregated set, or `None` when it is empty.
    ///
    /// Integrates by adaptive Simpson quadrature seeded with the output terms'
    /// breakpoints and the clipping levels' crossing points, which keeps the
    /// result accurate to well below 1e-9 relative for piecewise-linear terms.
    pub fn centroid(&self) -> Option<f64> {
        if self.strengths.iter().all(|&s| s <= 0.0) {
            return None;
        }
        let (lo, hi) = self.system.detection.range();
        let mut cuts: Vec<f64> = (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect();
        for v in Verdict::ALL {
            cuts.extend(self.system.output_term(v).breakpoints());
        }
        cuts.retain(|x| (lo..=hi).contains(x));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let f = |y: f64| {
            let mu = self.membership(y);
            [mu, y * mu]
        };
        let tol = 1e-12 * (hi - lo);
        let mut total = [0.0f64; 2];
        for w in cuts.windows(2) {
            let part = integrate(&f, w[0], w[1], tol / cuts.len() as f64);
            total[0] += part[0];
            total[1] += part[1];
        }
        if total[0] <= 0.0 {
            return None;
        }
        Some((total[1] / total[0]).clamp(lo, hi))
    }

    /// Samples the aggregated curve on `points` uniformly spaced abscissae.
    pub fn sample(&self, points: usize) -> SampledCurve {
        let (lo, hi) = self.system.detection.range();
        SampledCurve::from_fn(lo, hi, points, |y| self.membership(y))
    }
}

fn integrate(f: &impl Fn(f64) -> [f64; 2], a: f64, b: f64, tol: f64) -> [f64; 2] {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn simpson(a: f64, b: f64, fa: [f64; 2], fm: [f64; 2], fb: [f64; 2]) -> [f64; 2] {
    let h = (b - a) / 6.0;
    [h * (fa[0] + 4.0 * fm[0] + fb[0]), h * (fa[1] + 4.0 * fm[1] + fb[1])]
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> [f64; 2],
    a: f64,
    b: f64,
    fa: [f64; 2],
    fm: [f64; 2],
    fb: [f64; 2],
    whole: [f64; 2],
    tol: f64,
    depth: u32,
) -> [f64; 2] {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = [left[0] + right[0] - whole[0], left[1] + right[1] - whole[1]];
    // The first moment carries an extra factor of up to `b`, so scale its tolerance.
    let scale = b.abs().max(1.0);
    if depth == 0 || (delta[0].abs() <= 15.0 * tol && delta[1].abs() <= 15.0 * tol * scale) {
        return [
            left[0] + right[0] + delta[0] / 15.0,
            left[1] + right[1] + delta[1] / 15.0,
        ];
    }
    let l = adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
    let r = adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    [l[0] + r[0], l[1] + r[1]]
}

/// A membership curve sampled on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn from_fn(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> Self {
        let points = points.max(2);
        let step = (hi - lo) / (points - 1) as f64;
        Self { lo, hi, values: (0..points).map(|i| f(lo + step * i as f64)).collect() }
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.values.len() - 1) as f64
    }
}

/// Centroid of a sampled curve under the trapezoid rule.
pub fn defuzzify_centroid(curve: &SampledCurve) -> Result<f64, FuzzyError> {
    let n = curve.values.len();
    if n < 2 || curve.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(FuzzyError::InvalidCurve);
    }
    let (mut mass, mut moment) = (0.0, 0.0);
    for (i, &mu) in curve.values.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        mass += w * mu;
        moment += w * mu * curve.abscissa(i);
    }
    if mass <= 0.0 {
        return Err(FuzzyError::Inconclusive);
    }
    Ok((moment / mass).clamp(curve.lo, curve.hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::presets;

    fn tri(y: f64, a: f64, b: f64, c: f64) -> f64 {
        if y <= a || y >= c {
            0.0
        } else if y <= b {
            (y - a) / (b - a)
        } else {
            (c - y) / (c - b)
        }
    }

    #[test]
    fn centroid_of_symmetric_triangle() {
        let curve = SampledCurve::from_fn(0.0, 100.0, 1001, |y| tri(y, 30.0, 50.0, 70.0));
        assert!((defuzzify_centroid(&curve).unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn centroid_of_constant_curve() {
        let curve = SampledCurve::from_fn(0.0, 100.0, 1001, |_| 0.7);
        assert!((defuzzify_centroid(&curve).unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn centroid_of_two_disjoint_triangles() {
        let f = |y: f64| tri(y, 10.0, 20.0, 30.0).max(tri(y, 70.0, 80.0, 90.0));
        let curve = SampledCurve::from_fn(0.0, 100.0, 1001, f);
        let got = defuzzify_centroid(&curve).unwrap();
        // Independent fine-grid integration.
        let n = 100_001;
        let (mut m0, mut m1) = (0.0, 0.0);
        for i in 0..n {
            let y = 100.0 * i as f64 / (n - 1) as f64;
            m0 += f(y);
            m1 += y * f(y);
        }
        assert!((got - m1 / m0).abs() < 1e-9);
        assert!((got - 50.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_curve_is_inconclusive() {
        let curve = SampledCurve::from_fn(0.0, 100.0, 101, |_| 0.0);
        assert!(matches!(defuzzify_centroid(&curve), Err(FuzzyError::Inconclusive)));
    }

    #[test]
    fn benign_and_severe_corners() {
        let sys = presets::default_system();
        let benign = sys.infer(0.0, 0.0).unwrap();
        assert_eq!(benign.verdict, Verdict::No);
        assert!(!benign.inconclusive);
        let severe = sys.infer(100.0, 100.0).unwrap();
        assert_eq!(severe.verdict, Verdict::Yes);
        assert_eq!(severe.firing_strengths.len(), 9);
    }

    #[test]
    fn plateau_centroid_is_closed_form() {
        // Only (vital, major) fires, fully: centroid of trapezoid(60, 80, 100, 100).
        let out = presets::default_system().infer(90.0, 90.0).unwrap();
        let expected = (10.0 * (60.0 + 2.0 * 20.0 / 3.0) + 20.0 * 90.0) / 30.0;
        assert!((out.severity - expected).abs() < 1e-9, "{}", out.severity);
    }

    #[test]
    fn empty_rule_activation_is_inconclusive() {
        let sys = presets::default_system();
        assert!(sys.aggregate([0.0; 3]).centroid().is_none());
    }

    #[test]
    fn classify_breaks_ties_upward() {
        let sys = presets::default_system();
        // NO and WARNING both have degree 0.25 at 35.
        assert_eq!(sys.classify(35.0), Verdict::Warning);
        assert_eq!(sys.classify(65.0), Verdict::Yes);
        assert_eq!(sys.classify(10.0), Verdict::No);
        let yes_floor = sys.region_lower_bound(Verdict::Yes).unwrap();
        assert!((yes_floor - 65.0).abs() < 1e-9);
    }

    #[test]
    fn product_implication_is_scale_invariant() {
        let sys = presets::default_system().with_implication(Implication::Product);
        let base = [0.3, 0.8, 0.5];
        let c0 = sys.aggregate(base).centroid().unwrap();
        for k in [1.0, 0.75, 0.5, 0.1, 0.01] {
            let scaled = base.map(|s| s * k);
            let c = sys.aggregate(scaled).centroid().unwrap();
            assert!((c - c0).abs() < 1e-9 * c0, "k = {k}");
        }
    }
}
