use std::collections::BTreeSet;

use serde::Serialize;

use super::{FuzzyError, MembershipFunction};

/// Samples used when checking that the terms cover the whole range.
const COVERAGE_SAMPLES: usize = 10_001;

/// A named universe of discourse with its ordered linguistic terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable {
    name: String,
    range: (f64, f64),
    terms: Vec<MembershipFunction>,
}

/// Degrees of membership for one crisp input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fuzzified {
    /// The input actually evaluated, after clamping into the range.
    pub input: f64,
    pub clamped: bool,
    /// One `(label, degree)` pair per term, in term order.
    pub degrees: Vec<(String, f64)>,
}

impl Fuzzified {
    pub fn degree(&self, label: &str) -> Option<f64> {
        self.degrees.iter().find(|(l, _)| l == label).map(|(_, d)| *d)
    }
}

impl LinguisticVariable {
    pub fn new(
        name: impl Into<String>,
        range: (f64, f64),
        terms: Vec<MembershipFunction>,
    ) -> Result<Self, FuzzyError> {
        let name = name.into();
        let (lo, hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FuzzyError::InvalidVariable {
                name,
                reason: format!("range [{lo}, {hi}] is not a proper interval"),
            });
        }
        if terms.is_empty() {
            return Err(FuzzyError::InvalidVariable { name, reason: "no terms".into() });
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if !seen.insert(t.label().to_string()) {
                return Err(FuzzyError::InvalidVariable {
                    name,
                    reason: format!("duplicate term label `{}`", t.label()),
                });
            }
        }

        let var = Self { name, range, terms };
        let step = (hi - lo) / (COVERAGE_SAMPLES - 1) as f64;
        let probes = (0..COVERAGE_SAMPLES)
            .map(|i| lo + step * i as f64)
            .chain(var.terms.iter().flat_map(|t| t.breakpoints()))
            .filter(|x| (lo..=hi).contains(x));
        for x in probes {
            if var.terms.iter().all(|t| t.evaluate(x) <= 0.0) {
                return Err(FuzzyError::InvalidVariable {
                    name: var.name,
                    reason: format!("no term covers x = {x}"),
                });
            }
        }
        Ok(var)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn terms(&self) -> &[MembershipFunction] {
        &self.terms
    }

    pub fn term(&self, label: &str) -> Option<&MembershipFunction> {
        self.terms.iter().find(|t| t.label() == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.label())
    }

    /// Maps a crisp value to one degree per term, clamping out-of-range inputs.
    pub fn fuzzify(&self, x: f64) -> Result<Fuzzified, FuzzyError> {
        if !x.is_finite() {
            return Err(FuzzyError::NonFinite { variable: self.name.clone(), value: x });
        }
        let (lo, hi) = self.range;
        let input = x.clamp(lo, hi);
        let degrees = self
            .terms
            .iter()
            .map(|t| (t.label().to_string(), t.evaluate(input)))
            .collect();
        Ok(Fuzzified { input, clamped: input != x, degrees })
    }
}
