//! Mamdani fuzzy inference over percent-deviation inputs.
//!
//! Two inputs (Error and Weight deviation, both on `[0, 100]`) are fuzzified
//! against three linguistic terms each, combined through a 3x3 rule matrix,
//! and defuzzified into a Detection severity with a NO / WARNING / YES label.

mod config;
mod inference;
mod membership;
pub mod presets;
mod rules;
mod variable;

pub use config::FuzzyConfig;
pub use inference::{
    defuzzify_centroid, Aggregated, FuzzyOutput, FuzzySystem, Implication, RuleFiring,
    SampledCurve,
};
pub use membership::{BSpline, MembershipFunction, Shape};
pub use rules::{RuleMatrix, Verdict};
pub use variable::{Fuzzified, LinguisticVariable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FuzzyError {
    #[error("invalid parameters for `{label}`: {reason}")]
    InvalidParams { label: String, reason: String },
    #[error("invalid linguistic variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },
    #[error("invalid rule matrix: {0}")]
    InvalidRules(String),
    #[error("non-finite input {value} for `{variable}`")]
    NonFinite { variable: String, value: f64 },
    #[error("sampled curve must have at least two finite, non-negative samples")]
    InvalidCurve,
    #[error("aggregated output is empty; no rule fired")]
    Inconclusive,
    #[error("config: {0}")]
    Config(String),
}
