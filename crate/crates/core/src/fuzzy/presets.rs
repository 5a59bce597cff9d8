//! Built-in partitions on the `[0, 100]` percent-deviation axis.

use super::{FuzzySystem, Implication, LinguisticVariable, MembershipFunction, RuleMatrix};

pub const RANGE: (f64, f64) = (0.0, 100.0);

fn piecewise(labels: [&str; 3]) -> Vec<MembershipFunction> {
    vec![
        MembershipFunction::trapezoidal(labels[0], 0.0, 0.0, 15.0, 30.0).unwrap(),
        MembershipFunction::triangular(labels[1], 20.0, 37.5, 55.0).unwrap(),
        MembershipFunction::trapezoidal(labels[2], 45.0, 60.0, 100.0, 100.0).unwrap(),
    ]
}

fn gaussian(labels: [&str; 3]) -> Vec<MembershipFunction> {
    vec![
        MembershipFunction::gaussian(labels[0], 0.0, 12.0).unwrap(),
        MembershipFunction::gaussian(labels[1], 37.5, 10.0).unwrap(),
        MembershipFunction::gaussian(labels[2], 100.0, 20.0).unwrap(),
    ]
}

/// Cubic B-splines peaking where the gaussian preset peaks.
fn spline(labels: [&str; 3]) -> Vec<MembershipFunction> {
    vec![
        MembershipFunction::spline(labels[0], &[-30.0, -15.0, 0.0, 15.0, 30.0]).unwrap(),
        MembershipFunction::spline(labels[1], &[10.0, 23.75, 37.5, 51.25, 65.0]).unwrap(),
        MembershipFunction::spline(labels[2], &[40.0, 70.0, 100.0, 130.0, 160.0]).unwrap(),
    ]
}

const ERROR_TERMS: [&str; 3] = ["trivial", "fair", "vital"];
const WEIGHT_TERMS: [&str; 3] = ["minor", "average", "major"];

pub fn error_variable() -> LinguisticVariable {
    LinguisticVariable::new("Error", RANGE, piecewise(ERROR_TERMS)).unwrap()
}

pub fn weight_variable() -> LinguisticVariable {
    LinguisticVariable::new("Weight", RANGE, piecewise(WEIGHT_TERMS)).unwrap()
}

pub fn detection_variable() -> LinguisticVariable {
    LinguisticVariable::new(
        "Detection",
        RANGE,
        vec![
            MembershipFunction::trapezoidal("NO", 0.0, 0.0, 20.0, 40.0).unwrap(),
            MembershipFunction::triangular("WARNING", 30.0, 50.0, 70.0).unwrap(),
            MembershipFunction::trapezoidal("YES", 60.0, 80.0, 100.0, 100.0).unwrap(),
        ],
    )
    .unwrap()
}

/// Trapezoid/triangle input partitions with the default rule matrix.
pub fn default_system() -> FuzzySystem {
    FuzzySystem::new(
        error_variable(),
        weight_variable(),
        detection_variable(),
        RuleMatrix::default(),
        Implication::Min,
    )
    .expect("default system is consistent")
}

/// Gaussian input partitions, same output and rules.
pub fn gaussian_system() -> FuzzySystem {
    FuzzySystem::new(
        LinguisticVariable::new("Error", RANGE, gaussian(ERROR_TERMS)).unwrap(),
        LinguisticVariable::new("Weight", RANGE, gaussian(WEIGHT_TERMS)).unwrap(),
        detection_variable(),
        RuleMatrix::default(),
        Implication::Min,
    )
    .unwrap()
}

/// Cubic B-spline input partitions with the gaussian preset's peak locations.
pub fn spline_system() -> FuzzySystem {
    FuzzySystem::new(
        LinguisticVariable::new("Error", RANGE, spline(ERROR_TERMS)).unwrap(),
        LinguisticVariable::new("Weight", RANGE, spline(WEIGHT_TERMS)).unwrap(),
        detection_variable(),
        RuleMatrix::default(),
        Implication::Min,
    )
    .unwrap()
}
