//! Parametric membership functions over a percent-deviation axis.

use serde::{Deserialize, Serialize};

use super::FuzzyError;

/// Curve family plus its shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Triangular { a: f64, b: f64, c: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
    Gaussian { center: f64, sigma: f64 },
    Spline(BSpline),
}

/// A labelled membership function. Construction validates the parameters, so
/// evaluation never fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    label: String,
    shape: Shape,
}

impl MembershipFunction {
    pub fn triangular(label: impl Into<String>, a: f64, b: f64, c: f64) -> Result<Self, FuzzyError> {
        let label = label.into();
        check_finite(&label, &[a, b, c])?;
        if !(a <= b && b <= c) || a >= c {
            return Err(FuzzyError::InvalidParams {
                label,
                reason: format!("triangular needs a <= b <= c with a < c, got ({a}, {b}, {c})"),
            });
        }
        Ok(Self { label, shape: Shape::Triangular { a, b, c } })
    }

    pub fn trapezoidal(
        label: impl Into<String>,
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    ) -> Result<Self, FuzzyError> {
        let label = label.into();
        check_finite(&label, &[a, b, c, d])?;
        if !(a <= b && b <= c && c <= d) || a >= d {
            return Err(FuzzyError::InvalidParams {
                label,
                reason: format!(
                    "trapezoidal needs a <= b <= c <= d with a < d, got ({a}, {b}, {c}, {d})"
                ),
            });
        }
        Ok(Self { label, shape: Shape::Trapezoidal { a, b, c, d } })
    }

    pub fn gaussian(label: impl Into<String>, center: f64, sigma: f64) -> Result<Self, FuzzyError> {
        let label = label.into();
        check_finite(&label, &[center, sigma])?;
        if sigma <= 0.0 {
            return Err(FuzzyError::InvalidParams {
                label,
                reason: format!("gaussian sigma must be > 0, got {sigma}"),
            });
        }
        Ok(Self { label, shape: Shape::Gaussian { center, sigma } })
    }

    /// Normalized B-spline basis function of order `knots.len() - 1`.
    pub fn spline(label: impl Into<String>, knots: &[f64]) -> Result<Self, FuzzyError> {
        let label = label.into();
        check_finite(&label, knots)?;
        let spline = BSpline::new(knots).map_err(|reason| FuzzyError::InvalidParams {
            label: label.clone(),
            reason,
        })?;
        Ok(Self { label, shape: Shape::Spline(spline) })
    }

    /// Builds from a kind name and a flat parameter list, as found in config files.
    pub fn from_kind(label: impl Into<String>, kind: &str, params: &[f64]) -> Result<Self, FuzzyError> {
        let label = label.into();
        let arity = |n: usize| -> Result<(), FuzzyError> {
            if params.len() == n {
                Ok(())
            } else {
                Err(FuzzyError::InvalidParams {
                    label: label.clone(),
                    reason: format!("{kind} takes {n} parameters, got {}", params.len()),
                })
            }
        };
        match kind {
            "triangular" => {
                arity(3)?;
                Self::triangular(label.clone(), params[0], params[1], params[2])
            }
            "trapezoidal" => {
                arity(4)?;
                Self::trapezoidal(label.clone(), params[0], params[1], params[2], params[3])
            }
            "gaussian" => {
                arity(2)?;
                Self::gaussian(label.clone(), params[0], params[1])
            }
            "spline" => Self::spline(label.clone(), params),
            other => Err(FuzzyError::InvalidParams {
                label: label.clone(),
                reason: format!("unknown membership kind `{other}`"),
            }),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn kind(&self) -> &'static str {
        match self.shape {
            Shape::Triangular { .. } => "triangular",
            Shape::Trapezoidal { .. } => "trapezoidal",
            Shape::Gaussian { .. } => "gaussian",
            Shape::Spline(_) => "spline",
        }
    }

    /// Flat parameter list, the inverse of [`MembershipFunction::from_kind`].
    pub fn params(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Triangular { a, b, c } => vec![*a, *b, *c],
            Shape::Trapezoidal { a, b, c, d } => vec![*a, *b, *c, *d],
            Shape::Gaussian { center, sigma } => vec![*center, *sigma],
            Shape::Spline(s) => s.knots.clone(),
        }
    }

    /// Degree of membership of `x`, always within `[0, 1]`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let mu = match &self.shape {
            Shape::Triangular { a, b, c } => triangular(x, *a, *b, *c),
            Shape::Trapezoidal { a, b, c, d } => trapezoidal(x, *a, *b, *c, *d),
            Shape::Gaussian { center, sigma } => {
                let z = (x - center) / sigma;
                (-0.5 * z * z).exp()
            }
            Shape::Spline(s) => s.evaluate(x),
        };
        if mu.is_nan() {
            0.0
        } else {
            mu.clamp(0.0, 1.0)
        }
    }

    /// Points where the curve may have a kink or jump. Used to seed quadrature panels.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Gaussian { center, .. } => vec![*center],
            _ => self.params(),
        }
    }

    /// Abscissa of the curve's maximum.
    pub fn peak(&self) -> f64 {
        match &self.shape {
            Shape::Triangular { b, .. } => *b,
            Shape::Trapezoidal { b, c, .. } => 0.5 * (b + c),
            Shape::Gaussian { center, .. } => *center,
            Shape::Spline(s) => s.peak_at,
        }
    }
}

fn check_finite(label: &str, params: &[f64]) -> Result<(), FuzzyError> {
    if params.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(FuzzyError::InvalidParams {
            label: label.to_string(),
            reason: "parameters must be finite".into(),
        })
    }
}

fn triangular(x: f64, a: f64, b: f64, c: f64) -> f64 {
    if x < a || x > c {
        0.0
    } else if x == b {
        1.0
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (c - x) / (c - b)
    }
}

fn trapezoidal(x: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    if x < a || x > d {
        0.0
    } else if (b..=c).contains(&x) {
        1.0
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (d - x) / (d - c)
    }
}

/// A single B-spline basis function over `order + 1` non-decreasing knots,
/// rescaled so that its maximum is exactly one. Repeated knots are allowed and
/// produce shoulders at the ends of the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BSpline {
    knots: Vec<f64>,
    peak_at: f64,
    peak_value: f64,
}

impl TryFrom<Vec<f64>> for BSpline {
    type Error = String;

    fn try_from(knots: Vec<f64>) -> Result<Self, String> {
        BSpline::new(&knots)
    }
}

impl From<BSpline> for Vec<f64> {
    fn from(s: BSpline) -> Self {
        s.knots
    }
}

impl BSpline {
    pub fn new(knots: &[f64]) -> Result<Self, String> {
        if knots.len() < 2 {
            return Err(format!("spline needs at least 2 knots, got {}", knots.len()));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err("spline knots must be non-decreasing".into());
        }
        let (lo, hi) = (knots[0], knots[knots.len() - 1]);
        if lo >= hi {
            return Err("spline support must have positive width".into());
        }
        let mut spline = Self { knots: knots.to_vec(), peak_at: lo, peak_value: 1.0 };

        // B-spline basis functions are log-concave, hence unimodal on their support.
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if spline.raw(m1) < spline.raw(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        let mut best = (0.5 * (a + b), spline.raw(0.5 * (a + b)));
        for x in [lo, hi] {
            let v = spline.raw(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        if best.1 <= 0.0 {
            return Err("spline basis vanishes everywhere".into());
        }
        spline.peak_at = best.0;
        spline.peak_value = best.1;
        Ok(spline)
    }

    pub fn order(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        (self.raw(x) / self.peak_value).min(1.0)
    }

    /// Cox-de Boor recursion for the basis function over all knots. The right
    /// end of the support is closed so that a repeated final knot yields a
    /// right shoulder.
    fn raw(&self, x: f64) -> f64 {
        let t = &self.knots;
        let order = t.len() - 1;
        let (lo, hi) = (t[0], t[order]);
        if x < lo || x > hi {
            return 0.0;
        }
        let last_open = (0..order).rev().find(|&j| t[j] < t[j + 1]).unwrap_or(0);
        let mut basis: Vec<f64> = (0..order)
            .map(|j| {
                let inside = t[j] <= x && x < t[j + 1];
                let closing = x == hi && j == last_open;
                if inside || closing {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for k in 2..=order {
            for j in 0..=(order - k) {
                let left_span = t[j + k - 1] - t[j];
                let right_span = t[j + k] - t[j + 1];
                let left = if left_span > 0.0 { (x - t[j]) / left_span * basis[j] } else { 0.0 };
                let right =
                    if right_span > 0.0 { (t[j + k] - x) / right_span * basis[j + 1] } else { 0.0 };
                basis[j] = left + right;
            }
        }
        basis[0]
    }
}
