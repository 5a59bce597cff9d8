use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FuzzyError;

/// Detection outcome, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    No,
    Warning,
    Yes,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::No, Verdict::Warning, Verdict::Yes];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::No => "NO",
            Verdict::Warning => "WARNING",
            Verdict::Yes => "YES",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = FuzzyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NO" => Ok(Verdict::No),
            "WARNING" => Ok(Verdict::Warning),
            "YES" => Ok(Verdict::Yes),
            _ => Err(FuzzyError::InvalidRules(format!("unknown verdict `{s}`"))),
        }
    }
}

/// Error-term rows by weight-term columns, each cell naming the verdict the
/// rule concludes.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMatrix {
    error_terms: Vec<String>,
    weight_terms: Vec<String>,
    cells: Vec<Vec<Verdict>>,
}

impl RuleMatrix {
    pub fn new(
        error_terms: Vec<String>,
        weight_terms: Vec<String>,
        cells: Vec<Vec<Verdict>>,
    ) -> Result<Self, FuzzyError> {
        if error_terms.is_empty() || weight_terms.is_empty() {
            return Err(FuzzyError::InvalidRules("empty term list".into()));
        }
        if cells.len() != error_terms.len() || cells.iter().any(|r| r.len() != weight_terms.len()) {
            return Err(FuzzyError::InvalidRules(format!(
                "expected a {}x{} grid of cells",
                error_terms.len(),
                weight_terms.len()
            )));
        }
        if cells[0][0] != Verdict::No {
            return Err(FuzzyError::InvalidRules(
                "the least severe cell must conclude NO".into(),
            ));
        }
        for (i, row) in cells.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let down = cells.get(i + 1).map(|r| r[j]);
                let right = row.get(j + 1).copied();
                if down.is_some_and(|d| d < v) || right.is_some_and(|r| r < v) {
                    return Err(FuzzyError::InvalidRules(format!(
                        "matrix is not monotone at ({}, {})",
                        error_terms[i], weight_terms[j]
                    )));
                }
            }
        }
        Ok(Self { error_terms, weight_terms, cells })
    }

    pub fn error_terms(&self) -> &[String] {
        &self.error_terms
    }

    pub fn weight_terms(&self) -> &[String] {
        &self.weight_terms
    }

    pub fn cells(&self) -> &[Vec<Verdict>] {
        &self.cells
    }

    pub fn cell(&self, error_term: &str, weight_term: &str) -> Option<Verdict> {
        let i = self.error_terms.iter().position(|t| t == error_term)?;
        let j = self.weight_terms.iter().position(|t| t == weight_term)?;
        Some(self.cells[i][j])
    }

    /// Iterates `(row, column, verdict)` over all rules in row-major order.
    pub fn rules(&self) -> impl Iterator<Item = (usize, usize, Verdict)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)))
    }
}

impl Default for RuleMatrix {
    fn default() -> Self {
        use Verdict::*;
        let s = |v: &[&str]| v.iter().map(|t| t.to_string()).collect();
        Self::new(
            s(&["trivial", "fair", "vital"]),
            s(&["minor", "average", "major"]),
            vec![vec![No, No, Warning], vec![No, Warning, Yes], vec![Warning, Yes, Yes]],
        )
        .expect("default matrix is valid")
    }
}
