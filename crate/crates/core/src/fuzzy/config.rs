//! TOML configuration for partitions and the rule matrix.
//!
//! Every section is optional; omitted sections fall back to the built-in
//! defaults. See `docs/config.md` for the grammar.

use serde::{Deserialize, Serialize};

use super::{
    presets, FuzzyError, FuzzySystem, Implication, LinguisticVariable, MembershipFunction,
    RuleMatrix, Verdict,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<VariableSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<VariableSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<VariableSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<RulesSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    pub implication: Implication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub range: [f64; 2],
    pub terms: Vec<TermSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSection {
    pub label: String,
    pub kind: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesSection {
    /// Error terms, one per matrix row.
    pub rows: Vec<String>,
    /// Weight terms, one per matrix column.
    pub columns: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

impl VariableSection {
    fn from_variable(var: &LinguisticVariable) -> Self {
        Self {
            name: Some(var.name().to_string()),
            range: [var.range().0, var.range().1],
            terms: var
                .terms()
                .iter()
                .map(|t| TermSection {
                    label: t.label().to_string(),
                    kind: t.kind().to_string(),
                    params: t.params(),
                })
                .collect(),
        }
    }

    fn build(&self, default_name: &str) -> Result<LinguisticVariable, FuzzyError> {
        let terms = self
            .terms
            .iter()
            .map(|t| MembershipFunction::from_kind(t.label.clone(), &t.kind, &t.params))
            .collect::<Result<Vec<_>, _>>()?;
        LinguisticVariable::new(
            self.name.clone().unwrap_or_else(|| default_name.to_string()),
            (self.range[0], self.range[1]),
            terms,
        )
    }
}

impl FuzzyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, FuzzyError> {
        toml::from_str(text).map_err(|e| FuzzyError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// A fully spelled-out config equal to `system`.
    pub fn from_system(system: &FuzzySystem) -> Self {
        let rules = system.rules();
        Self {
            inference: Some(InferenceSection { implication: system.implication() }),
            error: Some(VariableSection::from_variable(system.error())),
            weight: Some(VariableSection::from_variable(system.weight())),
            detection: Some(VariableSection::from_variable(system.detection())),
            rules: Some(RulesSection {
                rows: rules.error_terms().to_vec(),
                columns: rules.weight_terms().to_vec(),
                cells: rules
                    .cells()
                    .iter()
                    .map(|r| r.iter().map(|v| v.as_str().to_string()).collect())
                    .collect(),
            }),
        }
    }

    pub fn build(&self) -> Result<FuzzySystem, FuzzyError> {
        let var = |section: &Option<VariableSection>, name: &str, fallback: fn() -> LinguisticVariable| {
            section.as_ref().map_or_else(|| Ok(fallback()), |s| s.build(name))
        };
        let error = var(&self.error, "Error", presets::error_variable)?;
        let weight = var(&self.weight, "Weight", presets::weight_variable)?;
        let detection = var(&self.detection, "Detection", presets::detection_variable)?;
        let rules = match &self.rules {
            None => RuleMatrix::default(),
            Some(r) => {
                let cells = r
                    .cells
                    .iter()
                    .map(|row| row.iter().map(|c| c.parse::<Verdict>()).collect())
                    .collect::<Result<Vec<Vec<_>>, _>>()?;
                RuleMatrix::new(r.rows.clone(), r.columns.clone(), cells)?
            }
        };
        let implication = self.inference.as_ref().map_or(Implication::Min, |i| i.implication);
        FuzzySystem::new(error, weight, detection, rules, implication)
    }
}
