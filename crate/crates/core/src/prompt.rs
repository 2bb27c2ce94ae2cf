//! Prompt rendering for per-row risk scores, per-row verbalized confidence,
//! and task-level self-assessment.
//!
//! Templates live in a versioned JSON file with `$NAME$` placeholders. The
//! default set is compiled in; a replacement can be loaded for ablations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{format_number, Cell, RowView};
use crate::error::{Error, Result};
use crate::tasks::TaskSpec;

const DEFAULT_TEMPLATES: &str = include_str!("../templates/prompts-v1.json");

pub const PH_DESCRIPTION: &str = "DESCRIPTION OF DATASET";
pub const PH_ROW: &str = "SERIALIZED ROW";
pub const PH_QUESTION: &str = "QUESTION";
pub const PH_POSITIVE: &str = "POSITIVE LABEL TEXT";
pub const PH_NEGATIVE: &str = "NEGATIVE LABEL TEXT";
pub const PH_TARGET: &str = "TARGET DESCRIPTION";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptMessages {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElicitationMode {
    DirectAuc,
    IntegerScore,
    DecimalScore,
}

impl ElicitationMode {
    pub const ALL: [ElicitationMode; 3] = [
        ElicitationMode::DirectAuc,
        ElicitationMode::IntegerScore,
        ElicitationMode::DecimalScore,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageTemplate {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationTemplates {
    pub system: String,
    pub direct_auc: String,
    pub integer_score: String,
    pub decimal_score: String,
}

/// A complete, versioned set of prompt templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub version: String,
    pub risk: MessageTemplate,
    pub verbalized: MessageTemplate,
    pub elicitation: ElicitationTemplates,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl PromptTemplates {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let templates: PromptTemplates = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        templates.validate()?;
        Ok(templates)
    }

    /// Rejects templates that reference unknown placeholders.
    pub fn validate(&self) -> Result<()> {
        let known = [PH_DESCRIPTION, PH_ROW, PH_QUESTION, PH_POSITIVE, PH_NEGATIVE, PH_TARGET];
        let vars: BTreeMap<&str, &str> = known.iter().map(|k| (*k, "")).collect();
        for t in [
            &self.risk.system,
            &self.risk.user,
            &self.verbalized.system,
            &self.verbalized.user,
            &self.elicitation.system,
            &self.elicitation.direct_auc,
            &self.elicitation.integer_score,
            &self.elicitation.decimal_score,
        ] {
            fill(t, &vars)?;
        }
        Ok(())
    }

    /// Multiple-choice prompt whose option `A` is always the positive label.
    pub fn render_risk(&self, spec: &TaskSpec, row: RowView<'_>) -> Result<PromptMessages> {
        require_metadata(spec)?;
        let serialized = serialize_row(row, &spec.feature_columns);
        let vars = BTreeMap::from([
            (PH_DESCRIPTION, spec.description.as_str()),
            (PH_ROW, serialized.as_str()),
            (PH_QUESTION, spec.question.as_str()),
            (PH_POSITIVE, spec.positive_text.as_str()),
            (PH_NEGATIVE, spec.negative_text.as_str()),
        ]);
        messages(&self.risk.system, &self.risk.user, &vars)
    }

    pub fn render_verbalized(&self, spec: &TaskSpec, row: RowView<'_>) -> Result<PromptMessages> {
        require_metadata(spec)?;
        if spec.description.trim().is_empty() {
            return Err(Error::MissingMetadata(format!("{}: description", spec.dataset)));
        }
        let serialized = serialize_row(row, &spec.feature_columns);
        let vars = BTreeMap::from([
            (PH_DESCRIPTION, spec.description.as_str()),
            (PH_ROW, serialized.as_str()),
            (PH_QUESTION, spec.question.as_str()),
        ]);
        messages(&self.verbalized.system, &self.verbalized.user, &vars)
    }

    pub fn render_elicitation(&self, spec: &TaskSpec, mode: ElicitationMode) -> Result<PromptMessages> {
        require_metadata(spec)?;
        if spec.description.trim().is_empty() {
            return Err(Error::MissingMetadata(format!("{}: description", spec.dataset)));
        }
        let target = target_description(spec);
        let vars = BTreeMap::from([
            (PH_DESCRIPTION, spec.description.as_str()),
            (PH_TARGET, target.as_str()),
            (PH_QUESTION, spec.question.as_str()),
            (PH_POSITIVE, spec.positive_text.as_str()),
            (PH_NEGATIVE, spec.negative_text.as_str()),
        ]);
        let user = match mode {
            ElicitationMode::DirectAuc => &self.elicitation.direct_auc,
            ElicitationMode::IntegerScore => &self.elicitation.integer_score,
            ElicitationMode::DecimalScore => &self.elicitation.decimal_score,
        };
        messages(&self.elicitation.system, user, &vars)
    }
}

fn target_description(spec: &TaskSpec) -> String {
    format!(
        "{} (question: \"{}\"; positive answer: \"{}\"; negative answer: \"{}\")",
        spec.target_column, spec.question, spec.positive_text, spec.negative_text
    )
}

fn require_metadata(spec: &TaskSpec) -> Result<()> {
    for (what, v) in [
        ("question", &spec.question),
        ("positive label text", &spec.positive_text),
        ("negative label text", &spec.negative_text),
    ] {
        if v.trim().is_empty() {
            return Err(Error::MissingMetadata(format!("{}: {what}", spec.task_id)));
        }
    }
    Ok(())
}

fn messages(system: &str, user: &str, vars: &BTreeMap<&str, &str>) -> Result<PromptMessages> {
    let system = fill(system, vars)?;
    let user = fill(user, vars)?;
    if system.trim().is_empty() || user.trim().is_empty() {
        return Err(Error::MissingMetadata("rendered prompt is empty".into()));
    }
    Ok(PromptMessages { system, user })
}

/// Single-pass placeholder substitution: substituted values are never
/// rescanned, so data containing `$...$` cannot inject placeholders.
fn fill(template: &str, vars: &BTreeMap<&str, &str>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find('$') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after.find('$').filter(|&e| {
            e > 0 && after[..e].chars().all(|c| c.is_ascii_uppercase() || c == ' ')
        });
        match end {
            Some(e) => {
                let name = &after[..e];
                let value = vars
                    .get(name)
                    .ok_or_else(|| Error::UnknownPlaceholder(name.to_string()))?;
                out.push_str(value);
                rest = &after[e + 1..];
            }
            None => {
                out.push('$');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders a value as it appears in a prompt; newlines collapse to spaces
/// so every feature stays on one line.
pub fn render_value(cell: &Cell) -> Option<String> {
    match cell {
        Cell::Missing => None,
        Cell::Number(v) => Some(format_number(*v)),
        Cell::Text(s) => Some(s.replace(['\r', '\n'], " ")),
    }
}

/// `Name: Value` lines in feature order, missing values omitted.
pub fn serialize_row(row: RowView<'_>, feature_columns: &[String]) -> String {
    feature_columns
        .iter()
        .filter_map(|name| {
            let cell = row.get(name)?;
            render_value(cell).map(|v| format!("{name}: {v}"))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`serialize_row`] on its own output.
pub fn parse_serialized_row(text: &str) -> Vec<(String, String)> {
    text.split('\n')
        .filter_map(|line| {
            line.split_once(": ")
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

pub fn render_risk_prompt(spec: &TaskSpec, row: RowView<'_>) -> Result<PromptMessages> {
    PromptTemplates::default().render_risk(spec, row)
}

pub fn render_verbalized_prompt(spec: &TaskSpec, row: RowView<'_>) -> Result<PromptMessages> {
    PromptTemplates::default().render_verbalized(spec, row)
}

pub fn render_task_elicitation_prompt(spec: &TaskSpec, mode: ElicitationMode) -> Result<PromptMessages> {
    PromptTemplates::default().render_elicitation(spec, mode)
}
