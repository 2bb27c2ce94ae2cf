//! Construction of the designated prediction task and of masked proxy tasks
//! in which one feature is predicted from the others.

use log::debug;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_number, Cell, ColumnKind, ColumnProfile, DatasetProfile};
use crate::error::{Error, Result};

/// Columns with more missing values than this are never used as proxy targets.
pub const MAX_MISSING_FRACTION: f64 = 0.70;
/// Categorical proxy targets need a mode share within `[MIN, MAX]`.
pub const MAX_MODE_FRACTION: f64 = 0.99;
pub const MIN_MODE_FRACTION: f64 = 0.10;
pub const DEFAULT_PROXY_TASKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BinarizationRule {
    /// Positive iff the value is strictly greater than the median.
    AboveMedian { median: f64 },
    EqualsMode { mode: Cell },
    Designated { positive_value: Cell },
}

impl BinarizationRule {
    /// Label of one non-missing cell under this rule.
    pub fn apply(&self, cell: &Cell) -> Option<bool> {
        if cell.is_missing() {
            return None;
        }
        Some(match self {
            BinarizationRule::AboveMedian { median } => {
                cell.as_number().is_some_and(|v| v > *median)
            }
            BinarizationRule::EqualsMode { mode } => cell == mode,
            BinarizationRule::Designated { positive_value } => cell == positive_value,
        })
    }
}

/// One binary prediction task over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub dataset: String,
    /// Free-text dataset description shown to the model.
    pub description: String,
    pub target_column: String,
    pub rule: BinarizationRule,
    pub feature_columns: Vec<String>,
    pub question: String,
    pub positive_text: String,
    pub negative_text: String,
    pub is_proxy: bool,
}

/// A task bound to concrete rows. `labels` is `None` for unlabeled
/// (screening) use, where the target is never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTask {
    pub spec: TaskSpec,
    /// Indices into the dataset table.
    pub rows: Vec<usize>,
    pub labels: Option<Vec<bool>>,
}

impl LabeledTask {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label(&self, position: usize) -> Option<bool> {
        self.labels.as_ref().map(|l| l[position])
    }
}

pub fn primary_task_id(dataset: &str) -> String {
    format!("{dataset}::primary")
}

pub fn proxy_task_id(dataset: &str, column: &str) -> String {
    format!("{dataset}::proxy::{column}")
}

pub fn eligible_features(profiles: &[ColumnProfile]) -> Vec<String> {
    profiles
        .iter()
        .filter(|p| p.missing_fraction <= MAX_MISSING_FRACTION)
        .filter(|p| {
            p.kind == ColumnKind::Continuous
                || (MIN_MODE_FRACTION..=MAX_MODE_FRACTION).contains(&p.mode_fraction)
        })
        .map(|p| p.name.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binarized {
    pub labels: Vec<bool>,
    pub rule: BinarizationRule,
    /// Positions of the non-missing input values the labels refer to.
    pub kept_rows: Vec<usize>,
}

pub fn binarize_target(values: &[Cell], profile: &ColumnProfile) -> Result<Binarized> {
    let rule = rule_for(profile)?;
    let (kept_rows, labels): (Vec<usize>, Vec<bool>) = values
        .iter()
        .enumerate()
        .filter_map(|(i, c)| rule.apply(c).map(|l| (i, l)))
        .unzip();
    if kept_rows.len() < 2 || both_classes(&labels).is_none() {
        return Err(Error::DegenerateTask(profile.name.clone()));
    }
    Ok(Binarized {
        labels,
        rule,
        kept_rows,
    })
}

fn rule_for(profile: &ColumnProfile) -> Result<BinarizationRule> {
    match profile.kind {
        ColumnKind::Continuous => profile
            .median
            .map(|median| BinarizationRule::AboveMedian { median })
            .ok_or_else(|| Error::DegenerateTask(profile.name.clone())),
        ColumnKind::Categorical if profile.mode_value.is_missing() => {
            Err(Error::DegenerateTask(profile.name.clone()))
        }
        ColumnKind::Categorical => Ok(BinarizationRule::EqualsMode {
            mode: profile.mode_value.clone(),
        }),
    }
}

fn both_classes(labels: &[bool]) -> Option<()> {
    (labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)).then_some(())
}

fn proxy_question(column: &str, rule: &BinarizationRule) -> String {
    match rule {
        BinarizationRule::AboveMedian { median } => {
            format!("Is the value of {column} greater than {}?", format_number(*median))
        }
        BinarizationRule::EqualsMode { mode } => {
            format!("Is the value of {column} equal to '{mode}'?")
        }
        BinarizationRule::Designated { positive_value } => {
            format!("Is the value of {column} equal to '{positive_value}'?")
        }
    }
}

/// Samples up to `k` eligible columns (never the designated target) and
/// builds one proxy task per column. Returned in table column order.
pub fn build_masked_tasks(dataset: &DatasetProfile, k: usize, seed: u64) -> Result<Vec<TaskSpec>> {
    if k == 0 {
        return Err(Error::InvalidArgument("proxy task count must be at least 1".into()));
    }
    let target = dataset.designated_target.as_deref();
    let candidates: Vec<String> = eligible_features(&dataset.profiles)
        .into_iter()
        .filter(|c| Some(c.as_str()) != target)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoEligibleFeatures(dataset.name.clone()));
    }
    let take = k.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, candidates.len(), take).into_vec();
    picked.sort_unstable();

    picked
        .into_iter()
        .map(|i| {
            let column = &candidates[i];
            let profile = dataset
                .profile(column)
                .ok_or_else(|| Error::UnknownColumn(column.clone()))?;
            let rule = rule_for(profile)?;
            let feature_columns = dataset
                .table
                .column_names()
                .filter(|c| c != column && Some(*c) != target)
                .map(str::to_string)
                .collect();
            Ok(TaskSpec {
                task_id: proxy_task_id(&dataset.name, column),
                dataset: dataset.name.clone(),
                description: dataset.description.clone(),
                target_column: column.clone(),
                question: proxy_question(column, &rule),
                rule,
                feature_columns,
                positive_text: "Yes".into(),
                negative_text: "No".into(),
                is_proxy: true,
            })
        })
        .collect()
}

pub fn build_primary_task(dataset: &DatasetProfile) -> Result<TaskSpec> {
    let missing = |what: &str| Error::MissingMetadata(format!("{}: {what}", dataset.name));
    let target = dataset
        .designated_target
        .clone()
        .ok_or_else(|| missing("target"))?;
    let labels = dataset
        .label_texts
        .clone()
        .ok_or_else(|| missing("label_texts"))?;
    let question = dataset
        .question
        .clone()
        .filter(|q| !q.trim().is_empty())
        .ok_or_else(|| missing("question"))?;
    let positive_value = match &dataset.positive_value {
        Some(v) => v.clone(),
        None if dataset.labeled => return Err(missing("positive_value")),
        None => Cell::Missing,
    };
    if dataset.labeled && !dataset.table.has_column(&target) {
        return Err(Error::UnknownColumn(target));
    }
    let feature_columns = dataset
        .table
        .column_names()
        .filter(|c| *c != target)
        .map(str::to_string)
        .collect();
    Ok(TaskSpec {
        task_id: primary_task_id(&dataset.name),
        dataset: dataset.name.clone(),
        description: dataset.description.clone(),
        target_column: target,
        rule: BinarizationRule::Designated { positive_value },
        feature_columns,
        question,
        positive_text: labels.positive,
        negative_text: labels.negative,
        is_proxy: false,
    })
}

/// Applies the task's rule to its target column, dropping rows whose target
/// is missing.
pub fn materialize(spec: &TaskSpec, dataset: &DatasetProfile) -> Result<LabeledTask> {
    check_features(spec, dataset)?;
    let column = dataset
        .table
        .column(&spec.target_column)
        .ok_or_else(|| Error::UnknownColumn(spec.target_column.clone()))?;
    let (rows, labels): (Vec<usize>, Vec<bool>) = column
        .values
        .iter()
        .enumerate()
        .filter_map(|(i, c)| spec.rule.apply(c).map(|l| (i, l)))
        .unzip();
    if both_classes(&labels).is_none() {
        debug!("task {} is degenerate after binarization", spec.task_id);
        return Err(Error::DegenerateTask(spec.task_id.clone()));
    }
    Ok(LabeledTask {
        spec: spec.clone(),
        rows,
        labels: Some(labels),
    })
}

/// Binds every row to the task without touching the target column.
pub fn materialize_unlabeled(spec: &TaskSpec, dataset: &DatasetProfile) -> Result<LabeledTask> {
    check_features(spec, dataset)?;
    if dataset.table.row_count() == 0 {
        return Err(Error::EmptyTable);
    }
    Ok(LabeledTask {
        spec: spec.clone(),
        rows: (0..dataset.table.row_count()).collect(),
        labels: None,
    })
}

fn check_features(spec: &TaskSpec, dataset: &DatasetProfile) -> Result<()> {
    if spec.feature_columns.contains(&spec.target_column) {
        return Err(Error::InvalidArgument(format!(
            "task {} uses its target as a feature",
            spec.task_id
        )));
    }
    match spec
        .feature_columns
        .iter()
        .find(|c| !dataset.table.has_column(c))
    {
        Some(c) => Err(Error::UnknownColumn(c.clone())),
        None => Ok(()),
    }
}
