//! Supervised reference model: a logistic booster trained on part of a
//! labeled task and scored by AUC on the held-out rest.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit, Hyperparams, Objective};
use crate::dataset::{Cell, ColumnKind, DatasetProfile};
use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::tasks::LabeledTask;

pub const MAX_SPLIT_DRAWS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSplit {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for BaselineSplit {
    fn default() -> Self {
        BaselineSplit {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Numeric design matrix for a task, one row per task row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeatures {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

enum Encoding {
    Numeric,
    OneHot(Vec<String>),
}

fn category(cell: &Cell) -> Option<String> {
    (!cell.is_missing()).then(|| cell.to_string())
}

/// Encodes the task's feature columns. Continuous columns pass through with
/// NaN for missing cells; categorical columns are one-hot encoded over the
/// categories seen at `fit_positions` (positions into `task.rows`), so
/// unseen categories and missing cells encode as all zeros.
pub fn encode_features(task: &LabeledTask, dataset: &DatasetProfile, fit_positions: &[usize]) -> Result<EncodedFeatures> {
    let mut names = Vec::new();
    let mut plan = Vec::new();
    for name in &task.spec.feature_columns {
        let column = dataset
            .table
            .column(name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        let kind = dataset.profile(name).map_or(ColumnKind::Categorical, |p| p.kind);
        let encoding = match kind {
            ColumnKind::Continuous => {
                names.push(name.clone());
                Encoding::Numeric
            }
            ColumnKind::Categorical => {
                let seen: BTreeSet<String> = fit_positions
                    .iter()
                    .filter_map(|&p| category(&column.values[task.rows[p]]))
                    .collect();
                names.extend(seen.iter().map(|c| format!("{name}={c}")));
                Encoding::OneHot(seen.into_iter().collect())
            }
        };
        plan.push((&column.values, encoding));
    }
    let rows = task
        .rows
        .iter()
        .map(|&r| {
            let mut out = Vec::with_capacity(names.len());
            for (values, encoding) in &plan {
                let cell = &values[r];
                match encoding {
                    Encoding::Numeric => out.push(cell.as_number().unwrap_or(f64::NAN)),
                    Encoding::OneHot(categories) => {
                        let c = category(cell);
                        out.extend(categories.iter().map(|k| if c.as_ref() == Some(k) { 1.0 } else { 0.0 }));
                    }
                }
            }
            out
        })
        .collect();
    Ok(EncodedFeatures { names, rows })
}

fn has_both(labels: &[bool], positions: &[usize]) -> bool {
    positions.iter().any(|&p| labels[p]) && positions.iter().any(|&p| !labels[p])
}

/// Fits a logistic booster on a random `train_fraction` of the task rows and
/// returns its AUC on the disjoint remainder. Split draws are repeated with
/// successive seeds until both halves contain both classes.
pub fn train_supervised_baseline(
    task: &LabeledTask,
    dataset: &DatasetProfile,
    split: &BaselineSplit,
    hp: &Hyperparams,
) -> Result<f64> {
    let labels = task
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("task {} has no labels", task.spec.task_id)))?;
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
        return Err(Error::InvalidArgument("train_fraction must lie in (0, 1)".into()));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::UnsplittableTask(task.spec.task_id.clone()));
    }
    let n_train = ((split.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (train, eval) = (0..MAX_SPLIT_DRAWS)
        .find_map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(split.seed.wrapping_add(draw));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (train, eval) = order.split_at(n_train);
            let (mut train, mut eval) = (train.to_vec(), eval.to_vec());
            train.sort_unstable();
            eval.sort_unstable();
            (has_both(labels, &train) && has_both(labels, &eval)).then_some((train, eval))
        })
        .ok_or_else(|| Error::UnsplittableTask(task.spec.task_id.clone()))?;

    let encoded = encode_features(task, dataset, &train)?;
    if encoded.names.is_empty() {
        return Err(Error::NoEligibleFeatures(task.spec.task_id.clone()));
    }
    let x_train: Vec<Vec<f64>> = train.iter().map(|&p| encoded.rows[p].clone()).collect();
    let y_train: Vec<f64> = train.iter().map(|&p| f64::from(u8::from(labels[p]))).collect();
    let model = fit(&x_train, &y_train, hp, Objective::Logistic)?;
    let x_eval: Vec<Vec<f64>> = eval.iter().map(|&p| encoded.rows[p].clone()).collect();
    let y_eval: Vec<bool> = eval.iter().map(|&p| labels[p]).collect();
    auc(&model.predict(&x_eval)?, &y_eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_dataset, SyntheticSpec};
    use crate::tasks::{build_primary_task, materialize};

    fn synthetic(scale: f64, n: usize, seed: u64) -> (DatasetProfile, LabeledTask) {
        let spec = SyntheticSpec {
            d: 3,
            n,
            weights: vec![1.0, -1.0, 0.5],
            logit_scale: scale,
            seed,
        };
        let ds = generate_synthetic_dataset(&spec).unwrap();
        let task = materialize(&build_primary_task(&ds).unwrap(), &ds).unwrap();
        (ds, task)
    }

    #[test]
    fn strong_signal_is_learned() {
        let (ds, task) = synthetic(30.0, 600, 3);
        let a = train_supervised_baseline(&task, &ds, &BaselineSplit::default(), &Hyperparams::default()).unwrap();
        assert!(a > 0.95, "baseline auc {a}");
    }

    #[test]
    fn categorical_encoding_uses_training_categories() {
        let (mut ds, mut task) = synthetic(1.0, 20, 1);
        let colour: Vec<Cell> = (0..20)
            .map(|i| match i % 4 {
                0 => Cell::Text("red".into()),
                1 => Cell::Text("blue".into()),
                2 => Cell::Missing,
                _ => Cell::Text("green".into()),
            })
            .collect();
        let mut columns = ds.table.columns().to_vec();
        columns.push(crate::dataset::Column {
            name: "colour".into(),
            values: colour,
        });
        ds.table = crate::dataset::Table::new(columns).unwrap();
        ds.profiles = crate::dataset::infer_schema(&ds.table, 10).unwrap();
        task.spec.feature_columns = vec!["colour".into()];
        // fit rows 0, 1, 2 see red, blue, missing; green is unseen
        let enc = encode_features(&task, &ds, &[0, 1, 2]).unwrap();
        assert_eq!(enc.names, vec!["colour=blue", "colour=red"]);
        assert_eq!(enc.rows[0], vec![0.0, 1.0]);
        assert_eq!(enc.rows[1], vec![1.0, 0.0]);
        assert_eq!(enc.rows[2], vec![0.0, 0.0]);
        assert_eq!(enc.rows[3], vec![0.0, 0.0]);
    }

    #[test]
    fn one_positive_cannot_be_split() {
        let (ds, mut task) = synthetic(1.0, 30, 2);
        let mut labels = vec![false; task.len()];
        labels[0] = true;
        task.labels = Some(labels);
        assert!(matches!(
            train_supervised_baseline(&task, &ds, &BaselineSplit::default(), &Hyperparams::default()),
            Err(Error::UnsplittableTask(_))
        ));
    }
}
