//! Predicting task-level AUC from the distribution of unlabeled risk scores:
//! percentile featurization, dataset-grouped cross-validation, threshold
//! sweeps, and empirical CDF extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boost::{fit, Hyperparams, Objective};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{cmp_finite, ensure_finite, interpolate, is_constant, mean, pearson, sample_std};

/// Percentiles at 0, 0.5, ..., 100.
pub const PERCENTILE_COUNT: usize = 201;
pub const DEFAULT_SWEEP_POINTS: usize = 50;
pub const DEFAULT_EXTREME_TASKS: usize = 10;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PercentileFeatures<T: Scalar> {
    pub percentiles: Vec<T>,
    pub std_risk: T,
}

impl<T: Scalar> PercentileFeatures<T> {
    /// The 202-wide regressor input: percentiles followed by the standard
    /// deviation.
    pub fn to_vector(&self) -> Vec<T> {
        let mut v = self.percentiles.clone();
        v.push(self.std_risk);
        v
    }
}

/// Linear-interpolation percentiles: the value at position
/// `alpha / 100 * (n - 1)` of the sorted scores.
pub fn percentile_features<T: Scalar>(scores: &[T]) -> Result<PercentileFeatures<T>> {
    let std_risk = sample_std(scores)?;
    ensure_finite(scores)?;
    if let Some(bad) = scores.iter().find(|&&s| s < T::zero() || s > T::one()) {
        return Err(Error::OutOfRange(bad.to_f64_lossy()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(cmp_finite);
    let n = sorted.len();
    let steps = PERCENTILE_COUNT - 1;
    let percentiles = (0..PERCENTILE_COUNT)
        .map(|i| {
            let scaled = i * (n - 1);
            let lo = scaled / steps;
            let frac = T::from_count(scaled % steps) / T::from_count(steps);
            interpolate(sorted[lo], sorted[(lo + 1).min(n - 1)], frac)
        })
        .collect();
    Ok(PercentileFeatures { percentiles, std_risk })
}

/// Fold index per task; every task of a dataset shares its fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, task_id: &str) -> Option<usize> {
        self.folds.get(task_id).copied()
    }
}

/// Shuffles the distinct dataset ids with `seed` and deals them round-robin
/// into `k` folds.
pub fn grouped_kfold(tasks: &[(String, String)], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument("at least 2 folds are required".into()));
    }
    let mut datasets: Vec<&str> = tasks
        .iter()
        .map(|(_, d)| d.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if datasets.len() < k {
        return Err(Error::TooFewGroups {
            groups: datasets.len(),
            folds: k,
        });
    }
    datasets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: BTreeMap<&str, usize> = datasets.iter().enumerate().map(|(i, &d)| (d, i % k)).collect();
    let mut folds = BTreeMap::new();
    for (task, dataset) in tasks {
        if folds.insert(task.clone(), fold_of[dataset.as_str()]).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate task id {task}")));
        }
    }
    Ok(FoldAssignment { k, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureRow<T: Scalar> {
    pub task_id: String,
    pub dataset_id: String,
    pub features: PercentileFeatures<T>,
    pub actual_auc: T,
}

/// Which tasks trained and which were scored in one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: usize,
    pub train_tasks: Vec<String>,
    pub test_tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CvOutcome<T: Scalar> {
    /// One out-of-fold prediction per input row, in input order.
    pub predictions: Vec<(String, T)>,
    pub folds: Vec<FoldTrace>,
}

/// Out-of-fold AUC predictions from squared-error boosters trained on the
/// other folds. Folds come from [`grouped_kfold`] seeded with `hp.seed`.
pub fn cross_val_predict_auc<T: Scalar>(table: &[FeatureRow<T>], k: usize, hp: &Hyperparams) -> Result<CvOutcome<T>> {
    let layout: Vec<(String, String)> = table
        .iter()
        .map(|r| (r.task_id.clone(), r.dataset_id.clone()))
        .collect();
    let assignment = grouped_kfold(&layout, k, hp.seed)?;
    let fold_of: Vec<usize> = table
        .iter()
        .map(|r| assignment.fold_of(&r.task_id).expect("every task is assigned"))
        .collect();
    let inputs: Vec<Vec<T>> = table.iter().map(|r| r.features.to_vector()).collect();
    let targets: Vec<T> = table.iter().map(|r| r.actual_auc).collect();
    ensure_finite(&targets)?;

    let fold_results: Vec<Result<(FoldTrace, Vec<(usize, T)>)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..k)
            .map(|fold| {
                let (inputs, targets, fold_of) = (&inputs, &targets, &fold_of);
                scope.spawn(move || {
                    let (train, test): (Vec<usize>, Vec<usize>) = (0..table.len()).partition(|&i| fold_of[i] != fold);
                    let train_sets: BTreeSet<&str> = train.iter().map(|&i| table[i].dataset_id.as_str()).collect();
                    assert!(
                        test.iter().all(|&i| !train_sets.contains(table[i].dataset_id.as_str())),
                        "dataset leaked across fold {fold}"
                    );
                    let x: Vec<Vec<T>> = train.iter().map(|&i| inputs[i].clone()).collect();
                    let y: Vec<T> = train.iter().map(|&i| targets[i]).collect();
                    let model = fit(&x, &y, hp, Objective::SquaredError)?;
                    let preds = test
                        .iter()
                        .map(|&i| model.predict_row(&inputs[i]).map(|p| (i, p)))
                        .collect::<Result<Vec<_>>>()?;
                    let trace = FoldTrace {
                        fold,
                        train_tasks: train.iter().map(|&i| table[i].task_id.clone()).collect(),
                        test_tasks: test.iter().map(|&i| table[i].task_id.clone()).collect(),
                    };
                    Ok((trace, preds))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
    });

    let mut predicted: Vec<Option<T>> = vec![None; table.len()];
    let mut folds = Vec::with_capacity(k);
    for result in fold_results {
        let (trace, preds) = result?;
        for (i, p) in preds {
            predicted[i] = Some(p);
        }
        folds.push(trace);
    }
    let predictions = table
        .iter()
        .zip(predicted)
        .map(|(r, p)| (r.task_id.clone(), p.expect("every task is tested once")))
        .collect();
    Ok(CvOutcome { predictions, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SweepPoint<T: Scalar> {
    pub threshold: T,
    pub mean_auc: T,
    pub task_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SweepCurve<T: Scalar> {
    /// Name of the swept metric, such as `std_risk`.
    pub metric: String,
    pub points: Vec<SweepPoint<T>>,
}

/// Mean AUC over the tasks whose metric is at least each threshold.
/// Thresholds with no surviving task are omitted.
pub fn threshold_sweep<T: Scalar>(
    metric: &str,
    values: &[T],
    aucs: &[T],
    thresholds: &[T],
) -> Result<SweepCurve<T>> {
    if values.len() != aucs.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: aucs.len(),
        });
    }
    ensure_finite(values)?;
    ensure_finite(aucs)?;
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("thresholds must be sorted ascending".into()));
    }
    let points = thresholds
        .iter()
        .filter_map(|&t| {
            let kept: Vec<T> = values
                .iter()
                .zip(aucs)
                .filter(|(&v, _)| v >= t)
                .map(|(_, &a)| a)
                .collect();
            mean(&kept).map(|mean_auc| SweepPoint {
                threshold: t,
                mean_auc,
                task_count: kept.len(),
            })
        })
        .collect();
    Ok(SweepCurve {
        metric: metric.to_string(),
        points,
    })
}

/// `count` evenly spaced thresholds from the smallest to the largest value.
pub fn even_thresholds<T: Scalar>(values: &[T], count: usize) -> Vec<T> {
    let finite: Vec<T> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (Some(lo), Some(hi)) = (
        finite.iter().copied().reduce(T::min),
        finite.iter().copied().reduce(T::max),
    ) else {
        return Vec::new();
    };
    if count <= 1 || lo == hi {
        return vec![lo];
    }
    let last = T::from_count(count - 1);
    (0..count)
        .map(|i| if i == count - 1 { hi } else { lo + (hi - lo) * T::from_count(i) / last })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EmpiricalCdf<T: Scalar> {
    pub task_id: String,
    pub predicted_auc: T,
    /// (score, fraction of scores <= score), one point per sorted score.
    pub points: Vec<(T, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ExtremeCdfs<T: Scalar> {
    pub highest: Vec<EmpiricalCdf<T>>,
    pub lowest: Vec<EmpiricalCdf<T>>,
}

pub fn empirical_cdf<T: Scalar>(task_id: &str, predicted_auc: T, scores: &[T]) -> Result<EmpiricalCdf<T>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    ensure_finite(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(cmp_finite);
    let n = T::from_count(sorted.len());
    let points = sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, T::from_count(i + 1) / n))
        .collect();
    Ok(EmpiricalCdf {
        task_id: task_id.to_string(),
        predicted_auc,
        points,
    })
}

/// CDFs of the `m` tasks with the highest and the `m` with the lowest
/// predicted AUC. Ties in prediction are broken by task id.
pub fn extract_extreme_cdfs<T: Scalar>(
    predictions: &[(String, T)],
    scores: &BTreeMap<String, Vec<T>>,
    m: usize,
) -> Result<ExtremeCdfs<T>> {
    if m == 0 || predictions.len() < 2 * m {
        return Err(Error::TooFewTasks {
            needed: 2 * m.max(1),
            got: predictions.len(),
        });
    }
    let mut ranked: Vec<&(String, T)> = predictions.iter().collect();
    ensure_finite(&ranked.iter().map(|(_, p)| *p).collect::<Vec<_>>())?;
    ranked.sort_by(|a, b| cmp_finite(&b.1, &a.1).then_with(|| a.0.cmp(&b.0)));
    let cdf = |(task, p): &&(String, T)| {
        let s = scores
            .get(task)
            .ok_or_else(|| Error::InvalidArgument(format!("no scores for task {task}")))?;
        empirical_cdf(task, *p, s)
    };
    Ok(ExtremeCdfs {
        highest: ranked[..m].iter().map(cdf).collect::<Result<_>>()?,
        lowest: ranked[ranked.len() - m..].iter().rev().map(cdf).collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorrelationReport<T: Scalar> {
    pub n: usize,
    pub pearson_r: T,
    pub r_squared: T,
    pub slope: T,
    pub intercept: T,
}

/// Ordinary least squares of `y` on `x`.
pub fn correlation_report<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationReport<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooFewRows { needed: 3, got: x.len() });
    }
    ensure_finite(x)?;
    ensure_finite(y)?;
    let mx = mean(x).unwrap_or_else(T::zero);
    let my = mean(y).unwrap_or_else(T::zero);
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
    }
    if is_constant(x) || sxx <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    let slope = sxy / sxx;
    let pearson_r = pearson(x, y)?;
    Ok(CorrelationReport {
        n: x.len(),
        pearson_r,
        r_squared: pearson_r * pearson_r,
        slope,
        intercept: my - slope * mx,
    })
}

/// Trailing moving average of `y` over points sorted by `x`; each output is
/// the mean (x, y) of one full window.
pub fn moving_average<T: Scalar>(x: &[T], y: &[T], window: usize) -> Result<Vec<(T, T)>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    ensure_finite(x)?;
    ensure_finite(y)?;
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let mut pairs: Vec<(T, T)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp_finite(&a.0, &b.0).then_with(|| cmp_finite(&a.1, &b.1)));
    Ok(pairs
        .windows(window.min(pairs.len().max(1)))
        .filter(|w| !w.is_empty())
        .map(|w| {
            let n = T::from_count(w.len());
            let sx: T = w.iter().map(|p| p.0).sum();
            let sy: T = w.iter().map(|p| p.1).sum();
            (sx / n, sy / n)
        })
        .collect())
}
