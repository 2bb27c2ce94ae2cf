//! Labeled evaluation (AUC, ECE, calibration curves, failure prediction) and
//! the unlabeled task-level aggregates computed from risk scores and
//! verbalized confidences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::{RowPrediction, TaskResponses};
use crate::stats::{average_ranks, ensure_finite, is_constant, mean, sample_std};

pub const DEFAULT_ECE_BINS: usize = 10;
/// Mean signed gap a calibration curve needs to count as one-sided.
pub const ONE_SIDED_MEAN_GAP: f64 = 0.2;
/// Largest gap tolerated on the opposite side of the identity line.
pub const ONE_SIDED_MAX_OPPOSITE: f64 = 0.1;

fn check_pairs<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    ensure_finite(scores)
}

/// Mann-Whitney AUC: the fraction of positive/negative pairs ranked
/// correctly, ties counting one half. Computed from average ranks in
/// `O(n log n)`.
pub fn auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check_pairs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: T = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum();
    let np = T::from_count(n_pos);
    let u = rank_sum - np * (np + T::one()) / T::lit(2.0);
    Ok(u / (np * T::from_count(n_neg)))
}

/// Hanley-McNeil standard error of an AUC estimate.
pub fn auc_standard_error<T: Scalar>(auc: T, n_pos: usize, n_neg: usize) -> T {
    let two = T::lit(2.0);
    let q1 = auc / (two - auc);
    let q2 = two * auc * auc / (T::one() + auc);
    let a2 = auc * auc;
    let np = T::from_count(n_pos);
    let nn = T::from_count(n_neg);
    let var = (auc * (T::one() - auc) + (np - T::one()) * (q1 - a2) + (nn - T::one()) * (q2 - a2))
        / (np * nn);
    var.max(T::zero()).sqrt()
}

/// Equal-width bin of a score on [0, 1]; the last bin includes 1.0.
pub fn bin_index<T: Scalar>(score: T, n_bins: usize) -> usize {
    let raw = (score * T::from_count(n_bins)).floor();
    raw.to_usize().unwrap_or(0).min(n_bins - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CalibrationBin<T: Scalar> {
    pub mean_score: T,
    pub positive_rate: T,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveClass {
    /// Predicted scores sit consistently above the observed positive rate.
    Above,
    /// Predicted scores sit consistently below the observed positive rate.
    Below,
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CalibrationCurve<T: Scalar> {
    /// Non-empty bins in ascending score order.
    pub bins: Vec<CalibrationBin<T>>,
    pub n_bins: usize,
    pub classification: CurveClass,
}

fn binned<T: Scalar>(scores: &[T], labels: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin<T>>> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    check_pairs(scores, labels)?;
    let mut sums = vec![(T::zero(), 0usize, 0usize); n_bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = &mut sums[bin_index(s, n_bins)];
        b.0 = b.0 + s;
        b.1 += 1;
        b.2 += usize::from(l);
    }
    Ok(sums
        .into_iter()
        .filter(|b| b.1 > 0)
        .map(|(sum, count, positives)| {
            let c = T::from_count(count);
            CalibrationBin {
                mean_score: sum / c,
                positive_rate: T::from_count(positives) / c,
                count,
            }
        })
        .collect())
}

/// Expected calibration error of the positive-class score:
/// `sum_b (n_b / n) * |mean_score_b - positive_rate_b|`.
pub fn ece<T: Scalar>(scores: &[T], labels: &[bool], n_bins: usize) -> Result<T> {
    let bins = binned(scores, labels, n_bins)?;
    let n = T::from_count(scores.len());
    Ok(bins
        .iter()
        .map(|b| T::from_count(b.count) / n * (b.mean_score - b.positive_rate).abs())
        .sum())
}

/// One-sidedness test on the bins: `Above` when the mean of
/// `mean_score - positive_rate` is at least 0.2 and no bin falls more than
/// 0.1 the other way; `Below` symmetrically; otherwise `Crossing`.
pub fn classify_curve<T: Scalar>(bins: &[CalibrationBin<T>]) -> CurveClass {
    let gaps: Vec<T> = bins.iter().map(|b| b.mean_score - b.positive_rate).collect();
    let Some(avg) = mean(&gaps) else {
        return CurveClass::Crossing;
    };
    let threshold = T::lit(ONE_SIDED_MEAN_GAP);
    let tolerance = T::lit(ONE_SIDED_MAX_OPPOSITE);
    if avg >= threshold && gaps.iter().all(|&g| g >= -tolerance) {
        CurveClass::Above
    } else if avg <= -threshold && gaps.iter().all(|&g| g <= tolerance) {
        CurveClass::Below
    } else {
        CurveClass::Crossing
    }
}

pub fn calibration_curve<T: Scalar>(scores: &[T], labels: &[bool], n_bins: usize) -> Result<CalibrationCurve<T>> {
    let bins = binned(scores, labels, n_bins)?;
    let classification = classify_curve(&bins);
    Ok(CalibrationCurve {
        bins,
        n_bins,
        classification,
    })
}

pub fn accuracy(predictions: &[RowPrediction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct: Option<Vec<bool>> = predictions.iter().map(RowPrediction::is_correct).collect();
    let correct = correct.ok_or_else(|| Error::InvalidArgument("true labels missing".into()))?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

/// AUC of the maximum class probability at separating correct from
/// incorrect predictions.
pub fn failure_prediction_auc_from<T: Scalar>(risk_scores: &[T], true_labels: &[bool]) -> Result<T> {
    check_pairs(risk_scores, true_labels)?;
    let half = T::lit(0.5);
    let (mcp, correct): (Vec<T>, Vec<bool>) = risk_scores
        .iter()
        .zip(true_labels)
        .map(|(&p, &y)| (p.max(T::one() - p), (p >= half) == y))
        .unzip();
    auc(&mcp, &correct)
}

pub fn failure_prediction_auc(predictions: &[RowPrediction]) -> Result<f64> {
    let labels: Option<Vec<bool>> = predictions.iter().map(|p| p.true_label).collect();
    let labels = labels.ok_or_else(|| Error::InvalidArgument("true labels missing".into()))?;
    let scores: Vec<f64> = predictions.iter().map(|p| p.risk_score).collect();
    failure_prediction_auc_from(&scores, &labels)
}

/// Per-task summary. Labeled-only fields stay `None` for unlabeled runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: String,
    pub dataset: String,
    pub is_proxy: bool,
    pub n: usize,
    pub avg_confidence: Option<f64>,
    pub avg_mcp: f64,
    pub std_confidence: Option<f64>,
    pub std_risk: f64,
    pub elicited_direct_auc: Option<f64>,
    /// Integer rating normalized to [0, 1].
    pub elicited_integer: Option<f64>,
    pub elicited_decimal: Option<f64>,
    pub auc: Option<f64>,
    pub ece: Option<f64>,
    pub accuracy: Option<f64>,
    pub failure_auc: Option<f64>,
    pub masking_avg_auc: Option<f64>,
    pub baseline_auc: Option<f64>,
    pub normalized_auc: Option<f64>,
}

/// Unlabeled aggregates: mean verbalized confidence, mean MCP, and the
/// sample standard deviations of confidences and risk scores.
pub fn aggregate_task_metrics(responses: &TaskResponses) -> Result<TaskMetrics> {
    let risk = responses.risk_scores();
    let std_risk = sample_std(&risk)?;
    let mcp: Vec<f64> = responses.predictions.iter().map(RowPrediction::mcp).collect();
    let conf: Vec<f64> = responses
        .predictions
        .iter()
        .filter_map(|p| p.verbalized_confidence)
        .collect();
    let elicited = responses.elicited.clone().unwrap_or_default();
    Ok(TaskMetrics {
        task_id: responses.spec.task_id.clone(),
        dataset: responses.spec.dataset.clone(),
        is_proxy: responses.spec.is_proxy,
        n: risk.len(),
        avg_confidence: mean(&conf),
        avg_mcp: mean(&mcp).unwrap_or(f64::NAN),
        std_confidence: sample_std(&conf).ok(),
        std_risk,
        elicited_direct_auc: elicited.direct_auc,
        elicited_integer: elicited.integer_normalized(),
        elicited_decimal: elicited.decimal_score,
        ..Default::default()
    })
}

/// Fills AUC, ECE, accuracy, and failure-prediction AUC when every
/// prediction carries a true label. Metrics undefined for the data (for
/// example a single class after exclusions) stay `None`.
pub fn evaluate_labeled(
    metrics: &mut TaskMetrics,
    responses: &TaskResponses,
    n_bins: usize,
) -> Option<CalibrationCurve<f64>> {
    let labels = responses.true_labels()?;
    let scores = responses.risk_scores();
    metrics.auc = auc(&scores, &labels).ok();
    metrics.ece = ece(&scores, &labels, n_bins).ok();
    metrics.accuracy = accuracy(&responses.predictions).ok();
    metrics.failure_auc = failure_prediction_auc(&responses.predictions).ok();
    calibration_curve(&scores, &labels, n_bins).ok()
}

/// Unweighted mean of the proxy tasks' AUCs.
pub fn masking_proxy_metric(proxy_metrics: &[TaskMetrics]) -> Result<f64> {
    if proxy_metrics.is_empty() {
        return Err(Error::EmptyInput);
    }
    let aucs: Option<Vec<f64>> = proxy_metrics.iter().map(|m| m.auc).collect();
    let aucs = aucs.ok_or_else(|| Error::InvalidArgument("proxy task without AUC".into()))?;
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceEstimator {
    /// Between-group sum of squares over total sum of squares.
    #[default]
    Decomposition,
    /// One-way random-effects ICC(1) with the unbalanced-design group size.
    OneWayAnova,
}

/// Fraction of the variance in a per-task value explained by dataset
/// membership.
pub fn dataset_variance_fraction<T: Scalar>(by_task: &[(String, T)]) -> Result<T> {
    dataset_variance_fraction_with(by_task, VarianceEstimator::Decomposition)
}

pub fn dataset_variance_fraction_with<T: Scalar>(
    by_task: &[(String, T)],
    estimator: VarianceEstimator,
) -> Result<T> {
    let values: Vec<T> = by_task.iter().map(|(_, v)| *v).collect();
    ensure_finite(&values)?;
    let mut groups: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    for (g, v) in by_task {
        groups.entry(g.as_str()).or_default().push(*v);
    }
    if groups.len() < 2 || values.len() < 2 {
        return Err(Error::TooFewTasks {
            needed: 2,
            got: groups.len().min(values.len()),
        });
    }
    if is_constant(&values) {
        return Err(Error::ZeroTotalVariance);
    }
    let grand = mean(&values).unwrap_or_else(T::zero);
    let total_ss: T = values.iter().map(|&v| (v - grand) * (v - grand)).sum();
    let mut between_ss = T::zero();
    let mut within_ss = T::zero();
    for members in groups.values() {
        let m = mean(members).unwrap_or_else(T::zero);
        between_ss = between_ss + T::from_count(members.len()) * (m - grand) * (m - grand);
        within_ss = within_ss + members.iter().map(|&v| (v - m) * (v - m)).sum::<T>();
    }
    if total_ss <= T::zero() {
        return Err(Error::ZeroTotalVariance);
    }
    match estimator {
        VarianceEstimator::Decomposition => Ok((between_ss / total_ss).max(T::zero()).min(T::one())),
        VarianceEstimator::OneWayAnova => {
            let n = values.len();
            let g = groups.len();
            if n <= g {
                return Err(Error::TooFewTasks { needed: g + 1, got: n });
            }
            let nt = T::from_count(n);
            let sum_sq: T = groups.values().map(|m| T::from_count(m.len() * m.len())).sum();
            let k0 = (nt - sum_sq / nt) / T::from_count(g - 1);
            let msb = between_ss / T::from_count(g - 1);
            let msw = within_ss / T::from_count(n - g);
            let denom = msb + (k0 - T::one()) * msw;
            if denom <= T::zero() {
                return Err(Error::ZeroTotalVariance);
            }
            Ok((msb - msw) / denom)
        }
    }
}

pub fn normalized_auc<T: Scalar>(llm_auc: T, baseline_auc: T) -> Result<T> {
    if !(baseline_auc > T::zero()) {
        return Err(Error::DivisionByZero("baseline AUC must be positive"));
    }
    Ok(llm_auc / baseline_auc)
}
