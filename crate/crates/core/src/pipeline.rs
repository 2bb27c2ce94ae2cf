//! End-to-end assessment: load datasets, build and score tasks, compute
//! metrics, and fit the suitability predictor.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{SecondsFormat, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{train_supervised_baseline, BaselineSplit, Hyperparams};
use crate::config::{BackendConfig, DatasetEntry, RunConfig};
use crate::dataset::{generate_synthetic_dataset, DatasetProfile, TableFormat};
use crate::error::{Error, Result};
use crate::gateway::{Backend, CacheStats, Gateway, MockProfile, RemoteClient, ResponseCache};
use crate::metrics::{
    aggregate_task_metrics, dataset_variance_fraction, evaluate_labeled, masking_proxy_metric, normalized_auc,
    CalibrationCurve, TaskMetrics,
};
use crate::prompt::PromptTemplates;
use crate::scoring::{score_task, Exclusion, RowPrediction, ScoringOptions};
use crate::suitability::{
    correlation_report, cross_val_predict_auc, even_thresholds, extract_extreme_cdfs, moving_average,
    percentile_features, threshold_sweep, CorrelationReport, ExtremeCdfs, FeatureRow, FoldTrace, SweepCurve,
    DEFAULT_EXTREME_TASKS, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SWEEP_POINTS,
};
use crate::tasks::{build_masked_tasks, build_primary_task, materialize, materialize_unlabeled, primary_task_id, TaskSpec};

pub const DEFAULT_SCREEN_THRESHOLD: f64 = 0.4;
pub const SCREEN_CAVEAT: &str = "Verdicts are screening signals derived from the spread of the model's risk \
scores, not guarantees of accuracy. The default threshold was calibrated on one model and may not transfer \
to others.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRows {
    pub task_id: String,
    pub predictions: Vec<RowPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCalibration {
    pub task_id: String,
    pub curve: CalibrationCurve<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucPrediction {
    pub task_id: String,
    pub dataset_id: String,
    pub predicted_auc: f64,
    pub actual_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCorrelation {
    pub x: String,
    pub y: String,
    pub report: CorrelationReport<f64>,
}

/// Moving average of AUC against a task metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    pub metric: String,
    pub window: usize,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub template_version: String,
    pub models: Vec<String>,
    pub config: serde_json::Value,
    pub cache: CacheStats,
    /// Cache entries of every response the report consumed.
    pub cache_keys: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    /// Sorted by task id.
    pub per_task: Vec<TaskMetrics>,
    pub per_row: Vec<TaskRows>,
    pub calibration_curves: Vec<TaskCalibration>,
    pub sweep_curves: Vec<SweepCurve<f64>>,
    pub trends: Vec<TrendLine>,
    pub feature_table: Vec<FeatureRow<f64>>,
    pub predictor_outputs: Vec<AucPrediction>,
    pub cv_folds: Vec<FoldTrace>,
    pub extreme_cdfs: Option<ExtremeCdfs<f64>>,
    pub variance_fraction: Option<f64>,
    pub correlation_reports: Vec<NamedCorrelation>,
    /// Task-level exclusions have no row index.
    pub exclusions: Vec<Exclusion>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ReportBundle {
    pub fn task(&self, task_id: &str) -> Option<&TaskMetrics> {
        self.per_task.iter().find(|t| t.task_id == task_id)
    }
}

/// Stable per-purpose seed derived from the run seed.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 8 bytes"))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn load_dataset(entry: &DatasetEntry, index: usize) -> Result<DatasetProfile> {
    let loaded = match (&entry.data_path, &entry.metadata_path, &entry.synthetic) {
        (_, _, Some(spec)) => generate_synthetic_dataset(spec),
        (Some(data), Some(meta), None) => {
            let format = entry.format.unwrap_or_else(|| TableFormat::from_path(data));
            DatasetProfile::load(data, meta, format)
        }
        _ => Err(Error::Config(format!("dataset {index} has no source"))),
    };
    loaded.map_err(|e| match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("dataset {index}: {other}")),
    })
}

fn open_cache(config: &RunConfig) -> Result<ResponseCache> {
    match &config.cache_dir {
        Some(dir) => ResponseCache::disk(dir),
        None => Ok(ResponseCache::memory()),
    }
}

/// One gateway per distinct backend; mock profiles overridden per dataset
/// get their own.
struct Gateways {
    by_model: BTreeMap<String, Gateway>,
}

impl Gateways {
    fn build(config: &RunConfig) -> Result<(Self, Vec<String>)> {
        let mut by_model = BTreeMap::new();
        let mut assignment = Vec::with_capacity(config.datasets.len());
        match &config.backend {
            BackendConfig::Remote(settings) => {
                let client = RemoteClient::new(settings.resolve().map_err(|e| Error::Config(e.to_string()))?);
                let model = client.model().to_string();
                by_model.insert(
                    model.clone(),
                    Gateway::new(Backend::Remote(client), open_cache(config)?, config.max_in_flight),
                );
                assignment.resize(config.datasets.len(), model);
            }
            BackendConfig::Mock { profile } => {
                for entry in &config.datasets {
                    let p: &MockProfile = entry.mock_profile.as_ref().unwrap_or(profile);
                    let model = p.model_id();
                    if !by_model.contains_key(&model) {
                        let gw = Gateway::new(Backend::Mock(p.clone()), open_cache(config)?, config.max_in_flight);
                        by_model.insert(model.clone(), gw);
                    }
                    assignment.push(model);
                }
            }
        }
        Ok((Gateways { by_model }, assignment))
    }

    fn stats(&self) -> CacheStats {
        self.by_model.values().fold(CacheStats::default(), |acc, g| {
            let s = g.stats();
            CacheStats {
                hits: acc.hits + s.hits,
                misses: acc.misses + s.misses,
                upstream_calls: acc.upstream_calls + s.upstream_calls,
            }
        })
    }

    fn consumed_keys(&self) -> Vec<String> {
        let keys: BTreeSet<String> = self.by_model.values().flat_map(Gateway::consumed_keys).collect();
        keys.into_iter().collect()
    }
}

struct ScoredTask {
    metrics: TaskMetrics,
    rows: Vec<RowPrediction>,
    curve: Option<CalibrationCurve<f64>>,
    scores: Vec<f64>,
}

struct Context<'a> {
    config: &'a RunConfig,
    templates: &'a PromptTemplates,
    options: ScoringOptions,
}

fn assess_task(
    ctx: &Context<'_>,
    spec: &TaskSpec,
    dataset: &DatasetProfile,
    gateway: &Gateway,
    labeled: bool,
    exclusions: &mut Vec<Exclusion>,
) -> Result<ScoredTask> {
    let task = if labeled {
        materialize(spec, dataset)?
    } else {
        materialize_unlabeled(spec, dataset)?
    };
    let responses = score_task(&task, dataset, gateway, ctx.templates, &ctx.options)?;
    exclusions.extend(responses.exclusions.iter().cloned());
    let mut metrics = aggregate_task_metrics(&responses)?;
    let curve = evaluate_labeled(&mut metrics, &responses, ctx.config.ece_bins);
    if ctx.config.baseline.enabled && labeled {
        let split = BaselineSplit {
            train_fraction: ctx.config.baseline.train_fraction,
            seed: derive_seed(ctx.config.seed, &["baseline", &spec.task_id]),
        };
        match train_supervised_baseline(&task, dataset, &split, &ctx.config.boosting) {
            Ok(b) => {
                metrics.baseline_auc = Some(b);
                metrics.normalized_auc = metrics.auc.and_then(|a| normalized_auc(a, b).ok());
            }
            Err(e) => warn!("baseline for {} skipped: {e}", spec.task_id),
        }
    }
    Ok(ScoredTask {
        scores: responses.risk_scores(),
        metrics,
        rows: responses.predictions,
        curve,
    })
}

type MetricFn = fn(&TaskMetrics) -> Option<f64>;

const SWEPT_METRICS: [(&str, MetricFn); 8] = [
    ("std_risk", |m| Some(m.std_risk)),
    ("avg_mcp", |m| Some(m.avg_mcp)),
    ("avg_confidence", |m| m.avg_confidence),
    ("std_confidence", |m| m.std_confidence),
    ("elicited_direct_auc", |m| m.elicited_direct_auc),
    ("elicited_integer", |m| m.elicited_integer),
    ("elicited_decimal", |m| m.elicited_decimal),
    ("masking_avg_auc", |m| m.masking_avg_auc),
];

/// Runs the full assessment. Task-level failures become exclusions; only
/// configuration problems fail the run.
pub fn run_assess(config: &RunConfig) -> Result<ReportBundle> {
    let started_at = now();
    config.validate()?;
    let templates = match &config.templates_path {
        Some(p) => PromptTemplates::load(p).map_err(|e| Error::Config(e.to_string()))?,
        None => PromptTemplates::default(),
    };
    let (gateways, assignment) = Gateways::build(config)?;
    let ctx = Context {
        config,
        templates: &templates,
        options: ScoringOptions {
            collect_verbalized: config.collect_verbalized,
            collect_elicited: config.collect_elicited,
            ..Default::default()
        },
    };

    let mut per_task = Vec::new();
    let mut per_row = Vec::new();
    let mut curves = Vec::new();
    let mut scores_by_task = BTreeMap::new();
    let mut exclusions = Vec::new();
    let mut seen_names = BTreeSet::new();

    for (index, entry) in config.datasets.iter().enumerate() {
        let full = load_dataset(entry, index)?;
        if !seen_names.insert(full.name.clone()) {
            return Err(Error::Config(format!("duplicate dataset name {}", full.name)));
        }
        let dataset = full.sampled(config.sample_n, derive_seed(config.seed, &["sample", &full.name]))?;
        let labeled = dataset.labeled && !config.force_unlabeled;
        let gateway = &gateways.by_model[&assignment[index]];
        info!("dataset {}: {} rows, labeled={labeled}", dataset.name, dataset.table.row_count());

        let mut specs: Vec<(String, Result<TaskSpec>, bool)> = vec![(
            primary_task_id(&dataset.name),
            build_primary_task(&dataset),
            labeled,
        )];
        if config.proxy_k > 0 {
            match build_masked_tasks(&dataset, config.proxy_k, derive_seed(config.seed, &["proxy", &dataset.name])) {
                Ok(proxies) => specs.extend(proxies.into_iter().map(|s| (s.task_id.clone(), Ok(s), true))),
                Err(e) => exclusions.push(Exclusion {
                    task_id: format!("{}::proxy", dataset.name),
                    row_index: None,
                    reason: e.to_string(),
                }),
            }
        }

        let mut dataset_tasks = Vec::new();
        for (task_id, spec, task_labeled) in specs {
            let outcome = spec.and_then(|s| assess_task(&ctx, &s, &dataset, gateway, task_labeled, &mut exclusions));
            match outcome {
                Ok(scored) => dataset_tasks.push(scored),
                Err(e) => {
                    warn!("task {task_id} excluded: {e}");
                    exclusions.push(Exclusion {
                        task_id,
                        row_index: None,
                        reason: e.to_string(),
                    });
                }
            }
        }

        let proxy_metrics: Vec<TaskMetrics> = dataset_tasks
            .iter()
            .filter(|t| t.metrics.is_proxy && t.metrics.auc.is_some())
            .map(|t| t.metrics.clone())
            .collect();
        let masking = masking_proxy_metric(&proxy_metrics).ok();
        for mut t in dataset_tasks {
            if !t.metrics.is_proxy {
                t.metrics.masking_avg_auc = masking;
            }
            if let Some(curve) = t.curve {
                curves.push(TaskCalibration {
                    task_id: t.metrics.task_id.clone(),
                    curve,
                });
            }
            if config.emit_rows {
                per_row.push(TaskRows {
                    task_id: t.metrics.task_id.clone(),
                    predictions: t.rows,
                });
            }
            scores_by_task.insert(t.metrics.task_id.clone(), t.scores);
            per_task.push(t.metrics);
        }
    }

    per_task.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    per_row.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    curves.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    exclusions.sort();

    let mut notes = Vec::new();
    let labeled_tasks: Vec<&TaskMetrics> = per_task.iter().filter(|m| m.auc.is_some()).collect();
    let auc_of = |m: &TaskMetrics| m.auc.expect("filtered on auc");

    let variance_fraction = if labeled_tasks.is_empty() {
        None
    } else {
        let pairs: Vec<(String, f64)> = labeled_tasks.iter().map(|m| (m.dataset.clone(), auc_of(m))).collect();
        dataset_variance_fraction(&pairs)
            .map_err(|e| notes.push(format!("variance fraction unavailable: {e}")))
            .ok()
    };

    let feature_table: Vec<FeatureRow<f64>> = labeled_tasks
        .iter()
        .filter_map(|m| {
            let features = percentile_features(&scores_by_task[&m.task_id]).ok()?;
            Some(FeatureRow {
                task_id: m.task_id.clone(),
                dataset_id: m.dataset.clone(),
                features,
                actual_auc: auc_of(m),
            })
        })
        .collect();

    let (predictor_outputs, cv_folds) = predict_aucs(&feature_table, config, &mut notes);

    let mut sweep_curves = Vec::new();
    let mut correlation_reports = Vec::new();
    let mut trends = Vec::new();
    for (name, metric) in SWEPT_METRICS {
        let (xs, ys): (Vec<f64>, Vec<f64>) = labeled_tasks
            .iter()
            .filter_map(|m| metric(m).map(|x| (x, auc_of(m))))
            .unzip();
        if xs.is_empty() {
            continue;
        }
        if let Ok(curve) = threshold_sweep(name, &xs, &ys, &even_thresholds(&xs, DEFAULT_SWEEP_POINTS)) {
            sweep_curves.push(curve);
        }
        if let Ok(report) = correlation_report(&xs, &ys) {
            correlation_reports.push(NamedCorrelation {
                x: name.to_string(),
                y: "auc".into(),
                report,
            });
        }
        if name == "std_risk" {
            let window = DEFAULT_SMOOTHING_WINDOW.min(xs.len());
            if let Ok(points) = moving_average(&xs, &ys, window) {
                trends.push(TrendLine {
                    metric: name.to_string(),
                    window,
                    points,
                });
            }
        }
    }
    if !predictor_outputs.is_empty() {
        let (p, a): (Vec<f64>, Vec<f64>) = predictor_outputs.iter().map(|o| (o.predicted_auc, o.actual_auc)).unzip();
        if let Ok(report) = correlation_report(&p, &a) {
            correlation_reports.push(NamedCorrelation {
                x: "predicted_auc".into(),
                y: "auc".into(),
                report,
            });
        }
    }

    let extreme_cdfs = if predictor_outputs.len() >= 2 {
        let m = DEFAULT_EXTREME_TASKS.min(predictor_outputs.len() / 2);
        let preds: Vec<(String, f64)> = predictor_outputs
            .iter()
            .map(|o| (o.task_id.clone(), o.predicted_auc))
            .collect();
        extract_extreme_cdfs(&preds, &scores_by_task, m).ok()
    } else {
        None
    };

    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        template_version: templates.version.clone(),
        models: gateways.by_model.keys().cloned().collect(),
        config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
        cache: gateways.stats(),
        cache_keys: gateways.consumed_keys(),
        started_at,
        finished_at: now(),
    };
    Ok(ReportBundle {
        per_task,
        per_row,
        calibration_curves: curves,
        sweep_curves,
        trends,
        feature_table,
        predictor_outputs,
        cv_folds,
        extreme_cdfs,
        variance_fraction,
        correlation_reports,
        exclusions,
        notes,
        provenance,
    })
}

fn predict_aucs(
    table: &[FeatureRow<f64>],
    config: &RunConfig,
    notes: &mut Vec<String>,
) -> (Vec<AucPrediction>, Vec<FoldTrace>) {
    let groups = table.iter().map(|r| r.dataset_id.as_str()).collect::<BTreeSet<_>>().len();
    if groups < config.cv_folds {
        notes.push(format!(
            "suitability predictor skipped: {groups} labeled datasets, {} folds",
            config.cv_folds
        ));
        return (Vec::new(), Vec::new());
    }
    let hp = Hyperparams {
        seed: config.seed,
        ..config.boosting
    };
    match cross_val_predict_auc(table, config.cv_folds, &hp) {
        Ok(out) => {
            let mut preds: Vec<AucPrediction> = table
                .iter()
                .zip(out.predictions)
                .map(|(row, (_, p))| AucPrediction {
                    task_id: row.task_id.clone(),
                    dataset_id: row.dataset_id.clone(),
                    predicted_auc: p,
                    actual_auc: row.actual_auc,
                })
                .collect();
            preds.sort_by(|a, b| a.task_id.cmp(&b.task_id));
            (preds, out.folds)
        }
        Err(e) => {
            notes.push(format!("suitability predictor failed: {e}"));
            (Vec::new(), Vec::new())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Promising,
    Caution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenVerdict {
    pub task_id: String,
    pub std_risk: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub threshold: f64,
    pub verdicts: Vec<ScreenVerdict>,
    pub caveat: String,
    pub bundle: ReportBundle,
}

pub fn screen_verdict(std_risk: f64, threshold: f64) -> Verdict {
    if std_risk >= threshold {
        Verdict::Promising
    } else {
        Verdict::Caution
    }
}

/// Label-free screening: every dataset is treated as unlabeled and each
/// task is judged by the spread of its risk scores.
pub fn run_screen(config: &RunConfig, threshold: f64) -> Result<ScreenReport> {
    if !threshold.is_finite() {
        return Err(Error::Config("threshold must be finite".into()));
    }
    let mut config = config.clone();
    config.force_unlabeled = true;
    let bundle = run_assess(&config)?;
    let verdicts = bundle
        .per_task
        .iter()
        .map(|m| ScreenVerdict {
            task_id: m.task_id.clone(),
            std_risk: m.std_risk,
            verdict: screen_verdict(m.std_risk, threshold),
        })
        .collect();
    Ok(ScreenReport {
        threshold,
        verdicts,
        caveat: SCREEN_CAVEAT.to_string(),
        bundle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SyntheticSpec;
    use crate::gateway::MockProfile;

    fn synthetic_entry(seed: u64, scale: f64) -> DatasetEntry {
        let spec = SyntheticSpec {
            d: 3,
            n: 60,
            weights: vec![1.0, -1.0, 0.5],
            logit_scale: scale,
            seed,
        };
        DatasetEntry {
            data_path: None,
            metadata_path: None,
            format: None,
            mock_profile: Some(MockProfile::from_synthetic(&spec, 0.0)),
            synthetic: Some(spec),
        }
    }

    fn config(n_datasets: u64, proxy_k: usize) -> RunConfig {
        let datasets = (0..n_datasets).map(|i| synthetic_entry(i, 2.0 + i as f64)).collect();
        let global = MockProfile::from_synthetic(
            &SyntheticSpec {
                d: 1,
                n: 1,
                weights: vec![1.0],
                logit_scale: 1.0,
                seed: 0,
            },
            0.0,
        );
        let mut c = RunConfig::new(datasets, BackendConfig::Mock { profile: global });
        c.proxy_k = proxy_k;
        c.collect_elicited = false;
        c
    }

    #[test]
    fn task_counting_and_coverage() {
        let b = run_assess(&config(2, 3)).unwrap();
        let task_level: BTreeSet<&str> = b
            .exclusions
            .iter()
            .filter(|e| e.row_index.is_none())
            .map(|e| e.task_id.as_str())
            .collect();
        assert_eq!(b.per_task.len() + task_level.len(), 8);
        let ids: Vec<&str> = b.per_task.iter().map(|m| m.task_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        let primary = b.task("synthetic-0::primary").unwrap();
        assert!(primary.auc.is_some());
        assert!(primary.masking_avg_auc.is_some());
    }

    #[test]
    fn screening_never_reads_labels() {
        let r = run_screen(&config(1, 0), DEFAULT_SCREEN_THRESHOLD).unwrap();
        assert_eq!(r.verdicts.len(), 1);
        assert!(r.bundle.per_task[0].auc.is_none());
        assert!(r.bundle.per_row[0].predictions.iter().all(|p| p.true_label.is_none()));
    }

    #[test]
    fn verdict_rule() {
        assert_eq!(screen_verdict(0.45, 0.4), Verdict::Promising);
        assert_eq!(screen_verdict(0.0, 0.4), Verdict::Caution);
        assert_eq!(screen_verdict(0.0, 0.0), Verdict::Promising);
    }

    #[test]
    fn derived_seeds_differ_by_purpose() {
        assert_eq!(derive_seed(1, &["a", "b"]), derive_seed(1, &["a", "b"]));
        assert_ne!(derive_seed(1, &["a", "b"]), derive_seed(1, &["ab"]));
        assert_ne!(derive_seed(1, &["a"]), derive_seed(2, &["a"]));
    }
}
