//! Writing a [`ReportBundle`] to disk: `report.json` with everything, plus
//! flat RFC 4180 CSV files with fixed headers.
//!
//! | file | columns |
//! |------|---------|
//! | `tasks.csv` | every [`TaskMetrics`](crate::metrics::TaskMetrics) field |
//! | `rows_<task>.csv` | row_index, risk_score, verbalized_confidence, predicted_label, true_label, cache_key |
//! | `calibration_<task>.csv` | bin_mean_score, positive_rate, count |
//! | `sweep.csv` | metric, threshold, mean_auc, task_count |
//! | `trend.csv` | metric, window, x, mean_auc |
//! | `correlations.csv` | x, y, n, pearson_r, r_squared, slope, intercept |
//! | `features.csv` | task_id, dataset_id, actual_auc, std_risk, p0, p0.5, ..., p100 |
//! | `predictions.csv` | task_id, dataset_id, predicted_auc, actual_auc |
//! | `cdf_extremes.csv` | side, rank, task_id, predicted_auc, score, cumulative_fraction |
//!
//! Labels are written as 0/1 and absent values as empty fields. Only
//! `report.json` carries timestamps, so CSV output is byte-stable across
//! identical runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{AucPrediction, ReportBundle};
use crate::suitability::{EmpiricalCdf, FeatureRow, PercentileFeatures, PERCENTILE_COUNT};

/// File-name-safe form of a task id: anything outside `[A-Za-z0-9._-]`
/// becomes `_`.
pub fn sanitize(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

/// Column name of the `i`-th percentile feature.
pub fn percentile_header(i: usize) -> String {
    if i % 2 == 0 {
        format!("p{}", i / 2)
    } else {
        format!("p{}.5", i / 2)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvFile {
    fn new(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let mut f = CsvFile {
            path: dir.join(name),
            writer: csv::Writer::from_writer(Vec::new()),
        };
        if !header.is_empty() {
            f.record(header.iter().map(|s| s.to_string()))?;
        }
        Ok(f)
    }

    fn record<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer
            .write_record(&fields)
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e)))
    }

    fn serialize<S: Serialize>(&mut self, value: &S) -> Result<()> {
        self.writer
            .serialize(value)
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e)))
    }

    fn finish(self, manifest: &mut Vec<PathBuf>) -> Result<()> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e.to_string())))?;
        write_file(&self.path, &bytes)?;
        manifest.push(self.path);
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn bundle_to_json(bundle: &ReportBundle) -> Result<String> {
    let mut s = serde_json::to_string_pretty(bundle).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn read_bundle(path: &Path) -> Result<ReportBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes every report file and returns their paths, sorted.
pub fn emit_report(bundle: &ReportBundle, output_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut manifest = Vec::new();

    let json_path = output_dir.join("report.json");
    write_file(&json_path, bundle_to_json(bundle)?.as_bytes())?;
    manifest.push(json_path);

    // the serializer writes the header with the first record
    let mut tasks = if bundle.per_task.is_empty() {
        header_only_tasks(output_dir)?
    } else {
        CsvFile::new(output_dir, "tasks.csv", &[])?
    };
    for m in &bundle.per_task {
        tasks.serialize(m)?;
    }
    tasks.finish(&mut manifest)?;

    for rows in &bundle.per_row {
        let name = format!("rows_{}.csv", sanitize(&rows.task_id));
        let mut f = CsvFile::new(
            output_dir,
            &name,
            &["row_index", "risk_score", "verbalized_confidence", "predicted_label", "true_label", "cache_key"],
        )?;
        for p in &rows.predictions {
            f.record([
                p.row_index.to_string(),
                p.risk_score.to_string(),
                opt(p.verbalized_confidence),
                flag(p.predicted_label).to_string(),
                p.true_label.map(|l| flag(l).to_string()).unwrap_or_default(),
                p.cache_key.clone(),
            ])?;
        }
        f.finish(&mut manifest)?;
    }

    for c in &bundle.calibration_curves {
        let name = format!("calibration_{}.csv", sanitize(&c.task_id));
        let mut f = CsvFile::new(output_dir, &name, &["bin_mean_score", "positive_rate", "count"])?;
        for b in &c.curve.bins {
            f.record([b.mean_score.to_string(), b.positive_rate.to_string(), b.count.to_string()])?;
        }
        f.finish(&mut manifest)?;
    }

    let mut sweep = CsvFile::new(output_dir, "sweep.csv", &["metric", "threshold", "mean_auc", "task_count"])?;
    for curve in &bundle.sweep_curves {
        for p in &curve.points {
            sweep.record([
                curve.metric.clone(),
                p.threshold.to_string(),
                p.mean_auc.to_string(),
                p.task_count.to_string(),
            ])?;
        }
    }
    sweep.finish(&mut manifest)?;

    let mut trend = CsvFile::new(output_dir, "trend.csv", &["metric", "window", "x", "mean_auc"])?;
    for t in &bundle.trends {
        for (x, y) in &t.points {
            trend.record([t.metric.clone(), t.window.to_string(), x.to_string(), y.to_string()])?;
        }
    }
    trend.finish(&mut manifest)?;

    let mut corr = CsvFile::new(
        output_dir,
        "correlations.csv",
        &["x", "y", "n", "pearson_r", "r_squared", "slope", "intercept"],
    )?;
    for c in &bundle.correlation_reports {
        let r = &c.report;
        corr.record([
            c.x.clone(),
            c.y.clone(),
            r.n.to_string(),
            r.pearson_r.to_string(),
            r.r_squared.to_string(),
            r.slope.to_string(),
            r.intercept.to_string(),
        ])?;
    }
    corr.finish(&mut manifest)?;

    write_feature_table(&bundle.feature_table, &output_dir.join("features.csv"))?;
    manifest.push(output_dir.join("features.csv"));
    write_predictions(&bundle.predictor_outputs, &output_dir.join("predictions.csv"))?;
    manifest.push(output_dir.join("predictions.csv"));

    let mut cdfs = CsvFile::new(
        output_dir,
        "cdf_extremes.csv",
        &["side", "rank", "task_id", "predicted_auc", "score", "cumulative_fraction"],
    )?;
    if let Some(e) = &bundle.extreme_cdfs {
        let sides: [(&str, &Vec<EmpiricalCdf<f64>>); 2] = [("highest", &e.highest), ("lowest", &e.lowest)];
        for (side, list) in sides {
            for (rank, cdf) in list.iter().enumerate() {
                for (s, frac) in &cdf.points {
                    cdfs.record([
                        side.to_string(),
                        (rank + 1).to_string(),
                        cdf.task_id.clone(),
                        cdf.predicted_auc.to_string(),
                        s.to_string(),
                        frac.to_string(),
                    ])?;
                }
            }
        }
    }
    cdfs.finish(&mut manifest)?;

    manifest.sort();
    Ok(manifest)
}

fn header_only_tasks(dir: &Path) -> Result<CsvFile> {
    let mut probe = csv::Writer::from_writer(Vec::new());
    probe
        .serialize(crate::metrics::TaskMetrics::default())
        .map_err(|e| Error::Parse(e.to_string()))?;
    let bytes = probe.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    let text = String::from_utf8_lossy(&bytes);
    let header: Vec<&str> = text.lines().next().unwrap_or_default().split(',').collect();
    CsvFile::new(dir, "tasks.csv", &header)
}

fn feature_header() -> Vec<String> {
    let mut h: Vec<String> = ["task_id", "dataset_id", "actual_auc", "std_risk"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..PERCENTILE_COUNT).map(percentile_header));
    h
}

pub fn write_feature_table(table: &[FeatureRow<f64>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(feature_header()).map_err(io)?;
    for r in table {
        let mut rec = vec![
            r.task_id.clone(),
            r.dataset_id.clone(),
            r.actual_auc.to_string(),
            r.features.std_risk.to_string(),
        ];
        rec.extend(r.features.percentiles.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_file(path, &bytes)
}

/// Reads a `features.csv` table as written by [`write_feature_table`].
pub fn read_feature_table(path: &Path) -> Result<Vec<FeatureRow<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let parse_err = |m: String| Error::Parse(format!("{}: {m}", path.display()));
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != feature_header() {
        return Err(parse_err("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or_default();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("row {}: bad number {field:?}", line + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(format!("row {}: non-finite value", line + 1)))
            }
        };
        let percentiles = (0..PERCENTILE_COUNT).map(|i| num(4 + i)).collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            task_id: record.get(0).unwrap_or_default().to_string(),
            dataset_id: record.get(1).unwrap_or_default().to_string(),
            actual_auc: num(2)?,
            features: PercentileFeatures {
                percentiles,
                std_risk: num(3)?,
            },
        });
    }
    Ok(rows)
}

pub fn write_predictions(predictions: &[AucPrediction], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["task_id", "dataset_id", "predicted_auc", "actual_auc"]).map_err(io)?;
    for p in predictions {
        w.write_record([
            p.task_id.clone(),
            p.dataset_id.clone(),
            p.predicted_auc.to_string(),
            p.actual_auc.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_file(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suitability::percentile_features;

    #[test]
    fn headers_and_names() {
        assert_eq!(sanitize("adult::proxy::age"), "adult__proxy__age");
        assert_eq!(percentile_header(0), "p0");
        assert_eq!(percentile_header(1), "p0.5");
        assert_eq!(percentile_header(200), "p100");
        assert_eq!(feature_header().len(), 205);
    }

    #[test]
    fn feature_table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let table = vec![FeatureRow {
            task_id: "a,b".into(),
            dataset_id: "d".into(),
            features: percentile_features(&[0.1, 0.7, 0.333333333333]).unwrap(),
            actual_auc: 0.71,
        }];
        write_feature_table(&table, &path).unwrap();
        assert_eq!(read_feature_table(&path).unwrap(), table);
        fs::write(&path, "task_id\nx\n").unwrap();
        assert!(matches!(read_feature_table(&path), Err(Error::Parse(_))));
    }
}
