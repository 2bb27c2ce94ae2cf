//! Full runs from files on disk: CSV data, JSON metadata, JSON config.

use std::fs;
use std::path::Path;

use tabprobe::config::RunConfig;
use tabprobe::pipeline::{run_assess, run_screen, Verdict};
use tabprobe::report::{emit_report, read_bundle, read_feature_table};
use tabprobe::tasks::primary_task_id;

/// A small loan-style dataset with a categorical column, a missing-heavy
/// column, and a target driven by income.
fn write_dataset(dir: &Path) {
    let mut csv = String::from("income,age,region,notes,default\n");
    for i in 0..120 {
        let income = 20 + (i * 37) % 100;
        let age = 20 + (i * 13) % 50;
        let region = ["north", "south", "east", "west"][i % 4];
        let notes = if i % 5 == 0 { "late once" } else { "" };
        let default = if income < 55 { "yes" } else { "no" };
        csv.push_str(&format!("{income},{age},{region},{notes},{default}\n"));
    }
    fs::write(dir.join("loans.csv"), csv).unwrap();
    fs::write(
        dir.join("loans.json"),
        r#"{
  "name": "loans",
  "description": "Consumer loans with applicant income, age and region.",
  "target": "default",
  "positive_value": "yes",
  "question": "Will the applicant default on the loan?",
  "label_texts": {"positive": "Yes, defaults", "negative": "No, repays"}
}"#,
    )
    .unwrap();
    let config = r#"{
  "datasets": [{"data_path": "loans.csv", "metadata_path": "loans.json"}],
  "backend": {"kind": "mock", "profile": {
    "weights": {"income": -0.08},
    "centers": {"income": 70},
    "logit_scale": 1.0
  }},
  "sample_n": 100,
  "proxy_k": 2,
  "seed": 3,
  "cache_dir": "cache",
  "output_dir": "out"
}"#;
    fs::write(dir.join("config.json"), config).unwrap();
}

#[test]
fn assess_from_files_writes_a_readable_report() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&dir.path().join("config.json")).unwrap();
    assert!(config.cache_dir.as_ref().unwrap().starts_with(dir.path()));

    let bundle = run_assess(&config).unwrap();
    let primary = bundle.task(&primary_task_id("loans")).expect("primary task");
    assert_eq!(primary.n, 100);
    // the mock scores income, which drives the label, so ranking is strong
    assert!(primary.auc.unwrap() > 0.9, "auc {:?}", primary.auc);
    assert_eq!(bundle.per_task.iter().filter(|m| m.is_proxy).count(), 2);

    let out = config.output_dir.clone().unwrap();
    let files = emit_report(&bundle, &out).unwrap();
    for name in ["report.json", "tasks.csv", "features.csv"] {
        assert!(files.iter().any(|f| f.ends_with(name)), "missing {name}");
    }
    let reread = read_bundle(&out.join("report.json")).unwrap();
    assert_eq!(reread.per_task, bundle.per_task);
    let table = read_feature_table(&out.join("features.csv")).unwrap();
    assert_eq!(table.len(), bundle.feature_table.len());
    assert_eq!(table[0].features.percentiles.len(), 201);
}

#[test]
fn screening_ignores_the_target_column() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&dir.path().join("config.json")).unwrap();
    let screen = run_screen(&config, 0.4).unwrap();
    let primary = screen.bundle.task(&primary_task_id("loans")).unwrap();
    assert!(primary.auc.is_none());
    for v in &screen.verdicts {
        let expected = if v.std_risk >= 0.4 { Verdict::Promising } else { Verdict::Caution };
        assert_eq!(v.verdict, expected);
    }
}

#[test]
fn cached_rerun_matches_and_is_offline() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&dir.path().join("config.json")).unwrap();
    let a = run_assess(&config).unwrap();
    let b = run_assess(&config).unwrap();
    assert_eq!(b.provenance.cache.upstream_calls, 0);
    assert_eq!(a.per_task, b.per_task);
    assert_eq!(a.provenance.cache_keys, b.provenance.cache_keys);
}
