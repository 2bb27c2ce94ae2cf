use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tabprobe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabprobe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_then_assess_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let o = tabprobe(&["synth", "--out", "suite", "--datasets", "6", "--rows", "100"], root);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("suite/config.json").exists());

    let o = tabprobe(&["assess", "--config", "suite/config.json"], root);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("::primary"));
    let tasks = fs::read(root.join("suite/report/tasks.csv")).unwrap();

    let o = tabprobe(&["assess", "--config", "suite/config.json", "--out", "again"], root);
    assert!(o.status.success());
    assert!(stdout(&o).contains(" 0 upstream calls"));
    assert_eq!(fs::read(root.join("again/tasks.csv")).unwrap(), tasks);

    let o = tabprobe(&["report", "--bundle", "suite/report/report.json", "--out", "copy"], root);
    assert!(o.status.success());
    assert_eq!(fs::read(root.join("copy/tasks.csv")).unwrap(), tasks);

    let o = tabprobe(
        &["predict-auc", "--features", "suite/report/features.csv", "--folds", "3", "--out", "pred.csv"],
        root,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds = fs::read_to_string(root.join("pred.csv")).unwrap();
    assert!(preds.lines().count() > 1);
}

#[test]
fn screen_prints_verdicts_and_caveat() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert!(tabprobe(&["synth", "--out", "s", "--datasets", "2", "--rows", "80"], root).status.success());
    let o = tabprobe(&["screen", "--config", "s/config.json", "--threshold", "0.3"], root);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("PROMISING") || out.contains("CAUTION"));
    assert!(out.contains("threshold 0.3"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = tabprobe(&["assess", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), "{\"datasets\": 3}").unwrap();
    let o = tabprobe(&["assess", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = tabprobe(&["frobnicate"], dir.path());
    assert!(!o.status.success());
}
