use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tabprobe::boost::Hyperparams;
use tabprobe::config::{BackendConfig, DatasetEntry, RunConfig};
use tabprobe::dataset::{generate_synthetic_dataset, write_csv, SyntheticSpec};
use tabprobe::gateway::MockProfile;
use tabprobe::pipeline::{run_assess, run_screen, AucPrediction, ReportBundle, DEFAULT_SCREEN_THRESHOLD};
use tabprobe::report::{emit_report, read_bundle, read_feature_table, write_predictions};
use tabprobe::stats::{pearson, spearman};
use tabprobe::suitability::cross_val_predict_auc;
use tabprobe::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tabprobe", version, about = "Assess zero-shot LLM suitability for tabular prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every task of the configured datasets and write a report.
    Assess {
        #[arg(long)]
        config: PathBuf,
        /// Report directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label-free screening by the spread of risk scores.
    Screen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SCREEN_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated AUC prediction from a features.csv table.
    PredictAuc {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write predictions.csv; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the report files of a saved report.json.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic datasets and a mock-backend config that runs offline.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        datasets: usize,
        #[arg(long, default_value_t = 500)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        features: usize,
        #[arg(long, default_value_t = 0.0)]
        min_scale: f64,
        #[arg(long, default_value_t = 4.0)]
        max_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_CONFIG } else { EXIT_FAILURE })
        }
    }
}

fn run(command: Command) -> tabprobe::Result<u8> {
    match command {
        Command::Assess { config, out } => {
            let config = RunConfig::load(&config)?;
            let bundle = run_assess(&config)?;
            print_summary(&bundle);
            write_report(&bundle, out.or(config.output_dir.clone()))?;
            Ok(exit_for(&bundle))
        }
        Command::Screen { config, threshold, out } => {
            let config = RunConfig::load(&config)?;
            let screen = run_screen(&config, threshold)?;
            println!("{:<48} {:>9}  verdict", "task", "std_risk");
            for v in &screen.verdicts {
                let verdict = serde_json::to_value(v.verdict).unwrap_or_default();
                println!("{:<48} {:>9.4}  {}", v.task_id, v.std_risk, verdict.as_str().unwrap_or("?"));
            }
            println!("\nthreshold {}. {}", screen.threshold, screen.caveat);
            write_report(&screen.bundle, out.or(config.output_dir.clone()))?;
            Ok(exit_for(&screen.bundle))
        }
        Command::PredictAuc { features, folds, seed, out } => {
            let table = read_feature_table(&features).map_err(|e| Error::Config(e.to_string()))?;
            let hp = Hyperparams {
                seed,
                ..Default::default()
            };
            let outcome = cross_val_predict_auc(&table, folds, &hp)?;
            let predictions: Vec<AucPrediction> = table
                .iter()
                .zip(&outcome.predictions)
                .map(|(row, (_, p))| AucPrediction {
                    task_id: row.task_id.clone(),
                    dataset_id: row.dataset_id.clone(),
                    predicted_auc: *p,
                    actual_auc: row.actual_auc,
                })
                .collect();
            let (p, a): (Vec<f64>, Vec<f64>) = predictions.iter().map(|x| (x.predicted_auc, x.actual_auc)).unzip();
            match out {
                Some(path) => {
                    write_predictions(&predictions, &path)?;
                    println!("wrote {}", path.display());
                }
                None => {
                    for x in &predictions {
                        println!("{}\t{}\t{:.6}\t{:.6}", x.task_id, x.dataset_id, x.predicted_auc, x.actual_auc);
                    }
                }
            }
            if let (Ok(r), Ok(rho)) = (pearson(&p, &a), spearman(&p, &a)) {
                println!("out-of-fold pearson {r:.4}, spearman {rho:.4} over {} tasks", p.len());
            }
            Ok(0)
        }
        Command::Report { bundle, out } => {
            let bundle = read_bundle(&bundle).map_err(|e| Error::Config(e.to_string()))?;
            for path in emit_report(&bundle, &out)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Synth {
            out,
            datasets,
            rows,
            features,
            min_scale,
            max_scale,
            seed,
        } => {
            let config = write_synthetic_suite(&out, datasets, rows, features, (min_scale, max_scale), seed)?;
            println!("wrote {}", config.display());
            Ok(0)
        }
    }
}

fn exit_for(bundle: &ReportBundle) -> u8 {
    if bundle.exclusions.is_empty() {
        0
    } else {
        EXIT_PARTIAL
    }
}

fn write_report(bundle: &ReportBundle, out: Option<PathBuf>) -> tabprobe::Result<()> {
    if let Some(dir) = out {
        let files = emit_report(bundle, &dir)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_summary(bundle: &ReportBundle) {
    println!("{:<48} {:>6} {:>9} {:>8} {:>8}", "task", "n", "std_risk", "auc", "ece");
    for m in &bundle.per_task {
        println!(
            "{:<48} {:>6} {:>9.4} {:>8} {:>8}",
            m.task_id,
            m.n,
            m.std_risk,
            fmt_opt(m.auc),
            fmt_opt(m.ece)
        );
    }
    if let Some(v) = bundle.variance_fraction {
        println!("AUC variance explained by dataset: {v:.3}");
    }
    for c in &bundle.correlation_reports {
        println!("{} vs {}: R^2 {:.3} (n = {})", c.x, c.y, c.report.r_squared, c.report.n);
    }
    for note in &bundle.notes {
        println!("note: {note}");
    }
    if !bundle.exclusions.is_empty() {
        println!("{} exclusions (see report.json)", bundle.exclusions.len());
    }
    let s = bundle.provenance.cache;
    println!("cache: {} hits, {} misses, {} upstream calls", s.hits, s.misses, s.upstream_calls);
}

fn write_synthetic_suite(
    out: &Path,
    count: usize,
    rows: usize,
    d: usize,
    (lo, hi): (f64, f64),
    seed: u64,
) -> tabprobe::Result<PathBuf> {
    if count == 0 || d == 0 {
        return Err(Error::Config("need at least one dataset and one feature".into()));
    }
    let data_dir = out.join("data");
    fs::create_dir_all(&data_dir).map_err(|e| Error::Config(format!("{}: {e}", data_dir.display())))?;
    let weights: Vec<f64> = (0..d)
        .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / (1.0 + 0.5 * j as f64))
        .collect();
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let scale = if count == 1 { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 };
        let spec = SyntheticSpec {
            d,
            n: rows,
            weights: weights.clone(),
            logit_scale: scale,
            seed: seed.wrapping_add(i as u64),
        };
        let dataset = generate_synthetic_dataset(&spec)?;
        let data_path = data_dir.join(format!("{}.csv", dataset.name));
        let meta_path = data_dir.join(format!("{}.json", dataset.name));
        write_csv(&dataset.table, &data_path)?;
        let meta = serde_json::to_string_pretty(&dataset.metadata()).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&meta_path, meta).map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
        entries.push(DatasetEntry {
            data_path: Some(PathBuf::from("data").join(format!("{}.csv", dataset.name))),
            metadata_path: Some(PathBuf::from("data").join(format!("{}.json", dataset.name))),
            format: None,
            synthetic: None,
            mock_profile: Some(MockProfile::from_synthetic(&spec, 0.0)),
        });
    }
    let first = entries[0].mock_profile.clone().expect("set above");
    let mut config = RunConfig::new(entries, BackendConfig::Mock { profile: first });
    config.seed = seed;
    config.cache_dir = Some("cache".into());
    config.output_dir = Some("report".into());
    let path = out.join("config.json");
    let text = serde_json::to_string_pretty(&config).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(path)
}
