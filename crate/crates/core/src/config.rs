//! Run configuration, read from JSON. Relative paths resolve against the
//! directory holding the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boost::{BaselineSplit, Hyperparams};
use crate::dataset::{SyntheticSpec, TableFormat};
use crate::error::{Error, Result};
use crate::gateway::{MockProfile, RemoteSettings, DEFAULT_MAX_IN_FLIGHT};
use crate::metrics::DEFAULT_ECE_BINS;
use crate::tasks::DEFAULT_PROXY_TASKS;

/// One dataset: either a data file plus metadata sidecar, or a synthetic
/// generator specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    #[serde(default)]
    pub metadata_path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<TableFormat>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Per-dataset override of the mock backend profile.
    #[serde(default)]
    pub mock_profile: Option<MockProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock { profile: MockProfile },
    Remote(RemoteSettings),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub enabled: bool,
    pub train_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            enabled: false,
            train_fraction: BaselineSplit::default().train_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub datasets: Vec<DatasetEntry>,
    pub backend: BackendConfig,
    #[serde(default = "default_sample_n")]
    pub sample_n: usize,
    /// Proxy tasks per dataset; 0 disables masking.
    #[serde(default = "default_proxy_k")]
    pub proxy_k: usize,
    #[serde(default = "yes")]
    pub collect_verbalized: bool,
    #[serde(default = "yes")]
    pub collect_elicited: bool,
    #[serde(default)]
    pub seed: u64,
    /// Response cache directory; an in-memory cache is used when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_ece_bins")]
    pub ece_bins: usize,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub boosting: Hyperparams,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub templates_path: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Write per-row prediction dumps.
    #[serde(default = "yes")]
    pub emit_rows: bool,
    /// Treat every dataset as unlabeled.
    #[serde(default)]
    pub force_unlabeled: bool,
}

fn default_sample_n() -> usize {
    1000
}
fn default_proxy_k() -> usize {
    DEFAULT_PROXY_TASKS
}
fn yes() -> bool {
    true
}
fn default_ece_bins() -> usize {
    DEFAULT_ECE_BINS
}
fn default_cv_folds() -> usize {
    5
}
fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl RunConfig {
    /// A configuration with defaults for everything but datasets and backend.
    pub fn new(datasets: Vec<DatasetEntry>, backend: BackendConfig) -> Self {
        RunConfig {
            datasets,
            backend,
            sample_n: default_sample_n(),
            proxy_k: default_proxy_k(),
            collect_verbalized: true,
            collect_elicited: true,
            seed: 0,
            cache_dir: None,
            output_dir: None,
            ece_bins: default_ece_bins(),
            cv_folds: default_cv_folds(),
            boosting: Hyperparams::default(),
            baseline: BaselineConfig::default(),
            templates_path: None,
            max_in_flight: default_max_in_flight(),
            emit_rows: true,
            force_unlabeled: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths, and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.data_path);
            fix(&mut d.metadata_path);
        }
        fix(&mut self.cache_dir);
        fix(&mut self.output_dir);
        fix(&mut self.templates_path);
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return fail("no datasets configured".into());
        }
        if self.sample_n == 0 {
            return fail("sample_n must be at least 1".into());
        }
        if self.cv_folds < 2 {
            return fail("cv_folds must be at least 2".into());
        }
        if self.ece_bins == 0 {
            return fail("ece_bins must be at least 1".into());
        }
        if self.max_in_flight == 0 {
            return fail("max_in_flight must be at least 1".into());
        }
        if !(self.baseline.train_fraction > 0.0 && self.baseline.train_fraction < 1.0) {
            return fail("baseline.train_fraction must lie in (0, 1)".into());
        }
        self.boosting.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let BackendConfig::Mock { profile } = &self.backend {
            profile.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for (i, d) in self.datasets.iter().enumerate() {
            match (&d.data_path, &d.metadata_path, &d.synthetic) {
                (Some(data), Some(meta), None) => {
                    for p in [data, meta] {
                        if !p.is_file() {
                            return fail(format!("dataset {i}: {} does not exist", p.display()));
                        }
                    }
                }
                (None, None, Some(_)) => {}
                _ => {
                    return fail(format!(
                        "dataset {i}: give either data_path and metadata_path, or synthetic"
                    ))
                }
            }
            if let Some(p) = &d.mock_profile {
                p.validate().map_err(|e| Error::Config(format!("dataset {i}: {e}")))?;
                if !matches!(self.backend, BackendConfig::Mock { .. }) {
                    return fail(format!("dataset {i}: mock_profile needs the mock backend"));
                }
            }
        }
        if let Some(t) = &self.templates_path {
            if !t.is_file() {
                return fail(format!("{} does not exist", t.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "datasets": [{"synthetic": {"d": 2, "n": 50, "weights": [1, 1], "logit_scale": 1, "seed": 3}}],
        "backend": {"kind": "mock", "profile": {"weights": {"x1": 1}, "logit_scale": 1}}
    }"#;

    #[test]
    fn defaults_apply() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.sample_n, 1000);
        assert_eq!(c.proxy_k, 10);
        assert_eq!(c.ece_bins, 10);
        assert_eq!(c.cv_folds, 5);
        assert_eq!(c.boosting, Hyperparams::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_boosting_override() {
        let text = MINIMAL.replacen("\"datasets\"", "\"boosting\": {\"n_trees\": 50}, \"datasets\"", 1);
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.boosting.n_trees, 50);
        assert_eq!(c.boosting.max_depth, 3);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.cv_folds = 1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.datasets[0].data_path = Some("/nonexistent.csv".into());
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("{}"), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("d.csv"), "a,b\n1,2\n").unwrap();
        fs::write(dir.path().join("d.json"), r#"{"name": "d"}"#).unwrap();
        let text = r#"{"datasets": [{"data_path": "d.csv", "metadata_path": "d.json"}],
            "backend": {"kind": "remote", "model": "m"}, "cache_dir": "cache"}"#;
        let path = dir.path().join("run.json");
        fs::write(&path, text).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.cache_dir.unwrap(), dir.path().join("cache"));
        assert_eq!(c.datasets[0].data_path.as_ref().unwrap(), &dir.path().join("d.csv"));
    }
}
