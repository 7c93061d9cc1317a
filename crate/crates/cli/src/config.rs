//! Hierarchical run configuration: a single JSON file, with command-line
//! flags overriding individual fields. The effective merged config is
//! echoed into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hymos_core::data::ScenarioConfig;
use hymos_core::eval::EvalMode;
use hymos_core::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "HYMOS_OUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Inline scenario generator; ignored when `data_dir` points at
    /// previously generated dataset files.
    pub scenario: ScenarioConfig,
    pub data_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub eval_mode: EvalMode,
    /// Swap the contrastive pipeline for the cross-entropy baseline.
    pub ce_baseline: bool,
    /// Rejection percentile for the cross-entropy baseline.
    pub ce_reject_percentile: f64,
    pub dump_embeddings: bool,
    pub seeds: Vec<u64>,
    pub alpha_m_axis: Vec<f64>,
    pub tau_axis: Vec<f64>,
    pub target_private_axis: Vec<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            scenario: ScenarioConfig::default(),
            data_dir: None,
            train: TrainConfig::default(),
            eval_mode: EvalMode::OpenSet,
            ce_baseline: false,
            ce_reject_percentile: 0.05,
            dump_embeddings: false,
            seeds: vec![0],
            alpha_m_axis: vec![0.3, 0.5, 0.7, 1.0],
            tau_axis: vec![0.05, 0.07, 0.1, 0.5],
            target_private_axis: vec![1, 3, 5],
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::usage("config needs at least one seed"));
        }
        self.scenario.validate().map_err(CliError::usage_from)?;
        self.train.validate().map_err(CliError::usage_from)?;
        if !(0.0..=1.0).contains(&self.ce_reject_percentile) {
            return Err(CliError::usage("ce_reject_percentile must be in [0, 1]"));
        }
        Ok(())
    }

    /// Resolve the output directory: flag > config > $HYMOS_OUT_ROOT > cwd.
    pub fn resolve_out(&self, flag: Option<&Path>, subdir: &str) -> PathBuf {
        if let Some(dir) = flag {
            return dir.to_path_buf();
        }
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        root.join(subdir)
    }

    /// Write the merged config next to the run outputs for provenance.
    pub fn echo_into(&self, out_dir: &Path) -> CliResult<()> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("effective_config.json");
        fs::write(&path, serde_json::to_string_pretty(self).map_err(CliError::runtime_from)?)?;
        Ok(())
    }
}
