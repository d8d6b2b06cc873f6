use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use ensemble_calib::simulation::StudyReport;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub seed: u64,
    pub prior_mean: i64,
    pub error: String,
}

/// Provenance record written next to the study outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    /// RFC 3339, UTC. Taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub config: String,
    pub rows: usize,
    pub complete: bool,
    pub skipped_cells: usize,
    pub failures: Vec<CellError>,
}

pub fn timestamp_now() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse::<i64>().ok());
    let t = epoch.and_then(|s| DateTime::<Utc>::from_timestamp(s, 0)).unwrap_or_else(Utc::now);
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn for_study(cfg: &Config, report: &StudyReport, outputs: &[&str]) -> Self {
        Self {
            config_hash: cfg.hash(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp_now(),
            seeds: cfg.study.seeds.clone(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            config: cfg.canonical(),
            rows: report.rows.len(),
            complete: report.skipped == 0 && report.failures.is_empty(),
            skipped_cells: report.skipped,
            failures: report
                .failures
                .iter()
                .map(|f| CellError { seed: f.seed, prior_mean: f.prior_mean, error: f.error.to_string() })
                .collect(),
        }
    }

    fn same_run(&self, other: &Self) -> bool {
        Self { timestamp: String::new(), ..self.clone() } == Self { timestamp: String::new(), ..other.clone() }
    }

    /// Writes the manifest, leaving an existing file untouched when it records
    /// the same run, so reruns keep every output byte-identical.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Ok(text) = fs::read_to_string(path) {
            if serde_json::from_str::<RunManifest>(&text).is_ok_and(|old| old.same_run(self)) {
                return Ok(());
            }
        }
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(path, e.into()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
    }
}
