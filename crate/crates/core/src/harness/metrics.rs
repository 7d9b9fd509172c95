//! Line-delimited JSON metrics log. One record per evaluation point.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::EvalReport;
use super::Result;
use crate::synthgen::Stage;

/// Training statistics over the groups since the previous record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub groups: usize,
    pub mean_loss: f64,
    pub mean_sparsity: f64,
    pub safe_fraction: f64,
    pub mean_delta_ce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Eval {
        stage: Stage,
        /// Optimizer steps taken so far across all stages.
        iteration: u64,
        /// Groups processed within the current stage.
        stage_step: usize,
        ablation: bool,
        window: WindowStats,
        reports: Vec<EvalReport>,
    },
}

/// Append-only writer; every record is flushed before `append` returns.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Create (or truncate) the log.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::create(path)?;
        Ok(Self { file })
    }

    /// Open an existing log for appending.
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().append(true).create(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, record: &MetricRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
