//! Training output directory.
//!
//! ```text
//! <out>/config.json            resolved run config
//! <out>/metrics.jsonl          one line per finished epoch, all seeds
//! <out>/seed-<s>/epoch-<e>.ckpt
//! <out>/best.ckpt              selected seed and epoch
//! <out>/report.json            per-seed histories and the selection
//! ```

use std::path::{Path, PathBuf};

use bsc_core::encoder::Checkpoint;
use bsc_core::train::{EpochObserver, EpochRecord, SeedSearch};
use bsc_core::TrainConfig;
use serde::Serialize;

use crate::config::resolved_json;
use crate::error::{CliError, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsLine {
    pub seed: u64,
    #[serde(flatten)]
    pub record: EpochRecord,
}

pub struct RunDir {
    root: PathBuf,
    lines: Vec<MetricsLine>,
    /// First write failure; training is stopped and this is reported instead.
    failure: Option<CliError>,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &TrainConfig) -> Result<Self> {
        fsutil::write_json(&root.join("config.json"), &resolved_json(cfg))?;
        Ok(Self {
            root: root.to_path_buf(),
            lines: Vec::new(),
            failure: None,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn lines(&self) -> &[MetricsLine] {
        &self.lines
    }

    pub fn checkpoint_path(&self, seed: u64, epoch: usize) -> PathBuf {
        self.root
            .join(format!("seed-{seed}"))
            .join(format!("epoch-{epoch}.ckpt"))
    }

    pub fn take_failure(&mut self) -> Option<CliError> {
        self.failure.take()
    }

    fn persist(&mut self, seed: u64, record: &EpochRecord, checkpoint: &Checkpoint) -> Result<()> {
        fsutil::write_atomic(
            &self.checkpoint_path(seed, record.epoch),
            &checkpoint.to_bytes(),
        )?;
        self.lines.push(MetricsLine {
            seed,
            record: record.clone(),
        });
        let mut text = String::new();
        for l in &self.lines {
            text.push_str(&serde_json::to_string(l).expect("metrics serialize"));
            text.push('\n');
        }
        fsutil::write_atomic(&self.root.join("metrics.jsonl"), text.as_bytes())
    }

    /// Writes `best.ckpt` and `report.json`.
    pub fn finish(&self, cfg: &TrainConfig, search: &SeedSearch) -> Result<serde_json::Value> {
        fsutil::write_atomic(&self.root.join("best.ckpt"), &search.best.best.to_bytes())?;
        let report = train_report(cfg, search);
        fsutil::write_json(&self.root.join("report.json"), &report)?;
        Ok(report)
    }
}

impl EpochObserver for RunDir {
    fn on_epoch(
        &mut self,
        seed: u64,
        record: &EpochRecord,
        checkpoint: &Checkpoint,
    ) -> bsc_core::Result<()> {
        if self.failure.is_some() {
            return Err(bsc_core::Error::Domain(
                "run directory is not writable".into(),
            ));
        }
        self.persist(seed, record, checkpoint).map_err(|e| {
            let msg = e.to_string();
            self.failure = Some(e);
            bsc_core::Error::Domain(msg)
        })
    }
}

pub fn train_report(cfg: &TrainConfig, search: &SeedSearch) -> serde_json::Value {
    let seeds: Vec<serde_json::Value> = search
        .runs
        .iter()
        .map(|(seed, run)| match run {
            Ok(r) => serde_json::json!({
                "seed": seed,
                "status": "ok",
                "selected_epoch": r.selected_epoch,
                "best_score": r.best_score,
                "history": r.history,
            }),
            Err(e) => {
                serde_json::json!({ "seed": seed, "status": "failed", "error": e.to_string() })
            }
        })
        .collect();
    serde_json::json!({
        "config": resolved_json(cfg),
        "metric": cfg.dev_metric.key(cfg.metric_k),
        "best_seed": search.best.seed,
        "best_epoch": search.best.selected_epoch,
        "best_score": search.best.best_score,
        "seeds": seeds,
    })
}
