//! Metrics CSV output.
//!
//! Fixed schema `(run_id, seed, task, algorithm, domain, split, metric,
//! value)`, RFC 4180 quoting, UTF-8, one header row. Aggregate rows use
//! `seed = "all"` and `domain = "all"`. No timestamps: re-running the same
//! config yields a byte-identical file.

use std::path::Path;

use anyhow::Context;

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: String,
    pub task: String,
    pub algorithm: String,
    pub domain: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    #[allow(clippy::too_many_arguments)] // mirrors the CSV schema column order
    pub fn new(
        run_id: impl Into<String>,
        seed: impl Into<String>,
        task: impl Into<String>,
        algorithm: impl Into<String>,
        domain: impl Into<String>,
        split: impl Into<String>,
        metric: impl Into<String>,
        value: f64,
    ) -> Self {
        MetricRow {
            run_id: run_id.into(),
            seed: seed.into(),
            task: task.into(),
            algorithm: algorithm.into(),
            domain: domain.into(),
            split: split.into(),
            metric: metric.into(),
            value,
        }
    }
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    writer.write_record(["run_id", "seed", "task", "algorithm", "domain", "split", "metric", "value"])?;
    for row in rows {
        writer.write_record([
            row.run_id.as_str(),
            row.seed.as_str(),
            row.task.as_str(),
            row.algorithm.as_str(),
            row.domain.as_str(),
            row.split.as_str(),
            row.metric.as_str(),
            // shortest round-trip float formatting keeps reruns byte-identical
            &format!("{}", row.value),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
