//! Parallel execution of (task, algorithm, seed) runs and conversion of
//! results into metric rows.

use anyhow::Context;
use rayon::prelude::*;

use domainshift::csd::csd_train;
use domainshift::metrics::{solution_variance, SplitMetrics};
use domainshift::optim::train;
use domainshift::synth::SynthTask;

use crate::config::AlgorithmConfig;
use crate::csvout::MetricRow;

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub train: SplitMetrics,
    pub test: SplitMetrics,
    pub solution: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub task: String,
    pub algorithm: String,
    pub per_seed: Vec<SeedOutcome>,
    pub mean_worst_loss: f64,
    pub std_worst_loss: f64,
    pub mean_macro_train_loss: f64,
    pub solution_variance: f64,
}

/// Run one (task, algorithm) cell over consecutive seeds, in parallel.
/// Each run is fully isolated and deterministic in its seed.
pub fn run_cell(
    task: &SynthTask,
    algo_cfg: &AlgorithmConfig,
    base_seed: u64,
    num_seeds: usize,
) -> anyhow::Result<CellOutcome> {
    let seeds: Vec<u64> = (0..num_seeds as u64).map(|i| base_seed + i).collect();
    let per_seed: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| -> anyhow::Result<SeedOutcome> {
            let (train_data, test_data) = task.generate(seed)?;
            if algo_cfg.is_csd() {
                let cfg = algo_cfg.build_csd(seed);
                let run = csd_train(&train_data, Some(&test_data), &cfg)?;
                let common = run.model.common_model();
                Ok(SeedOutcome {
                    seed,
                    train: run.train,
                    test: run.test.expect("test split provided"),
                    solution: common.flat(),
                })
            } else {
                let algo = algo_cfg.build()?;
                let cfg =
                    algo_cfg.train_config(train_data.num_features(), train_data.num_classes(), seed);
                let run = train(&algo, &train_data, Some(&test_data), &cfg)
                    .with_context(|| format!("training seed {seed}"))?;
                Ok(SeedOutcome {
                    seed,
                    train: run.train,
                    test: run.test.expect("test split provided"),
                    solution: run.params.flat(),
                })
            }
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let n = per_seed.len() as f64;
    let worsts: Vec<f64> = per_seed.iter().map(|s| s.test.worst_loss).collect();
    let mean_worst = worsts.iter().sum::<f64>() / n;
    let std_worst =
        (worsts.iter().map(|w| (w - mean_worst) * (w - mean_worst)).sum::<f64>() / n).sqrt();
    let mean_train = per_seed.iter().map(|s| s.train.macro_loss).sum::<f64>() / n;
    let solutions: Vec<Vec<f64>> = per_seed.iter().map(|s| s.solution.clone()).collect();
    let variance = if solutions.len() >= 2 {
        solution_variance(&solutions)?
    } else {
        0.0
    };
    Ok(CellOutcome {
        task: task.name().to_string(),
        algorithm: algo_cfg.kind.clone(),
        per_seed,
        mean_worst_loss: mean_worst,
        std_worst_loss: std_worst,
        mean_macro_train_loss: mean_train,
        solution_variance: variance,
    })
}

/// Expand a cell into the CSV schema: per-seed per-domain rows, per-seed
/// aggregates, then cross-seed aggregates.
pub fn cell_rows(prefix: &str, cell: &CellOutcome) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    let task = &cell.task;
    let algo = &cell.algorithm;
    for seed_out in &cell.per_seed {
        let run_id = format!("{prefix}-{task}-{algo}-s{}", seed_out.seed);
        let seed = seed_out.seed.to_string();
        for (split, metrics) in [("train", &seed_out.train), ("test", &seed_out.test)] {
            for (d, loss) in metrics.per_domain_loss.iter().enumerate() {
                rows.push(MetricRow::new(
                    run_id.clone(), seed.clone(), task.clone(), algo.clone(),
                    d.to_string(), split, "loss", *loss,
                ));
            }
            for (d, acc) in metrics.per_domain_accuracy.iter().enumerate() {
                rows.push(MetricRow::new(
                    run_id.clone(), seed.clone(), task.clone(), algo.clone(),
                    d.to_string(), split, "accuracy", *acc,
                ));
            }
            for (metric, value) in [
                ("worst_loss", metrics.worst_loss),
                ("macro_loss", metrics.macro_loss),
                ("worst_accuracy", metrics.worst_accuracy),
                ("average_accuracy", metrics.average_accuracy),
            ] {
                rows.push(MetricRow::new(
                    run_id.clone(), seed.clone(), task.clone(), algo.clone(),
                    "all", split, metric, value,
                ));
            }
        }
    }
    let agg_id = format!("{prefix}-{task}-{algo}");
    for (metric, value) in [
        ("worst_loss_mean", cell.mean_worst_loss),
        ("worst_loss_std", cell.std_worst_loss),
        ("macro_train_loss_mean", cell.mean_macro_train_loss),
        ("solution_variance", cell.solution_variance),
    ] {
        rows.push(MetricRow::new(
            agg_id.clone(), "all", task.clone(), algo.clone(), "all", "test", metric, value,
        ));
    }
    rows
}
