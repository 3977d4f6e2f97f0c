//! `domainshift`: benchmark harness for the robust-training toolkit.
//!
//! Exit codes: 0 when every golden/property check passes, 1 when any
//! fails, 2 on configuration errors. `DOMAINSHIFT_SEED` overrides the
//! configured base seed.

mod bench;
mod check;
mod config;
mod csvout;
mod refvalues;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use domainshift::csd::{svd_decompose, ClassifierBank};
use domainshift::synth::write_dataset_csv;

use csvout::{write_rows, MetricRow};
use runner::{cell_rows, run_cell};

#[derive(Parser)]
#[command(
    name = "domainshift",
    about = "Train and cross-check domain-reweighted robust classifiers on synthetic multi-domain tasks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Experiment configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of seeds (overrides the config).
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = all available (overrides the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the embedded reference tables and report pass/fail.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        /// toy-table | convergence | decomposition | all
        #[arg(long, default_value = "all")]
        name: String,
        /// Scale factor on every golden tolerance band.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// Train one configured experiment across its seeds and emit metrics.
    Train {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the closed-form decomposition on a matrix file (CSV rows).
    Decompose {
        #[command(flatten)]
        common: CommonOpts,
        /// CSV file with one matrix row per line (columns are domains).
        #[arg(long)]
        input: PathBuf,
        /// Rank of the specific subspace.
        #[arg(long)]
        rank: usize,
    },
    /// Run the invariant/property battery.
    Check {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Generate a synthetic dataset and write train/test CSV files.
    Gen {
        #[command(flatten)]
        common: CommonOpts,
        /// Task name (overrides the config's task kind).
        #[arg(long)]
        task: Option<String>,
    },
    /// Print the default configuration document.
    PrintConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::PrintConfig => {
            config::print_defaults()?;
            Ok(true)
        }
        Command::Bench {
            common,
            name,
            tolerance_scale,
        } => {
            let cfg = apply_overrides(config::load(common.config.as_deref())?, &common);
            install_threads(cfg.threads)?;
            let out_dir = PathBuf::from(&cfg.out);
            let mut all_ok = true;
            if name == "toy-table" || name == "all" {
                println!("== toy-table ==");
                let report = bench::toy_table(&cfg, &out_dir, tolerance_scale)?;
                all_ok &= report.all_passed();
            }
            if name == "convergence" || name == "all" {
                println!("== convergence ==");
                let report = bench::convergence(&out_dir)?;
                all_ok &= report.all_passed();
            }
            if name == "decomposition" || name == "all" {
                println!("== decomposition ==");
                let report = bench::decomposition(&out_dir)?;
                all_ok &= report.all_passed();
            }
            if !["toy-table", "convergence", "decomposition", "all"].contains(&name.as_str()) {
                anyhow::bail!("unknown benchmark '{name}'");
            }
            println!("benchmark result: {}", if all_ok { "PASS" } else { "FAIL" });
            Ok(all_ok)
        }
        Command::Train { common } => {
            let cfg = apply_overrides(config::load(common.config.as_deref())?, &common);
            install_threads(cfg.threads)?;
            let task = cfg.task.build()?;
            let cell = run_cell(&task, &cfg.algorithm, cfg.seed, cfg.seeds)?;
            let rows = cell_rows("train", &cell);
            let out = PathBuf::from(&cfg.out).join(format!(
                "{}-{}.csv",
                task.name(),
                cfg.algorithm.kind
            ));
            write_rows(&out, &rows)?;
            println!(
                "{} × {} over {} seed(s): worst test loss {:.4} (σ {:.4}), macro train loss {:.4}, solution variance {:.4}",
                task.name(),
                cfg.algorithm.kind,
                cfg.seeds,
                cell.mean_worst_loss,
                cell.std_worst_loss,
                cell.mean_macro_train_loss,
                cell.solution_variance
            );
            println!("metrics written to {}", out.display());
            Ok(true)
        }
        Command::Decompose {
            common,
            input,
            rank,
        } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| anyhow::anyhow!("reading {}: {e}", input.display()))?;
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let row: Result<Vec<f64>, _> =
                    line.split(',').map(|f| f.trim().parse::<f64>()).collect();
                let row = row
                    .map_err(|e| anyhow::anyhow!("{}:{}: {e}", input.display(), lineno + 1))?;
                rows.push(row);
            }
            anyhow::ensure!(!rows.is_empty(), "matrix file is empty");
            let m = rows.len();
            let d = rows[0].len();
            anyhow::ensure!(
                rows.iter().all(|r| r.len() == d),
                "ragged matrix rows in {}",
                input.display()
            );
            let w = ndarray::Array2::from_shape_fn((m, d), |(i, j)| rows[i][j]);
            let bank = ClassifierBank::new(w)?;
            let dec = svd_decompose(&bank, rank)?;
            println!("matrix: {m} × {d}, rank k = {rank}, unique: {}", dec.unique);
            println!("w_c: {:?}", dec.w_c.iter().collect::<Vec<_>>());
            for j in 0..dec.k {
                println!(
                    "w_s[{j}]: {:?}",
                    dec.w_s.column(j).iter().collect::<Vec<_>>()
                );
                println!(
                    "gamma[{j}]: {:?}",
                    dec.gamma.column(j).iter().collect::<Vec<_>>()
                );
            }
            println!(
                "objective: {:.6e}",
                domainshift::csd::decomposition_objective(&bank, &dec)
            );
            if let Some(out) = common.out {
                let mut rows_out = vec![];
                for (i, v) in dec.w_c.iter().enumerate() {
                    rows_out.push(MetricRow::new(
                        "decompose", "0", "matrix", "svd", i.to_string(), "none", "w_c", *v,
                    ));
                }
                for j in 0..dec.k {
                    for (i, v) in dec.w_s.column(j).iter().enumerate() {
                        rows_out.push(MetricRow::new(
                            "decompose", "0", "matrix", "svd", i.to_string(), "none",
                            format!("w_s{j}"), *v,
                        ));
                    }
                    for (i, v) in dec.gamma.column(j).iter().enumerate() {
                        rows_out.push(MetricRow::new(
                            "decompose", "0", "matrix", "svd", i.to_string(), "none",
                            format!("gamma{j}"), *v,
                        ));
                    }
                }
                let path = out.join("decompose.csv");
                write_rows(&path, &rows_out)?;
                println!("decomposition written to {}", path.display());
            }
            Ok(true)
        }
        Command::Check { common } => {
            let cfg = apply_overrides(config::load(common.config.as_deref())?, &common);
            install_threads(cfg.threads)?;
            let report = check::run()?;
            println!(
                "check result: {} ({} passed, {} failed)",
                if report.all_passed() { "PASS" } else { "FAIL" },
                report.passed,
                report.failed
            );
            Ok(report.all_passed())
        }
        Command::Gen { common, task } => {
            let mut cfg = apply_overrides(config::load(common.config.as_deref())?, &common);
            if let Some(kind) = task {
                cfg.task.kind = kind;
            }
            let task = cfg.task.build()?;
            let (train_data, test_data) = task.generate(cfg.seed)?;
            let out_dir = PathBuf::from(&cfg.out);
            std::fs::create_dir_all(&out_dir)?;
            for (split, data) in [("train", &train_data), ("test", &test_data)] {
                let path = out_dir.join(format!("{}-{split}.csv", task.name()));
                let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
                write_dataset_csv(data, &mut file)?;
                println!(
                    "{}: {} examples across {} domains -> {}",
                    split,
                    data.len(),
                    data.num_domains(),
                    path.display()
                );
            }
            Ok(true)
        }
    }
}

fn apply_overrides(
    mut cfg: config::ExperimentConfig,
    common: &CommonOpts,
) -> config::ExperimentConfig {
    if let Some(seeds) = common.seeds {
        cfg.seeds = seeds;
    }
    if let Some(out) = &common.out {
        cfg.out = out.display().to_string();
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    cfg
}

fn install_threads(threads: usize) -> anyhow::Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}
