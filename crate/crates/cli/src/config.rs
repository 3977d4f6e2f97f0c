//! Declarative experiment configuration (TOML).
//!
//! Every field has a default; `domainshift print-config` emits the full
//! document. The `DOMAINSHIFT_SEED` environment variable overrides the
//! base seed of any loaded or default configuration.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use domainshift::crossgrad::CrossGradConfig;
use domainshift::csd::CsdTrainConfig;
use domainshift::model::ModelArch;
use domainshift::optim::{Algorithm, AlphaVariant, CgdConfig, TrainConfig};
use domainshift::synth::{
    DgExampleSpec, NoiseSimpleSpec, RotationSimpleSpec, SpuriousSimpleSpec, SynthTask,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; run `i` uses `seed + i`.
    pub seed: u64,
    /// Number of seeds to run.
    pub seeds: usize,
    /// Worker threads (0 = all available).
    pub threads: usize,
    /// Output directory for CSV files.
    pub out: String,
    pub task: TaskConfig,
    pub algorithm: AlgorithmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            seeds: 6,
            threads: 0,
            out: "out".to_string(),
            task: TaskConfig::default(),
            algorithm: AlgorithmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// noise-simple | rotation-simple | spurious-simple | dg-example
    pub kind: String,
    /// Per-domain training sizes (empty = task default).
    pub sizes: Vec<usize>,
    pub test_size: usize,
    /// Label-flip rate of the noisy domain (noise-simple).
    pub flip_rate: f64,
    /// Keep the label noise in the first domain's test split (noise-simple).
    pub noisy_test: bool,
    /// Fraction of first-domain examples whose first two features imply the
    /// correct label (spurious-simple).
    pub predictive_rate: f64,
    /// Fraction of second-domain examples with x3 = y (spurious-simple).
    pub x3_agree_rate: f64,
    /// Apply the feature corruption to the test split too (spurious-simple).
    pub corrupt_test: bool,
    /// Per-domain specific-axis coefficients (dg-example).
    pub betas: Vec<f64>,
    /// Per-domain noise scales (dg-example).
    pub sigmas: Vec<f64>,
    /// How many leading domains are training domains (dg-example).
    pub train_domains: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        let noise = NoiseSimpleSpec::default();
        let spurious = SpuriousSimpleSpec::default();
        let dg = DgExampleSpec::default();
        TaskConfig {
            kind: "noise-simple".to_string(),
            sizes: Vec::new(),
            test_size: noise.test_size,
            flip_rate: noise.flip_rate,
            noisy_test: noise.noisy_test,
            predictive_rate: spurious.predictive_rate,
            x3_agree_rate: spurious.x3_agree_rate,
            corrupt_test: spurious.corrupt_test,
            betas: dg.betas,
            sigmas: dg.sigmas,
            train_domains: dg.train_domains,
        }
    }
}

impl TaskConfig {
    pub fn build(&self) -> anyhow::Result<SynthTask> {
        let task = match self.kind.as_str() {
            "noise-simple" => {
                let mut spec = NoiseSimpleSpec {
                    flip_rate: self.flip_rate,
                    test_size: self.test_size,
                    noisy_test: self.noisy_test,
                    ..NoiseSimpleSpec::default()
                };
                if !self.sizes.is_empty() {
                    spec.sizes = self.sizes.clone();
                }
                SynthTask::NoiseSimple(spec)
            }
            "rotation-simple" => {
                let mut spec = RotationSimpleSpec {
                    test_size: self.test_size,
                    ..RotationSimpleSpec::default()
                };
                if !self.sizes.is_empty() {
                    spec.sizes = self.sizes.clone();
                }
                SynthTask::RotationSimple(spec)
            }
            "spurious-simple" => {
                let mut spec = SpuriousSimpleSpec {
                    predictive_rate: self.predictive_rate,
                    x3_agree_rate: self.x3_agree_rate,
                    test_size: self.test_size,
                    corrupt_test: self.corrupt_test,
                    ..SpuriousSimpleSpec::default()
                };
                if !self.sizes.is_empty() {
                    spec.sizes = self.sizes.clone();
                }
                SynthTask::SpuriousSimple(spec)
            }
            "dg-example" => {
                let mut spec = DgExampleSpec {
                    betas: self.betas.clone(),
                    sigmas: self.sigmas.clone(),
                    train_domains: self.train_domains,
                    test_size: self.test_size,
                    ..DgExampleSpec::default()
                };
                spec.train_sizes = if self.sizes.is_empty() {
                    vec![500; spec.train_domains]
                } else {
                    self.sizes.clone()
                };
                SynthTask::DgExample(spec)
            }
            other => bail!("unknown task kind '{other}'"),
        };
        Ok(task)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// erm | erm-uw | group-dro | cgd | crossgrad | csd
    pub kind: String,
    /// Parameter step size η.
    pub eta: f64,
    pub epochs: usize,
    /// Hidden layer sizes (empty = linear classifier).
    pub hidden: Vec<usize>,
    /// Per-domain minibatch size (0 = full batch).
    pub minibatch: usize,
    /// Roll back to the best epoch on the test split.
    pub early_stopping: bool,
    /// Choice-adjustment / up-weighting strength C.
    pub c: f64,
    /// Simplex step size η_α (cgd).
    pub eta_alpha: f64,
    /// Loss exponent p (cgd).
    pub p: f64,
    /// inner-product | scaled-cosine (cgd).
    pub variant: String,
    /// Use loss-scaled gradients for the parameter step too (cgd).
    pub scaled_theta_update: bool,
    /// Perturbation and mixing weights (crossgrad).
    pub eps_label: f64,
    pub eps_domain: f64,
    pub alpha_label: f64,
    pub alpha_domain: f64,
    /// Specific-subspace rank (csd).
    pub k: usize,
    /// Common-loss weight λ (csd).
    pub lambda: f64,
    /// Orthonormality weight κ (csd).
    pub kappa: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        let cgd = CgdConfig::default();
        let xg = CrossGradConfig::default();
        let csd = CsdTrainConfig::new(1, 0);
        AlgorithmConfig {
            kind: "cgd".to_string(),
            eta: 0.1,
            epochs: 400,
            hidden: Vec::new(),
            minibatch: 0,
            early_stopping: false,
            c: 0.0,
            eta_alpha: cgd.eta_alpha,
            p: cgd.p,
            variant: "scaled-cosine".to_string(),
            scaled_theta_update: cgd.scaled_theta_update,
            eps_label: xg.eps_label,
            eps_domain: xg.eps_domain,
            alpha_label: xg.alpha_label,
            alpha_domain: xg.alpha_domain,
            k: csd.k,
            lambda: csd.lambda,
            kappa: csd.kappa,
        }
    }
}

impl AlgorithmConfig {
    pub fn build(&self) -> anyhow::Result<Algorithm> {
        let algo = match self.kind.as_str() {
            "erm" => Algorithm::Erm,
            "erm-uw" => Algorithm::ErmUw { c: self.c },
            "group-dro" => Algorithm::GroupDro { c: self.c },
            "cgd" => Algorithm::Cgd(CgdConfig {
                eta_alpha: self.eta_alpha,
                p: self.p,
                c: self.c,
                variant: match self.variant.as_str() {
                    "scaled-cosine" => AlphaVariant::ScaledCosine,
                    "inner-product" => AlphaVariant::InnerProduct,
                    other => bail!("unknown cgd variant '{other}'"),
                },
                scaled_theta_update: self.scaled_theta_update,
            }),
            "crossgrad" => Algorithm::CrossGrad(CrossGradConfig {
                eps_label: self.eps_label,
                eps_domain: self.eps_domain,
                alpha_label: self.alpha_label,
                alpha_domain: self.alpha_domain,
            }),
            "csd" => bail!("csd is dispatched separately; use AlgorithmConfig::build_csd"),
            other => bail!("unknown algorithm kind '{other}'"),
        };
        Ok(algo)
    }

    pub fn is_csd(&self) -> bool {
        self.kind == "csd"
    }

    pub fn build_csd(&self, seed: u64) -> CsdTrainConfig {
        CsdTrainConfig {
            k: self.k,
            lambda: self.lambda,
            kappa: self.kappa,
            epochs: self.epochs,
            lr: self.eta,
            seed,
            hidden: self.hidden.clone(),
        }
    }

    pub fn train_config(&self, input_dim: usize, num_classes: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            arch: ModelArch {
                input_dim,
                hidden: self.hidden.clone(),
                num_classes,
            },
            eta: self.eta,
            epochs: self.epochs,
            seed,
            minibatch: if self.minibatch == 0 {
                None
            } else {
                Some(self.minibatch)
            },
            early_stopping: self.early_stopping,
        }
    }
}

/// Load a config file, or the defaults when `path` is `None`; then apply
/// the `DOMAINSHIFT_SEED` override if present.
pub fn load(path: Option<&std::path::Path>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Ok(seed) = std::env::var("DOMAINSHIFT_SEED") {
        cfg.seed = seed
            .parse()
            .context("DOMAINSHIFT_SEED must be an unsigned integer")?;
    }
    Ok(cfg)
}

pub fn print_defaults() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    print!("{}", toml::to_string_pretty(&cfg)?);
    Ok(())
}
