//! Per-domain evaluation and cross-seed aggregates.

use crate::error::{Error, Result};
use crate::model::{domain_stats, DomainDataset, ModelParams, Sampler};

/// Per-domain losses/accuracies of one parameter vector on one split.
#[derive(Debug, Clone)]
pub struct SplitMetrics {
    pub per_domain_loss: Vec<f64>,
    pub per_domain_accuracy: Vec<f64>,
    /// Maximum per-domain loss.
    pub worst_loss: f64,
    /// Unweighted mean of per-domain losses.
    pub macro_loss: f64,
    /// Minimum per-domain accuracy.
    pub worst_accuracy: f64,
    /// Micro average over all examples of all domains.
    pub average_accuracy: f64,
}

/// `(worst, macro)` of a per-domain loss vector: the maximum and the
/// unweighted mean.
pub fn worst_and_macro(per_domain_losses: &[f64]) -> (f64, f64) {
    assert!(!per_domain_losses.is_empty());
    let worst = per_domain_losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let macro_loss = per_domain_losses.iter().sum::<f64>() / per_domain_losses.len() as f64;
    (worst, macro_loss)
}

/// Evaluate a model on every domain of a dataset (full batch).
pub fn evaluate(params: &ModelParams, data: &DomainDataset) -> Result<SplitMetrics> {
    let gs = domain_stats(params, data, &mut Sampler::FullBatch)?;
    let mut per_domain_accuracy = Vec::with_capacity(data.num_domains());
    let mut correct_total = 0usize;
    for d in 0..data.num_domains() {
        let examples = data.domain(d);
        let correct = examples
            .iter()
            .filter(|ex| params.predict(&ex.x) == ex.y)
            .count();
        correct_total += correct;
        per_domain_accuracy.push(correct as f64 / examples.len() as f64);
    }
    let (worst_loss, macro_loss) = worst_and_macro(&gs.losses);
    debug_assert!(worst_loss >= macro_loss, "max must dominate the mean");
    let worst_accuracy = per_domain_accuracy
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(SplitMetrics {
        per_domain_loss: gs.losses,
        per_domain_accuracy,
        worst_loss,
        macro_loss,
        worst_accuracy,
        average_accuracy: correct_total as f64 / data.len() as f64,
    })
}

/// Spread of solutions across seeds: every parameter vector is normalized
/// by its L∞ norm, then the unbiased per-coordinate sample variance is
/// summed over coordinates. Scaling any solution by a positive constant
/// leaves the result unchanged.
pub fn solution_variance(params_per_seed: &[Vec<f64>]) -> Result<f64> {
    if params_per_seed.len() < 2 {
        return Err(Error::config("solution variance needs at least 2 seeds"));
    }
    let dim = params_per_seed[0].len();
    if params_per_seed.iter().any(|p| p.len() != dim) {
        return Err(Error::config("solution vectors differ in length"));
    }
    let mut normalized = Vec::with_capacity(params_per_seed.len());
    for p in params_per_seed {
        let linf = p.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if linf == 0.0 {
            return Err(Error::Degenerate("zero-vector solution".into()));
        }
        normalized.push(p.iter().map(|x| x / linf).collect::<Vec<f64>>());
    }
    let n = normalized.len() as f64;
    let mut total = 0.0;
    for j in 0..dim {
        let mean = normalized.iter().map(|p| p[j]).sum::<f64>() / n;
        let ss = normalized
            .iter()
            .map(|p| (p[j] - mean) * (p[j] - mean))
            .sum::<f64>();
        total += ss / (n - 1.0);
    }
    Ok(total)
}
