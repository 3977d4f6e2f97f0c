//! Domain-reweighted full-batch training.
//!
//! Every algorithm here shares one update skeleton: compute per-domain
//! losses and gradients, pick a weight vector `α` on the simplex, then step
//! `θ ← θ - η Σ_i α_i g_i`. They differ only in the `α` policy:
//!
//! * ERM keeps `α` uniform: descent on the macro (domain-averaged) risk.
//! * ERM-UW fixes `α_i ∝ exp(C/√n_i)`, up-weighting small domains.
//! * Group-DRO puts all mass on the domain with the highest
//!   choice-adjusted loss (hard argmax; ties break to the lowest index).
//! * CGD multiplicatively reweights toward domains whose gradients align
//!   with the other domains' gradients, a mirror-descent step on the
//!   simplex. Two exponent variants exist: raw gradient inner products
//!   against their sum, and the scale-controlled form
//!   `Σ_j (ℓ̃_i ℓ̃_j)^p cos(g_i, g_j)` built from normalized gradients.
//! * CrossGrad (see [`crate::crossgrad`]) is dispatched from [`train`] but
//!   follows its own dual-network update.
//!
//! Exponentials are evaluated in log space with max subtraction. The
//! degenerate settings reduce exactly: `η_α = 0` leaves `α` untouched
//! bit-for-bit, and `C = 0` weights are exactly uniform, so those
//! configurations retrace ERM's parameter trajectory.

use crate::crossgrad::{self, CrossGradConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, SplitMetrics};
use crate::model::{
    domain_stats, scale_gradient, DomainDataset, GradientSet, ModelArch, ModelParams, Sampler,
};
use crate::rng::SplitMix64;

/// Training aborts when any domain loss exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// A point on the `(k-1)`-simplex: strictly positive, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainWeights {
    alpha: Vec<f64>,
}

impl DomainWeights {
    pub fn uniform(k: usize) -> Self {
        DomainWeights {
            alpha: vec![1.0 / k as f64; k],
        }
    }

    pub fn one_hot(k: usize, index: usize) -> Self {
        // Not a strict simplex interior point; used to record hard
        // selections in trajectories, never as a mirror-descent state.
        let mut alpha = vec![0.0; k];
        alpha[index] = 1.0;
        DomainWeights { alpha }
    }

    pub fn from_vec(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::config("empty weight vector"));
        }
        if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(Error::config("weights must be strictly positive"));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("weights sum to {sum}, not 1")));
        }
        Ok(DomainWeights { alpha })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Exponent used in the CGD weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaVariant {
    /// `⟨g_i, Σ_j g_j⟩` on raw gradients.
    InnerProduct,
    /// `Σ_j (ℓ̃_i ℓ̃_j)^p cos(g_i, g_j)` with choice-adjusted losses `ℓ̃`;
    /// the cosine of a vanishing gradient counts as zero.
    ScaledCosine,
}

/// Knobs of the CGD weight update. Step size, epoch count and seed live in
/// [`TrainConfig`].
#[derive(Debug, Clone)]
pub struct CgdConfig {
    /// Simplex step size `η_α`.
    pub eta_alpha: f64,
    /// Loss exponent `p` for the scaled-cosine exponent.
    pub p: f64,
    /// Choice-adjustment strength `C ≥ 0`.
    pub c: f64,
    pub variant: AlphaVariant,
    /// Use the normalized, loss-scaled gradients for the parameter step as
    /// well (the default applies them only inside the `α` update).
    pub scaled_theta_update: bool,
}

impl Default for CgdConfig {
    fn default() -> Self {
        CgdConfig {
            eta_alpha: 0.4,
            p: 0.5,
            c: 0.0,
            variant: AlphaVariant::ScaledCosine,
            scaled_theta_update: false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Algorithm {
    Erm,
    ErmUw { c: f64 },
    GroupDro { c: f64 },
    Cgd(CgdConfig),
    CrossGrad(CrossGradConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Erm => "erm",
            Algorithm::ErmUw { .. } => "erm-uw",
            Algorithm::GroupDro { .. } => "group-dro",
            Algorithm::Cgd(_) => "cgd",
            Algorithm::CrossGrad(_) => "crossgrad",
        }
    }
}

/// Shared training protocol.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub arch: ModelArch,
    /// Parameter step size `η`.
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// `None` trains full-batch; `Some(size)` samples that many examples
    /// per domain per step.
    pub minibatch: Option<usize>,
    /// Roll back to the epoch with the best worst-domain loss on the test
    /// split. Off by default; the benchmark protocol trains a fixed number
    /// of epochs.
    pub early_stopping: bool,
}

impl TrainConfig {
    pub fn new(arch: ModelArch, seed: u64) -> Self {
        TrainConfig {
            arch,
            eta: 0.1,
            epochs: 400,
            seed,
            minibatch: None,
            early_stopping: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::config("eta must be finite and non-negative"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: String,
    pub seed: u64,
    pub params: ModelParams,
    /// Per-epoch domain weights (empty for CrossGrad, which has none).
    pub alpha_trajectory: Vec<Vec<f64>>,
    /// Per-epoch per-domain training losses.
    pub loss_trajectory: Vec<Vec<f64>>,
    pub train: SplitMetrics,
    pub test: Option<SplitMetrics>,
}

/// Fixed ERM-UW weights `α_i ∝ exp(C/√n_i)`; `C = 0` is exactly uniform.
pub fn erm_uw_weights(n: &[usize], c: f64) -> DomainWeights {
    let exps: Vec<f64> = n.iter().map(|&ni| c / (ni as f64).sqrt()).collect();
    let maxv = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = exps.iter().map(|e| (e - maxv).exp()).collect();
    let z: f64 = w.iter().sum();
    DomainWeights {
        alpha: w.into_iter().map(|x| x / z).collect(),
    }
}

/// Generalization-gap correction `ℓ_i + C/√n_i`.
pub fn choice_adjust(losses: &[f64], n: &[usize], c: f64) -> Vec<f64> {
    assert_eq!(losses.len(), n.len(), "loss/size length mismatch");
    losses
        .iter()
        .zip(n)
        .map(|(&l, &ni)| l + c / (ni as f64).sqrt())
        .collect()
}

/// Index of the maximum adjusted loss; ties break to the lowest index.
pub fn group_dro_select(adjusted_losses: &[f64]) -> usize {
    assert!(!adjusted_losses.is_empty());
    let mut best = 0;
    for (i, &l) in adjusted_losses.iter().enumerate() {
        if l > adjusted_losses[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One multiplicative-weights step on the simplex.
///
/// `η_α = 0` returns `alpha` unchanged, bit for bit, so that configuration
/// is exactly plain uniform-weight descent.
pub fn cgd_alpha_update(
    alpha: &DomainWeights,
    gs: &GradientSet,
    eta_alpha: f64,
    variant: AlphaVariant,
    p: f64,
    c: f64,
    n: &[usize],
) -> Result<DomainWeights> {
    let k = alpha.len();
    if gs.num_domains() != k || n.len() != k {
        return Err(Error::config("weight/gradient-set size mismatch"));
    }
    if eta_alpha == 0.0 {
        return Ok(alpha.clone());
    }

    let exponents: Vec<f64> = match variant {
        AlphaVariant::InnerProduct => {
            let p_dim = gs.grads.ncols();
            let mut total = vec![0.0; p_dim];
            for i in 0..k {
                for (t, g) in total.iter_mut().zip(gs.grads.row(i)) {
                    *t += g;
                }
            }
            (0..k)
                .map(|i| eta_alpha * dot(&gs.grad_row(i), &total))
                .collect()
        }
        AlphaVariant::ScaledCosine => {
            // (ℓ̃_i ℓ̃_j)^p cos(g_i, g_j) = ⟨u_i, u_j⟩ for the normalized,
            // loss-scaled gradients u_i = (g_i/‖g_i‖) ℓ̃_i^p, so the whole
            // exponent is one inner product against their sum.
            let adjusted = choice_adjust(&gs.losses, n, c);
            let scaled: Vec<Vec<f64>> = (0..k)
                .map(|i| scale_gradient(&gs.grad_row(i), adjusted[i], p))
                .collect();
            let p_dim = gs.grads.ncols();
            let mut total = vec![0.0; p_dim];
            for u in &scaled {
                for (t, v) in total.iter_mut().zip(u) {
                    *t += v;
                }
            }
            (0..k).map(|i| eta_alpha * dot(&scaled[i], &total)).collect()
        }
    };

    let log_w: Vec<f64> = alpha
        .as_slice()
        .iter()
        .zip(&exponents)
        .map(|(&a, &e)| a.ln() + e)
        .collect();
    let maxv = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !maxv.is_finite() || log_w.iter().any(|v| !(v - maxv).is_finite()) {
        return Err(Error::numeric("alpha update exponent", None));
    }
    // floor at the smallest normal float: the multiplicative form never
    // reaches zero exactly, and the simplex invariant is strict positivity
    let w: Vec<f64> = log_w
        .iter()
        .map(|l| (l - maxv).exp().max(f64::MIN_POSITIVE))
        .collect();
    let z: f64 = w.iter().sum();
    DomainWeights::from_vec(w.into_iter().map(|x| x / z).collect())
}

/// `Σ_i α_i g_i` in fixed domain order.
pub fn weighted_gradient(gs: &GradientSet, alpha: &[f64]) -> Vec<f64> {
    let p = gs.grads.ncols();
    let mut out = vec![0.0; p];
    for (i, &a) in alpha.iter().enumerate() {
        for (o, g) in out.iter_mut().zip(gs.grads.row(i)) {
            *o += a * g;
        }
    }
    out
}

/// One CGD step: update `α` from the gradients at the current iterate,
/// then step the parameters with the new weights. The parameter step uses
/// raw gradients unless `cfg.scaled_theta_update` is set.
pub fn cgd_step(
    params: &ModelParams,
    alpha: &DomainWeights,
    data: &DomainDataset,
    eta: f64,
    cfg: &CgdConfig,
) -> Result<(ModelParams, DomainWeights)> {
    let gs = domain_stats(params, data, &mut Sampler::FullBatch)?;
    let n = data.sizes();
    let next_alpha = cgd_alpha_update(
        alpha,
        &gs,
        cfg.eta_alpha,
        cfg.variant,
        cfg.p,
        cfg.c,
        &n,
    )?;
    let direction = step_direction(&gs, next_alpha.as_slice(), cfg, &n);
    let mut next = params.clone();
    next.axpy(eta, &direction);
    Ok((next, next_alpha))
}

fn step_direction(gs: &GradientSet, alpha: &[f64], cfg: &CgdConfig, n: &[usize]) -> Vec<f64> {
    if cfg.scaled_theta_update {
        let adjusted = choice_adjust(&gs.losses, n, cfg.c);
        let p_dim = gs.grads.ncols();
        let mut out = vec![0.0; p_dim];
        for (i, &a) in alpha.iter().enumerate() {
            let u = scale_gradient(&gs.grad_row(i), adjusted[i], cfg.p);
            for (o, v) in out.iter_mut().zip(u) {
                *o += a * v;
            }
        }
        out
    } else {
        weighted_gradient(gs, alpha)
    }
}

/// Norm of the macro-risk gradient `‖∇R(θ)‖₂` with `R = (1/k) Σ_i ℓ_i`,
/// computed full-batch. A point is an ε-FOSP when this is at most ε.
pub fn fosp_norm(params: &ModelParams, data: &DomainDataset) -> Result<f64> {
    let gs = domain_stats(params, data, &mut Sampler::FullBatch)?;
    let k = gs.num_domains();
    let uniform = vec![1.0 / k as f64; k];
    let g = weighted_gradient(&gs, &uniform);
    Ok(g.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Constants of the convergence guarantee: loss bound `B`, smoothness `L`,
/// per-domain Lipschitz constant `G`, iteration budget `T`, target `ε`.
#[derive(Debug, Clone)]
pub struct ConvergenceBudget {
    pub b: f64,
    pub l: f64,
    pub g: f64,
    pub t: usize,
    pub epsilon: f64,
}

impl ConvergenceBudget {
    pub fn validate(&self) -> Result<()> {
        if self.b <= 0.0 || self.l <= 0.0 || self.g <= 0.0 || self.epsilon <= 0.0 || self.t == 0 {
            return Err(Error::config("convergence budget entries must be positive"));
        }
        Ok(())
    }

    /// Iterations sufficient to reach an ε-FOSP: the guarantee bounds the
    /// running mean of `‖∇R‖²` by `3 sqrt(BLG²/T)`, so `T = ⌈9 B L G²/ε⁴⌉`
    /// forces some iterate below ε.
    pub fn iterations_for(b: f64, l: f64, g: f64, epsilon: f64) -> usize {
        (9.0 * b * l * g * g / epsilon.powi(4)).ceil() as usize
    }
}

/// Step sizes from the convergence guarantee:
/// `η = 2 sqrt(B/(L G² T))` and `η_α = sqrt(B L / (G⁶ T))`.
pub fn theorem_step_sizes(budget: &ConvergenceBudget) -> (f64, f64) {
    let t = budget.t as f64;
    let eta = 2.0 * (budget.b / (budget.l * budget.g * budget.g * t)).sqrt();
    let eta_alpha = (budget.b * budget.l / (budget.g.powi(6) * t)).sqrt();
    (eta, eta_alpha)
}

/// Train with the given algorithm and protocol. Full-batch runs are
/// deterministic per seed; minibatch runs are deterministic given the seed
/// too, via the seeded per-domain sampler.
pub fn train(
    algo: &Algorithm,
    data: &DomainDataset,
    test: Option<&DomainDataset>,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    if let Algorithm::CrossGrad(cg) = algo {
        return crossgrad::crossgrad_train(data, test, cg, cfg);
    }

    let mut root = SplitMix64::new(cfg.seed);
    let param_seed = root.next_u64();
    let sampler_seed = root.next_u64();
    let mut params = ModelParams::init(&cfg.arch, param_seed);
    let mut sampler = match cfg.minibatch {
        None => Sampler::FullBatch,
        Some(size) => Sampler::minibatch(size, sampler_seed),
    };

    let k = data.num_domains();
    let n = data.sizes();
    let fixed_alpha = match algo {
        Algorithm::Erm => Some(DomainWeights::uniform(k)),
        Algorithm::ErmUw { c } => Some(erm_uw_weights(&n, *c)),
        _ => None,
    };
    let mut alpha = DomainWeights::uniform(k);

    let mut alpha_trajectory = Vec::with_capacity(cfg.epochs);
    let mut loss_trajectory = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let gs = domain_stats(&params, data, &mut sampler)?;
        for (d, &loss) in gs.losses.iter().enumerate() {
            if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    epoch,
                    domain: d,
                    loss,
                    limit: DIVERGENCE_LIMIT,
                });
            }
        }

        let step_alpha = match algo {
            Algorithm::Erm | Algorithm::ErmUw { .. } => fixed_alpha.clone().unwrap(),
            Algorithm::GroupDro { c } => {
                let adjusted = choice_adjust(&gs.losses, &n, *c);
                DomainWeights::one_hot(k, group_dro_select(&adjusted))
            }
            Algorithm::Cgd(cgd) => {
                alpha = cgd_alpha_update(
                    &alpha,
                    &gs,
                    cgd.eta_alpha,
                    cgd.variant,
                    cgd.p,
                    cgd.c,
                    &n,
                )?;
                alpha.clone()
            }
            Algorithm::CrossGrad(_) => unreachable!("dispatched above"),
        };

        alpha_trajectory.push(step_alpha.as_slice().to_vec());
        loss_trajectory.push(gs.losses.clone());

        let direction = match algo {
            Algorithm::Cgd(cgd) => step_direction(&gs, step_alpha.as_slice(), cgd, &n),
            _ => weighted_gradient(&gs, step_alpha.as_slice()),
        };
        params.axpy(cfg.eta, &direction);

        if cfg.early_stopping {
            if let Some(test_data) = test {
                let metrics = metrics::evaluate(&params, test_data)?;
                if best
                    .as_ref()
                    .map(|(w, _)| metrics.worst_loss < *w)
                    .unwrap_or(true)
                {
                    best = Some((metrics.worst_loss, params.clone()));
                }
            }
        }
    }

    if let Some((_, best_params)) = best {
        params = best_params;
    }

    let train_metrics = metrics::evaluate(&params, data)?;
    let test_metrics = test.map(|t| metrics::evaluate(&params, t)).transpose()?;
    Ok(RunResult {
        algorithm: algo.name().to_string(),
        seed: cfg.seed,
        params,
        alpha_trajectory,
        loss_trajectory,
        train: train_metrics,
        test: test_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Example;
    use ndarray::Array2;

    fn tiny_dataset(seed: u64, k: usize, per_domain: usize) -> DomainDataset {
        let mut rng = SplitMix64::new(seed);
        let mut examples = Vec::new();
        for d in 0..k {
            for _ in 0..per_domain {
                let x: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
                let y = usize::from(x[0] + x[1] > 0.0);
                examples.push(Example { x, y, d });
            }
        }
        DomainDataset::new(examples, 2, 2, k).unwrap()
    }

    fn gradient_set(losses: Vec<f64>, rows: Vec<Vec<f64>>) -> GradientSet {
        let k = rows.len();
        let p = rows[0].len();
        let grads = Array2::from_shape_fn((k, p), |(i, j)| rows[i][j]);
        GradientSet { losses, grads }
    }

    #[test]
    fn erm_uw_examples() {
        let w = erm_uw_weights(&[100, 4], 0.0);
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = erm_uw_weights(&[100, 100], 7.3);
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-12);
        let w = erm_uw_weights(&[100, 4], 2.0);
        // α ∝ (e^0.2, e^1.0)
        assert!((w.as_slice()[0] - 0.310025518872).abs() < 1e-9);
        assert!((w.as_slice()[1] - 0.689974481128).abs() < 1e-9);
    }

    #[test]
    fn choice_adjust_examples() {
        let adj = choice_adjust(&[0.5, 0.2], &[100, 4], 2.0);
        assert!((adj[0] - 0.7).abs() < 1e-12);
        assert!((adj[1] - 1.2).abs() < 1e-12);
        assert_eq!(choice_adjust(&[0.3, 0.4], &[9, 16], 0.0), vec![0.3, 0.4]);
        let adj = choice_adjust(&[0.0, 0.0, 0.0], &[1, 4, 16], 1.0);
        assert_eq!(adj, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn group_dro_select_examples() {
        assert_eq!(group_dro_select(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(group_dro_select(&[0.4, 0.4]), 0);
        // permuting the vector permutes the argmax
        let v = [0.2, 0.8, 0.5];
        let perm = [2, 0, 1];
        let permuted: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
        assert_eq!(perm[group_dro_select(&permuted)], group_dro_select(&v));
    }

    #[test]
    fn alpha_update_symmetric_domains_stay_uniform() {
        let g = vec![0.3, -0.2, 0.5];
        let gs = gradient_set(vec![0.7, 0.7], vec![g.clone(), g]);
        let alpha = DomainWeights::uniform(2);
        for variant in [AlphaVariant::InnerProduct, AlphaVariant::ScaledCosine] {
            let next =
                cgd_alpha_update(&alpha, &gs, 1.0, variant, 0.5, 0.0, &[10, 10]).unwrap();
            assert!((next.as_slice()[0] - 0.5).abs() < 1e-12);
            assert!((next.as_slice()[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_update_orthogonal_unit_gradients_closed_form() {
        // orthogonal unit gradients, losses (1, 0): exponent reduces to the
        // per-domain loss, so α' = (e, 1)/(e + 1).
        let gs = gradient_set(vec![1.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let alpha = DomainWeights::uniform(2);
        let next = cgd_alpha_update(
            &alpha,
            &gs,
            1.0,
            AlphaVariant::ScaledCosine,
            0.5,
            0.0,
            &[10, 10],
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert!((next.as_slice()[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((next.as_slice()[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn group_dro_limit_of_scaled_cosine() {
        // mutually orthogonal gradients, C = 0: update must equal
        // α_i exp(η_α ℓ_i)/Z exactly.
        let gs = gradient_set(
            vec![0.9, 0.4, 0.1],
            vec![
                vec![2.0, 0.0, 0.0],
                vec![0.0, -1.5, 0.0],
                vec![0.0, 0.0, 0.7],
            ],
        );
        let alpha = DomainWeights::from_vec(vec![0.2, 0.5, 0.3]).unwrap();
        let eta_alpha = 0.8;
        let next = cgd_alpha_update(
            &alpha,
            &gs,
            eta_alpha,
            AlphaVariant::ScaledCosine,
            0.5,
            0.0,
            &[5, 5, 5],
        )
        .unwrap();
        let raw: Vec<f64> = alpha
            .as_slice()
            .iter()
            .zip(&gs.losses)
            .map(|(&a, &l)| a * (eta_alpha * l).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        for (got, want) in next.as_slice().iter().zip(raw.iter().map(|r| r / z)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_product_update_matches_regularized_argmax_oracle() {
        // The closed form solves: maximize Σ_i α_i ⟨g_i, Σ_j g_j⟩ - KL(α, α^t)/η_α
        // over the simplex. Brute-force the k = 3 simplex by nested grid
        // refinement and compare.
        let gs = gradient_set(
            vec![0.5, 0.2, 0.9],
            vec![
                vec![0.6, -0.3, 0.2],
                vec![-0.1, 0.4, 0.5],
                vec![0.3, 0.3, -0.2],
            ],
        );
        let alpha = DomainWeights::from_vec(vec![0.5, 0.2, 0.3]).unwrap();
        let eta_alpha = 0.7;
        let next = cgd_alpha_update(
            &alpha,
            &gs,
            eta_alpha,
            AlphaVariant::InnerProduct,
            0.5,
            0.0,
            &[3, 3, 3],
        )
        .unwrap();

        let mut total = vec![0.0; 3];
        for i in 0..3 {
            for (t, g) in total.iter_mut().zip(gs.grads.row(i)) {
                *t += g;
            }
        }
        let scores: Vec<f64> = (0..3).map(|i| dot(&gs.grad_row(i), &total)).collect();
        let objective = |a: &[f64]| -> f64 {
            let mut v = 0.0;
            for i in 0..3 {
                v += a[i] * scores[i];
                v -= a[i] * (a[i] / alpha.as_slice()[i]).ln() / eta_alpha;
            }
            v
        };
        // three-stage grid refinement over (a0, a1), a2 = 1 - a0 - a1
        let mut center = (1.0 / 3.0, 1.0 / 3.0);
        let mut half = 0.5;
        let mut best = (f64::NEG_INFINITY, center);
        for _stage in 0..6 {
            let steps = 60;
            for i in 0..=steps {
                for j in 0..=steps {
                    let a0 = center.0 - half + 2.0 * half * i as f64 / steps as f64;
                    let a1 = center.1 - half + 2.0 * half * j as f64 / steps as f64;
                    let a2 = 1.0 - a0 - a1;
                    if a0 <= 1e-9 || a1 <= 1e-9 || a2 <= 1e-9 {
                        continue;
                    }
                    let v = objective(&[a0, a1, a2]);
                    if v > best.0 {
                        best = (v, (a0, a1));
                    }
                }
            }
            center = best.1;
            half = half * 4.0 / steps as f64;
        }
        let oracle = [best.1 .0, best.1 .1, 1.0 - best.1 .0 - best.1 .1];
        for (got, want) in next.as_slice().iter().zip(&oracle) {
            assert!(
                (got - want).abs() < 1e-4,
                "closed form {:?} vs oracle {:?}",
                next.as_slice(),
                oracle
            );
        }
    }

    #[test]
    fn alpha_update_zero_step_is_bitwise_identity() {
        let gs = gradient_set(vec![0.4, 0.6], vec![vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let alpha = DomainWeights::from_vec(vec![0.25, 0.75]).unwrap();
        let next = cgd_alpha_update(
            &alpha,
            &gs,
            0.0,
            AlphaVariant::ScaledCosine,
            0.5,
            0.0,
            &[4, 4],
        )
        .unwrap();
        assert_eq!(next.as_slice(), alpha.as_slice());
    }

    #[test]
    fn cgd_step_single_domain_is_plain_gradient_step() {
        let data = tiny_dataset(1, 1, 20);
        let arch = ModelArch::linear(2, 2);
        let params = ModelParams::init(&arch, 0);
        let alpha = DomainWeights::uniform(1);
        let (next, next_alpha) =
            cgd_step(&params, &alpha, &data, 0.1, &CgdConfig::default()).unwrap();
        assert_eq!(next_alpha.as_slice(), &[1.0]);
        let gs = domain_stats(&params, &data, &mut Sampler::FullBatch).unwrap();
        let mut expected = params.clone();
        expected.axpy(0.1, &gs.grad_row(0));
        assert_eq!(next.flat(), expected.flat());
    }

    #[test]
    fn cgd_step_zero_eta_updates_alpha_only() {
        let data = tiny_dataset(2, 3, 15);
        let arch = ModelArch::linear(2, 2);
        let mut params = ModelParams::init(&arch, 0);
        // move off the symmetric start so the alpha update is non-trivial
        params.axpy(-0.5, &vec![0.1; params.param_count()]);
        let alpha = DomainWeights::uniform(3);
        let (next, next_alpha) =
            cgd_step(&params, &alpha, &data, 0.0, &CgdConfig::default()).unwrap();
        assert_eq!(next.flat(), params.flat());
        assert_ne!(next_alpha.as_slice(), alpha.as_slice());
    }

    #[test]
    fn theorem_step_sizes_examples() {
        let (eta, eta_alpha) = theorem_step_sizes(&ConvergenceBudget {
            b: 1.0,
            l: 1.0,
            g: 1.0,
            t: 4,
            epsilon: 0.1,
        });
        assert!((eta - 1.0).abs() < 1e-12);
        assert!((eta_alpha - 0.5).abs() < 1e-12);

        let (eta1, _) = theorem_step_sizes(&ConvergenceBudget {
            b: 3.0,
            l: 2.0,
            g: 1.5,
            t: 10,
            epsilon: 0.1,
        });
        let (eta100, _) = theorem_step_sizes(&ConvergenceBudget {
            b: 3.0,
            l: 2.0,
            g: 1.5,
            t: 1000,
            epsilon: 0.1,
        });
        assert!((eta1 / eta100 - 10.0).abs() < 1e-9);

        let (eta, eta_alpha) = theorem_step_sizes(&ConvergenceBudget {
            b: 2.0,
            l: 1.0,
            g: 2.0,
            t: 100,
            epsilon: 0.1,
        });
        assert!((eta - 2.0 * (2.0_f64 / 400.0).sqrt()).abs() < 1e-12);
        assert!((eta_alpha - (2.0_f64 / 6400.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn erm_trajectories_coincide_for_degenerate_configs() {
        let data = tiny_dataset(5, 3, 30);
        let cfg = TrainConfig::new(ModelArch::linear(2, 2), 9);
        let cfg = TrainConfig { epochs: 50, ..cfg };
        let erm = train(&Algorithm::Erm, &data, None, &cfg).unwrap();
        let uw = train(&Algorithm::ErmUw { c: 0.0 }, &data, None, &cfg).unwrap();
        let cgd = train(
            &Algorithm::Cgd(CgdConfig {
                eta_alpha: 0.0,
                ..CgdConfig::default()
            }),
            &data,
            None,
            &cfg,
        )
        .unwrap();
        assert_eq!(erm.params.flat(), uw.params.flat());
        assert_eq!(erm.params.flat(), cgd.params.flat());
    }

    #[test]
    fn divergence_aborts_with_diagnostic() {
        // a conflicting duplicate pair far from the origin cannot be
        // separated; after one huge step one of the pair is confidently
        // wrong and its loss explodes past the limit
        let mut examples: Vec<Example> = (0..10)
            .map(|_| Example {
                x: vec![1.0, 1.0],
                y: 1,
                d: 0,
            })
            .collect();
        for y in [0, 1] {
            examples.push(Example {
                x: vec![100.0, 100.0],
                y,
                d: 0,
            });
        }
        examples.push(Example {
            x: vec![1.0, 1.0],
            y: 1,
            d: 1,
        });
        let data = DomainDataset::new(examples, 2, 2, 2).unwrap();
        let mut cfg = TrainConfig::new(ModelArch::linear(2, 2), 1);
        cfg.eta = 1e6;
        cfg.epochs = 50;
        let err = train(&Algorithm::Erm, &data, None, &cfg).unwrap_err();
        match err {
            Error::Divergence { loss, .. } => assert!(loss > 1e6),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn fosp_norm_is_macro_gradient_norm() {
        let data = tiny_dataset(7, 3, 12);
        let params = ModelParams::init(&ModelArch::linear(2, 2), 0);
        let gs = domain_stats(&params, &data, &mut Sampler::FullBatch).unwrap();
        let mean = weighted_gradient(&gs, &[1.0 / 3.0; 3]);
        let direct = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((fosp_norm(&params, &data).unwrap() - direct).abs() < 1e-15);
    }
}
