//! Softmax classifiers over dense features, their exact gradients, and the
//! finite-difference oracle used to check every analytic gradient in the
//! crate.
//!
//! Models are either linear (`hidden = []`) or small multi-layer
//! perceptrons with tanh hidden units. All loss values are mean
//! cross-entropy in nats. Softmax is always computed with max-logit
//! subtraction. Reductions over examples run in index order so a given
//! input produces bit-identical results.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Gradient norms below this are treated as zero by [`scale_gradient`];
/// the normalized update is undefined at exact optima.
pub const TAU_NORM: f64 = 1e-12;

/// One labeled, domain-annotated example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Dense feature vector, length `m`.
    pub x: Vec<f64>,
    /// Class index in `0..num_classes`.
    pub y: usize,
    /// Domain index in `0..num_domains`.
    pub d: usize,
}

/// Labeled examples grouped by domain.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    domains: Vec<Vec<Example>>,
    num_features: usize,
    num_classes: usize,
}

impl DomainDataset {
    /// Group examples by their domain annotation. Every domain in
    /// `0..num_domains` must receive at least one example.
    pub fn new(
        examples: Vec<Example>,
        num_features: usize,
        num_classes: usize,
        num_domains: usize,
    ) -> Result<Self> {
        let mut domains = vec![Vec::new(); num_domains];
        for ex in examples {
            if ex.x.len() != num_features {
                return Err(Error::config(format!(
                    "example has {} features, dataset expects {num_features}",
                    ex.x.len()
                )));
            }
            if ex.y >= num_classes {
                return Err(Error::config(format!(
                    "label {} out of range (num_classes = {num_classes})",
                    ex.y
                )));
            }
            if ex.d >= num_domains {
                return Err(Error::config(format!(
                    "domain {} out of range (num_domains = {num_domains})",
                    ex.d
                )));
            }
            if ex.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("example features", None));
            }
            domains[ex.d].push(ex);
        }
        for (d, bucket) in domains.iter().enumerate() {
            if bucket.is_empty() {
                return Err(Error::EmptyDomain(d));
            }
        }
        Ok(DomainDataset {
            domains,
            num_features,
            num_classes,
        })
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn domain(&self, i: usize) -> &[Example] {
        &self.domains[i]
    }

    /// Per-domain sizes `n_i`.
    pub fn sizes(&self) -> Vec<usize> {
        self.domains.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.domains.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &Example> {
        self.domains.iter().flatten()
    }

    /// Relabel domain indices by `perm` (new index = position in `perm`).
    pub fn permute_domains(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_domains() {
            return Err(Error::config("permutation length mismatch"));
        }
        let mut examples = Vec::with_capacity(self.len());
        for (new_d, &old_d) in perm.iter().enumerate() {
            for ex in &self.domains[old_d] {
                examples.push(Example {
                    x: ex.x.clone(),
                    y: ex.y,
                    d: new_d,
                });
            }
        }
        DomainDataset::new(examples, self.num_features, self.num_classes, perm.len())
    }
}

/// Layer sizes; `hidden` empty means a plain linear softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelArch {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        ModelArch {
            input_dim,
            hidden: Vec::new(),
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        ModelArch {
            input_dim,
            hidden,
            num_classes,
        }
    }
}

/// A dense layer `z ↦ w z + b`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Full parameter set for a classifier. The final layer maps features to
/// class logits; any earlier layers use tanh activations.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arch: ModelArch,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// Zero initialization: the canonical start for linear models. Hidden
    /// layers, when present, are drawn uniform in `±1/sqrt(fan_in)` from
    /// `seed`; the output layer starts at zero so the initial softmax is
    /// uniform either way.
    pub fn init(arch: &ModelArch, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut layers = Vec::new();
        let mut fan_in = arch.input_dim;
        for &h in &arch.hidden {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((h, fan_in), |_| rng.uniform(-bound, bound));
            layers.push(Layer {
                w,
                b: Array1::zeros(h),
            });
            fan_in = h;
        }
        layers.push(Layer {
            w: Array2::zeros((arch.num_classes, fan_in)),
            b: Array1::zeros(arch.num_classes),
        });
        ModelParams {
            arch: arch.clone(),
            layers,
        }
    }

    pub fn zeros(arch: &ModelArch) -> Self {
        // Seed is irrelevant when there are no hidden layers; for MLPs this
        // gives the (rarely useful) all-zero start.
        let mut p = Self::init(arch, 0);
        for layer in &mut p.layers {
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        p
    }

    /// Total number of scalar parameters `P`.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }

    /// Flatten to a `P`-vector: per layer, weights row-major then bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.w.iter().copied());
            out.extend(layer.b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat length mismatch");
        let mut pos = 0;
        for layer in &mut self.layers {
            for w in layer.w.iter_mut() {
                *w = flat[pos];
                pos += 1;
            }
            for b in layer.b.iter_mut() {
                *b = flat[pos];
                pos += 1;
            }
        }
    }

    /// `θ ← θ - step · direction` over the flat layout.
    pub fn axpy(&mut self, step: f64, direction: &[f64]) {
        assert_eq!(direction.len(), self.param_count());
        let mut pos = 0;
        for layer in &mut self.layers {
            for w in layer.w.iter_mut() {
                *w -= step * direction[pos];
                pos += 1;
            }
            for b in layer.b.iter_mut() {
                *b -= step * direction[pos];
                pos += 1;
            }
        }
    }

    /// First non-finite parameter's flat index, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.flat().iter().position(|v| !v.is_finite())
    }

    /// Class logits for a single input.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let xs = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape");
        let acts = forward(self, &xs);
        acts.last().unwrap().row(0).to_vec()
    }

    /// Predicted class (argmax of the logits, ties to the lowest index).
    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// `ln Σ exp(v)` with max subtraction.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let maxv = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    maxv + values.iter().map(|v| (v - maxv).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max-logit subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let (n, c) = logits.dim();
    let mut p = Array2::zeros((n, c));
    for i in 0..n {
        let mut maxv = f64::NEG_INFINITY;
        for j in 0..c {
            maxv = maxv.max(logits[[i, j]]);
        }
        let mut z = 0.0;
        for j in 0..c {
            let e = (logits[[i, j]] - maxv).exp();
            p[[i, j]] = e;
            z += e;
        }
        for j in 0..c {
            p[[i, j]] /= z;
        }
    }
    p
}

/// Forward pass over a batch; returns activations per layer, the last entry
/// being the logits. Index 0 is the input itself.
fn forward(params: &ModelParams, xs: &Array2<f64>) -> Vec<Array2<f64>> {
    let mut acts = vec![xs.clone()];
    let last = params.layers.len() - 1;
    for (idx, layer) in params.layers.iter().enumerate() {
        let mut z = acts.last().unwrap().dot(&layer.w.t());
        for mut row in z.rows_mut() {
            row += &layer.b;
        }
        if idx != last {
            z.mapv_inplace(f64::tanh);
        }
        acts.push(z);
    }
    acts
}

/// Mean cross-entropy and its exact gradient over arbitrary class targets.
/// The crate-internal workhorse behind [`loss_and_grad`] and the domain
/// classifier in cross-gradient training.
pub(crate) fn batch_loss_grad(
    params: &ModelParams,
    xs: &Array2<f64>,
    targets: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let n = targets.len();
    if n == 0 {
        return Err(Error::config("empty batch"));
    }
    if xs.nrows() != n || xs.ncols() != params.arch.input_dim {
        return Err(Error::config(format!(
            "batch shape {:?} does not match arch input dim {}",
            xs.dim(),
            params.arch.input_dim
        )));
    }
    let c = params.arch.num_classes;
    if targets.iter().any(|&t| t >= c) {
        return Err(Error::config("target class out of range"));
    }

    let acts = forward(params, xs);
    let logits = acts.last().unwrap();
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("logits", params.first_non_finite()));
    }
    // per-example CE via log-sum-exp; exact even when softmax underflows
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss += log_sum_exp(logits.row(i).as_slice().unwrap()) - logits[[i, t]];
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(Error::numeric("loss", params.first_non_finite()));
    }
    let probs = softmax_rows(logits);

    // dL/dlogits for the mean loss
    let mut delta = probs;
    for (i, &t) in targets.iter().enumerate() {
        delta[[i, t]] -= 1.0;
    }
    delta /= n as f64;

    let grads = backward(params, &acts, delta).0;
    let mut flat = Vec::with_capacity(params.param_count());
    for (gw, gb) in &grads {
        flat.extend(gw.iter().copied());
        flat.extend(gb.iter().copied());
    }
    if let Some(idx) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "gradient",
            params.first_non_finite().or(Some(idx)),
        ));
    }
    Ok((loss, flat))
}

type LayerGrads = Vec<(Array2<f64>, Array1<f64>)>;

/// Backpropagate `delta` (gradient at the logits) through the layers.
/// Returns per-layer `(dW, db)` and the gradient with respect to the input.
fn backward(
    params: &ModelParams,
    acts: &[Array2<f64>],
    mut delta: Array2<f64>,
) -> (LayerGrads, Array2<f64>) {
    let mut grads = vec![
        (Array2::zeros((0, 0)), Array1::zeros(0));
        params.layers.len()
    ];
    for idx in (0..params.layers.len()).rev() {
        let input = &acts[idx];
        let gw = delta.t().dot(input);
        let gb = delta.sum_axis(ndarray::Axis(0));
        let mut dinput = delta.dot(&params.layers[idx].w);
        if idx > 0 {
            // activation of layer idx-1 is tanh; acts[idx] holds tanh(z)
            let a = &acts[idx];
            dinput.zip_mut_with(a, |d, &t| *d *= 1.0 - t * t);
        }
        grads[idx] = (gw, gb);
        delta = dinput;
    }
    (grads, delta)
}

/// Mean cross-entropy over `batch` and the exact analytic gradient with
/// respect to every parameter, flattened in [`ModelParams::flat`] order.
pub fn loss_and_grad(params: &ModelParams, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let m = params.arch.input_dim;
    if batch.iter().any(|ex| ex.x.len() != m) {
        return Err(Error::config("example feature length mismatch"));
    }
    let xs = Array2::from_shape_fn((batch.len(), m), |(i, j)| batch[i].x[j]);
    let ys: Vec<usize> = batch.iter().map(|ex| ex.y).collect();
    batch_loss_grad(params, &xs, &ys)
}

/// Per-example gradients of each example's own cross-entropy with respect
/// to its input: row `i` is `∇_{x_i} CE(f(x_i), targets[i])`. For a single
/// linear layer this is `Wᵀ(p - onehot)` per row.
pub fn input_grad(
    params: &ModelParams,
    xs: &Array2<f64>,
    targets: &[usize],
) -> Result<Array2<f64>> {
    if xs.nrows() != targets.len() {
        return Err(Error::config("inputs and targets disagree on batch size"));
    }
    if xs.ncols() != params.arch.input_dim {
        return Err(Error::config("input width does not match arch"));
    }
    let c = params.arch.num_classes;
    if targets.iter().any(|&t| t >= c) {
        return Err(Error::config("target class out of range"));
    }
    let acts = forward(params, xs);
    let probs = softmax_rows(acts.last().unwrap());
    let mut delta = probs;
    for (i, &t) in targets.iter().enumerate() {
        delta[[i, t]] -= 1.0;
    }
    Ok(backward(params, &acts, delta).1)
}

/// Per-domain loss values and gradients, one row per domain.
#[derive(Debug, Clone)]
pub struct GradientSet {
    /// `ℓ_i`: mean cross-entropy of domain `i` on the selected sample.
    pub losses: Vec<f64>,
    /// Row `i` holds `g_i = ∇_θ ℓ_i`, flattened; shape `k × P`.
    pub grads: Array2<f64>,
}

impl GradientSet {
    pub fn num_domains(&self) -> usize {
        self.losses.len()
    }

    pub fn grad_row(&self, i: usize) -> Vec<f64> {
        self.grads.row(i).to_vec()
    }
}

/// How [`domain_stats`] samples each domain.
#[derive(Debug, Clone)]
pub enum Sampler {
    /// Use every example of every domain; fully deterministic.
    FullBatch,
    /// A fresh subsample of `size` examples per domain on every call,
    /// drawn without replacement from the seeded stream.
    PerDomainMinibatch { size: usize, rng: SplitMix64 },
}

impl Sampler {
    pub fn minibatch(size: usize, seed: u64) -> Self {
        Sampler::PerDomainMinibatch {
            size,
            rng: SplitMix64::new(seed),
        }
    }
}

/// Loss and gradient for every domain under the given sampling mode.
pub fn domain_stats(
    params: &ModelParams,
    data: &DomainDataset,
    sampler: &mut Sampler,
) -> Result<GradientSet> {
    if data.num_features() != params.arch.input_dim || data.num_classes() != params.arch.num_classes
    {
        return Err(Error::config("dataset and model dimensions disagree"));
    }
    let k = data.num_domains();
    let p = params.param_count();
    let mut losses = Vec::with_capacity(k);
    let mut grads = Array2::zeros((k, p));
    let mut scratch: Vec<Example>;
    for i in 0..k {
        let full = data.domain(i);
        if full.is_empty() {
            return Err(Error::EmptyDomain(i));
        }
        let batch: &[Example] = match sampler {
            Sampler::FullBatch => full,
            Sampler::PerDomainMinibatch { size, rng } => {
                let take = (*size).min(full.len());
                let idx = rng.choose_exact(full.len(), take);
                scratch = idx.into_iter().map(|j| full[j].clone()).collect();
                &scratch
            }
        };
        let (loss, grad) = loss_and_grad(params, batch)?;
        losses.push(loss);
        for (j, g) in grad.into_iter().enumerate() {
            grads[[i, j]] = g;
        }
    }
    Ok(GradientSet { losses, grads })
}

/// `(g/‖g‖) · loss^p`, the scale-controlled gradient used inside the
/// common-gradient weight update; returns zero when `‖g‖ < TAU_NORM`.
pub fn scale_gradient(g: &[f64], loss: f64, p: f64) -> Vec<f64> {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < TAU_NORM {
        return vec![0.0; g.len()];
    }
    let scale = loss.powf(p) / norm;
    g.iter().map(|x| x * scale).collect()
}

/// Central-difference gradient of `loss_fn` at `params`, one coordinate at
/// a time. A test oracle: slow, but independent of the analytic path.
pub fn fd_gradient(
    loss_fn: impl Fn(&ModelParams) -> f64,
    params: &ModelParams,
    h: f64,
) -> Vec<f64> {
    assert!(h > 0.0, "step size must be positive");
    let base = params.flat();
    let mut probe = params.clone();
    let mut grad = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut bumped = base.clone();
        bumped[i] = base[i] + h;
        probe.set_flat(&bumped);
        let plus = loss_fn(&probe);
        bumped[i] = base[i] - h;
        probe.set_flat(&bumped);
        let minus = loss_fn(&probe);
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Central-difference gradient of a function of a flat vector; used by the
/// decomposition and cross-gradient test oracles.
pub fn fd_gradient_vec(f: impl Fn(&[f64]) -> f64, x0: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let plus = f(&x);
        x[i] = x0[i] - h;
        let minus = f(&x);
        x[i] = x0[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative error between an analytic gradient and the oracle:
/// `‖a - b‖ / max(1, ‖b‖)`.
pub fn grad_rel_err(analytic: &[f64], oracle: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = oracle.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class_batch() -> Vec<Example> {
        vec![
            Example {
                x: vec![1.0, -0.5],
                y: 0,
                d: 0,
            },
            Example {
                x: vec![-0.2, 0.8],
                y: 1,
                d: 0,
            },
            Example {
                x: vec![0.3, 0.1],
                y: 1,
                d: 0,
            },
        ]
    }

    fn random_params(arch: &ModelArch, seed: u64) -> ModelParams {
        let mut rng = SplitMix64::new(seed);
        let mut p = ModelParams::init(arch, seed);
        let flat: Vec<f64> = (0..p.param_count()).map(|_| rng.normal() * 0.7).collect();
        p.set_flat(&flat);
        p
    }

    #[test]
    fn zero_params_give_ln2_on_binary_task() {
        let arch = ModelArch::linear(2, 2);
        let params = ModelParams::zeros(&arch);
        let (loss, grad) = loss_and_grad(&params, &two_class_batch()).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // bias gradient = mean of (p - onehot): p = 0.5 everywhere
        let p = grad.len();
        let bias = &grad[p - 2..];
        let expected0 = (0.5 - 1.0) / 3.0 + 0.5 / 3.0 + 0.5 / 3.0;
        assert!((bias[0] - expected0).abs() < 1e-12);
        assert!((bias[1] + expected0).abs() < 1e-12);
    }

    #[test]
    fn single_example_uniform_logits() {
        let arch = ModelArch::linear(3, 2);
        let params = ModelParams::zeros(&arch);
        let ex = Example {
            x: vec![0.4, -1.0, 2.0],
            y: 1,
            d: 0,
        };
        let (loss, _) = loss_and_grad(&params, &[ex]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let arch = ModelArch::linear(4, 3);
        let params = random_params(&arch, 7);
        let batch: Vec<Example> = {
            let mut rng = SplitMix64::new(77);
            (0..12)
                .map(|i| Example {
                    x: (0..4).map(|_| rng.normal()).collect(),
                    y: i % 3,
                    d: 0,
                })
                .collect()
        };
        let (_, analytic) = loss_and_grad(&params, &batch).unwrap();
        let fd = fd_gradient(
            |p| loss_and_grad(p, &batch).unwrap().0,
            &params,
            1e-6,
        );
        assert!(grad_rel_err(&analytic, &fd) <= 1e-5);
    }

    #[test]
    fn mlp_gradient_matches_central_differences() {
        let arch = ModelArch::mlp(3, vec![5, 4], 2);
        let params = random_params(&arch, 19);
        let batch: Vec<Example> = {
            let mut rng = SplitMix64::new(20);
            (0..9)
                .map(|i| Example {
                    x: (0..3).map(|_| rng.normal()).collect(),
                    y: i % 2,
                    d: 0,
                })
                .collect()
        };
        let (_, analytic) = loss_and_grad(&params, &batch).unwrap();
        let fd = fd_gradient(
            |p| loss_and_grad(p, &batch).unwrap().0,
            &params,
            1e-6,
        );
        assert!(grad_rel_err(&analytic, &fd) <= 1e-5);
    }

    #[test]
    fn fd_oracle_on_known_functions() {
        let arch = ModelArch::linear(1, 2);
        let mut params = ModelParams::zeros(&arch);
        params.set_flat(&[1.0, 2.0, 0.0, 0.0]);
        // f(θ) = ‖θ‖²
        let grad = fd_gradient(
            |p| p.flat().iter().map(|x| x * x).sum(),
            &params,
            1e-6,
        );
        assert!((grad[0] - 2.0).abs() < 1e-6);
        assert!((grad[1] - 4.0).abs() < 1e-6);
        // linear f is exact up to rounding
        let lin = fd_gradient(
            |p| p.flat().iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum(),
            &params,
            1e-6,
        );
        for (i, g) in lin.iter().enumerate() {
            assert!((g - (i + 1) as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn domain_stats_identical_domains_identical_rows() {
        let exs = vec![
            Example { x: vec![0.5, 1.0], y: 1, d: 0 },
            Example { x: vec![-1.0, 0.2], y: 0, d: 0 },
            Example { x: vec![0.5, 1.0], y: 1, d: 1 },
            Example { x: vec![-1.0, 0.2], y: 0, d: 1 },
        ];
        let data = DomainDataset::new(exs, 2, 2, 2).unwrap();
        let arch = ModelArch::linear(2, 2);
        let params = random_params(&arch, 3);
        let gs = domain_stats(&params, &data, &mut Sampler::FullBatch).unwrap();
        assert_eq!(gs.losses[0], gs.losses[1]);
        assert_eq!(gs.grad_row(0), gs.grad_row(1));
    }

    #[test]
    fn pooled_loss_is_size_weighted_combination() {
        let mut rng = SplitMix64::new(9);
        let mut examples = Vec::new();
        for d in 0..3 {
            for i in 0..(10 + 5 * d) {
                examples.push(Example {
                    x: (0..2).map(|_| rng.normal()).collect(),
                    y: i % 2,
                    d,
                });
            }
        }
        let data = DomainDataset::new(examples.clone(), 2, 2, 3).unwrap();
        let arch = ModelArch::linear(2, 2);
        let params = random_params(&arch, 4);
        let gs = domain_stats(&params, &data, &mut Sampler::FullBatch).unwrap();
        let sizes = data.sizes();
        let total: usize = sizes.iter().sum();
        let combined: f64 = (0..3)
            .map(|i| sizes[i] as f64 / total as f64 * gs.losses[i])
            .sum();
        let (pooled, _) = loss_and_grad(&params, &examples).unwrap();
        assert!((combined - pooled).abs() < 1e-12);
    }

    #[test]
    fn empty_domain_is_reported_by_index() {
        let exs = vec![Example { x: vec![0.0], y: 0, d: 0 }];
        let err = DomainDataset::new(exs, 1, 2, 2).unwrap_err();
        assert!(matches!(err, Error::EmptyDomain(1)));
    }

    #[test]
    fn scale_gradient_examples() {
        let scaled = scale_gradient(&[3.0, 4.0], 4.0, 0.5);
        assert!((scaled[0] - 1.2).abs() < 1e-12);
        assert!((scaled[1] - 1.6).abs() < 1e-12);
        assert_eq!(scale_gradient(&[0.0, 0.0], 3.0, 0.5), vec![0.0, 0.0]);
        let zero_loss = scale_gradient(&[1.0, 1.0], 0.0, 0.5);
        assert_eq!(zero_loss, vec![0.0, 0.0]);
    }

    #[test]
    fn scale_gradient_norm_is_loss_to_the_p() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..50 {
            let g: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let loss = rng.next_f64() * 3.0 + 0.01;
            let p = rng.next_f64() * 2.0;
            let scaled = scale_gradient(&g, loss, p);
            let norm = scaled.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - loss.powf(p)).abs() <= 1e-12 * loss.powf(p).max(1.0));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = SplitMix64::new(13);
        let logits = Array2::from_shape_fn((40, 5), |_| rng.normal() * 30.0);
        let p = softmax_rows(&logits);
        for row in p.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn minibatch_sampling_is_deterministic_per_seed() {
        let mut rng = SplitMix64::new(55);
        let examples: Vec<Example> = (0..60)
            .map(|i| Example {
                x: vec![rng.normal(), rng.normal()],
                y: i % 2,
                d: i % 3,
            })
            .collect();
        let data = DomainDataset::new(examples, 2, 2, 3).unwrap();
        let params = random_params(&ModelArch::linear(2, 2), 2);
        let run = |seed| {
            let mut s = Sampler::minibatch(4, seed);
            let a = domain_stats(&params, &data, &mut s).unwrap();
            let b = domain_stats(&params, &data, &mut s).unwrap();
            (a.losses, b.losses)
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1).0, run(2).0);
    }

    #[test]
    fn non_finite_params_are_reported_with_index() {
        let arch = ModelArch::linear(2, 2);
        let mut params = ModelParams::zeros(&arch);
        let mut flat = params.flat();
        flat[3] = f64::NAN;
        params.set_flat(&flat);
        let err = loss_and_grad(&params, &two_class_batch()).unwrap_err();
        match err {
            Error::Numeric { index, .. } => assert_eq!(index, Some(3)),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn input_grad_linear_closed_form() {
        let arch = ModelArch::linear(2, 2);
        // zero weights: input gradient must be exactly zero
        let zero = ModelParams::zeros(&arch);
        let xs = Array2::from_shape_vec((1, 2), vec![0.7, -0.3]).unwrap();
        let g = input_grad(&zero, &xs, &[1]).unwrap();
        assert_eq!(g, Array2::zeros((1, 2)));

        let params = random_params(&arch, 8);
        let g = input_grad(&params, &xs, &[1]).unwrap();
        // closed form Wᵀ(p - onehot)
        let logits = params.logits(&[0.7, -0.3]);
        let z = (logits[0] - logits[1]).exp();
        let p0 = z / (1.0 + z);
        let delta = [p0, (1.0 - p0) - 1.0];
        let w = &params.layers[0].w;
        for j in 0..2 {
            let expected = w[[0, j]] * delta[0] + w[[1, j]] * delta[1];
            assert!((g[[0, j]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn input_grad_matches_central_differences() {
        let arch = ModelArch::mlp(3, vec![4], 3);
        let params = random_params(&arch, 23);
        let mut rng = SplitMix64::new(24);
        let xs = Array2::from_shape_fn((5, 3), |_| rng.normal());
        let targets = vec![0, 1, 2, 1, 0];
        let analytic = input_grad(&params, &xs, &targets).unwrap();
        for (i, &t) in targets.iter().enumerate() {
            let x0 = xs.row(i).to_vec();
            let f = |x: &[f64]| {
                let logits = params.logits(x);
                let maxv = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|v| (v - maxv).exp()).sum();
                -(logits[t] - maxv - z.ln())
            };
            let fd = fd_gradient_vec(f, &x0, 1e-6);
            let row = analytic.row(i).to_vec();
            assert!(grad_rel_err(&row, &fd) <= 1e-5);
        }
    }
}
