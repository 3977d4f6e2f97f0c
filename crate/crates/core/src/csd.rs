//! Common-specific decomposition of per-domain classifiers.
//!
//! Given one linear classifier per domain, stacked as the columns of an
//! `m × D` matrix `W`, the decomposition splits
//!
//! ```text
//! W = w_c 𝟙ᵀ + W_s Γᵀ,      w_c ⊥ span(W_s),  rank(W_s) = k,
//! ```
//!
//! into a common classifier `w_c` shared by all domains and a rank-`k`
//! domain-specific part. The orthogonality constraint is what makes `w_c`
//! identifiable: without it the split is wildly non-unique, with it `w_c`
//! is pinned to the projection of the true common direction onto the
//! complement of the specific subspace ([`lemma_check`]). Only `w_c` is
//! used at inference time.
//!
//! [`svd_decompose`] computes the constrained least-squares optimum in
//! closed form: center by the column mean, take the top-`k` SVD of the
//! remainder, then re-extract the common direction through a
//! pseudoinverse identity and re-factor the residual. `k = 0` degenerates
//! to the plain column mean and `k = D-1` to `(Wᵀ)⁺𝟙/‖(Wᵀ)⁺𝟙‖²`
//! ([`common_mean`], [`common_pinv`]).
//!
//! [`csd_train`] learns the same structure directly during training
//! instead of decomposing after the fact: per-domain softmax heads are
//! parameterized as `w_d = w_c + W_s γ_d` on top of a (possibly identity)
//! feature stack, with an orthonormality penalty on `[w_c, W_s]` per class
//! and an extra loss term on the common head alone. Inference uses only
//! the feature stack and `w_c`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, frobenius_norm, pinv, svd, Svd, SVD_RTOL};
use crate::metrics::{self, SplitMetrics};
use crate::model::{log_sum_exp, softmax_rows, DomainDataset, Layer, ModelArch, ModelParams};
use crate::rng::SplitMix64;

/// Per-domain classifiers, one per column.
#[derive(Debug, Clone)]
pub struct ClassifierBank {
    w: Array2<f64>,
}

impl ClassifierBank {
    pub fn new(w: Array2<f64>) -> Result<Self> {
        if w.ncols() < 2 {
            return Err(Error::config("need at least two domain classifiers"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("classifier bank", None));
        }
        Ok(ClassifierBank { w })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Number of domains `D`.
    pub fn num_domains(&self) -> usize {
        self.w.ncols()
    }
}

/// A decomposition `W ≈ w_c 𝟙ᵀ + W_s Γᵀ` with `w_c ⊥ span(W_s)`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub w_c: Array1<f64>,
    /// `m × k`, orthonormal columns spanning the specific subspace.
    pub w_s: Array2<f64>,
    /// `D × k` domain coefficients.
    pub gamma: Array2<f64>,
    pub k: usize,
    /// False when the centered matrix had numerical rank below `k`, in
    /// which case the specific subspace is not uniquely determined.
    pub unique: bool,
}

impl Decomposition {
    /// Reconstruction `w_c 𝟙ᵀ + W_s Γᵀ`.
    pub fn reconstruct(&self, num_domains: usize) -> Array2<f64> {
        let m = self.w_c.len();
        let mut out = Array2::zeros((m, num_domains));
        for d in 0..num_domains {
            for i in 0..m {
                out[[i, d]] = self.w_c[i];
            }
        }
        out + self.w_s.dot(&self.gamma.t())
    }

    /// Largest |⟨w_c, column of W_s⟩|, the identifiability constraint.
    pub fn max_orthogonality_violation(&self) -> f64 {
        (0..self.k)
            .map(|j| {
                self.w_c
                    .iter()
                    .zip(self.w_s.column(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Residual `‖W - w_c 𝟙ᵀ - W_s Γᵀ‖_F²`.
pub fn decomposition_objective(bank: &ClassifierBank, dec: &Decomposition) -> f64 {
    let diff = bank.matrix() - &dec.reconstruct(bank.num_domains());
    diff.iter().map(|x| x * x).sum()
}

/// Row-wise mean of the columns: the `k = 0` common classifier.
pub fn common_mean(bank: &ClassifierBank) -> Array1<f64> {
    let d = bank.num_domains() as f64;
    bank.matrix().sum_axis(ndarray::Axis(1)) / d
}

/// The `k = D-1` common classifier `u/‖u‖²` with `u = (Wᵀ)⁺𝟙`. Satisfies
/// `Wᵀ w_c = ‖w_c‖² 𝟙` whenever `𝟙` lies in the row space of `W`.
pub fn common_pinv(bank: &ClassifierBank) -> Result<Array1<f64>> {
    pinv_common(bank.matrix())
}

fn pinv_common(w: &Array2<f64>) -> Result<Array1<f64>> {
    let d = w.ncols();
    let ones = Array1::from_elem(d, 1.0);
    // (Wᵀ)⁺ 𝟙 = (W⁺)ᵀ 𝟙
    let u = pinv(w, SVD_RTOL).t().dot(&ones);
    let norm_sq: f64 = u.iter().map(|x| x * x).sum();
    let scale = frobenius_norm(w).max(1.0);
    if norm_sq.sqrt() < 1e-12 * scale {
        return Err(Error::Degenerate(
            "common direction vanishes: 𝟙 is orthogonal to the row space".into(),
        ));
    }
    Ok(u / norm_sq)
}

/// Constrained least-squares decomposition, computed in closed form.
///
/// Steps: `w_c ← (1/D) W 𝟙`; top-`k` SVD of `W - w_c 𝟙ᵀ` giving the best
/// rank-`(k+1)` approximation `M` whose row space contains `𝟙`; then
/// `w_c ← (Mᵀ)⁺𝟙/‖(Mᵀ)⁺𝟙‖²` and a re-factorization of `M - w_c 𝟙ᵀ`, which
/// restore the orthogonality constraint without changing `M`.
pub fn svd_decompose(bank: &ClassifierBank, k: usize) -> Result<Decomposition> {
    let w = bank.matrix();
    let (m, d) = w.dim();
    if k > d - 1 {
        return Err(Error::config(format!(
            "rank k = {k} out of range for {d} domains (need k ≤ D-1)"
        )));
    }

    let mean = common_mean(bank);
    let mut centered = w.clone();
    for dcol in 0..d {
        for i in 0..m {
            centered[[i, dcol]] -= mean[i];
        }
    }

    let factor = svd(&centered);
    let scale = factor.s.first().copied().unwrap_or(0.0);
    let tau = SVD_RTOL * scale.max(1e-300);
    // rank k+1 needs k usable directions after centering plus the mean
    let usable = factor.s.iter().filter(|&&s| s > tau).count();
    let unique = usable >= k;

    // M = mean 𝟙ᵀ + top-k component
    let mut msvd = Array2::zeros((m, d));
    for j in 0..k.min(factor.s.len()) {
        if factor.s[j] <= tau {
            break;
        }
        for i in 0..m {
            for c in 0..d {
                msvd[[i, c]] += factor.u[[i, j]] * factor.s[j] * factor.vt[[j, c]];
            }
        }
    }
    let mut mfull = msvd.clone();
    for c in 0..d {
        for i in 0..m {
            mfull[[i, c]] += mean[i];
        }
    }

    if k == 0 {
        return Ok(Decomposition {
            w_c: mean,
            w_s: Array2::zeros((m, 0)),
            gamma: Array2::zeros((d, 0)),
            k,
            unique,
        });
    }

    let w_c = pinv_common(&mfull)?;
    let mut residual = mfull.clone();
    for c in 0..d {
        for i in 0..m {
            residual[[i, c]] -= w_c[i];
        }
    }

    // Re-factor the residual, rank ≤ k by construction.
    let Svd { u, s, vt } = svd(&residual);
    let rtau = SVD_RTOL * s.first().copied().unwrap_or(0.0).max(1e-300);
    let mut w_s = Array2::zeros((m, k));
    let mut gamma = Array2::zeros((d, k));
    for j in 0..k.min(s.len()) {
        if s[j] <= rtau {
            break;
        }
        for i in 0..m {
            w_s[[i, j]] = u[[i, j]];
        }
        for c in 0..d {
            gamma[[c, j]] = s[j] * vt[[j, c]];
        }
    }

    Ok(Decomposition {
        w_c,
        w_s,
        gamma,
        k,
        unique,
    })
}

/// `e_c - P_{E_s} e_c`: the component of the common generative direction
/// orthogonal to the specific span.
pub fn project_orthogonal(e_c: &Array1<f64>, e_s: &Array2<f64>) -> Result<Array1<f64>> {
    if e_s.nrows() != e_c.len() {
        return Err(Error::config("dimension mismatch between e_c and E_s"));
    }
    if e_s.ncols() == 0 {
        return Ok(e_c.clone());
    }
    let p = linalg::projector(e_s)?;
    Ok(e_c - &p.dot(e_c))
}

/// Identifiability check against a known generative recipe: for a
/// rank-`(k+1)` bank, `w_c = e_c - P_{E_s} e_c` and `w_c ⊥ span(W_s)` are
/// equivalent characterizations of the recoverable common part. Returns
/// true when the decomposition satisfies both (at tolerance `1e-8`),
/// i.e. its common part is the identifiable one.
pub fn lemma_check(e_c: &Array1<f64>, e_s: &Array2<f64>, dec: &Decomposition) -> Result<bool> {
    let tol = 1e-8;
    let projected = project_orthogonal(e_c, e_s)?;
    let is_projection = dec
        .w_c
        .iter()
        .zip(&projected)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        <= tol * projected.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let is_orthogonal = dec.max_orthogonality_violation()
        <= tol * dec.w_c.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    Ok(is_projection && is_orthogonal)
}

/// `‖I_{k+1} - Ŵᵀ Ŵ‖_F²` for one class's stacked head `Ŵ = [w_c | W_s]`
/// (`m × (k+1)`). Zero exactly when the columns are orthonormal.
pub fn orthonormality_penalty(w_c: &Array1<f64>, w_s: &Array2<f64>) -> f64 {
    let m = w_c.len();
    let k = w_s.ncols();
    let mut stacked = Array2::zeros((m, k + 1));
    for i in 0..m {
        stacked[[i, 0]] = w_c[i];
        for j in 0..k {
            stacked[[i, j + 1]] = w_s[[i, j]];
        }
    }
    let gram = stacked.t().dot(&stacked);
    let mut total = 0.0;
    for a in 0..(k + 1) {
        for b in 0..(k + 1) {
            let target = if a == b { 1.0 } else { 0.0 };
            let diff = target - gram[[a, b]];
            total += diff * diff;
        }
    }
    total
}

/// Generative recipe behind the synthetic decomposition settings:
/// `x = y (e_c + Σ_j β_{d,j} e_{s_j}) + noise_d`.
#[derive(Debug, Clone)]
pub struct GenerativeSpec {
    pub e_c: Array1<f64>,
    /// `m × k`, mutually orthogonal columns, all orthogonal to `e_c`.
    pub e_s: Array2<f64>,
    /// `D × k` per-domain coefficients β.
    pub beta: Array2<f64>,
    /// Per-domain isotropic noise scale σ_d.
    pub sigma: Vec<f64>,
}

impl GenerativeSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.e_c.len();
        let k = self.e_s.ncols();
        if self.e_s.nrows() != m {
            return Err(Error::config("e_s row count must match e_c length"));
        }
        if self.beta.ncols() != k {
            return Err(Error::config("beta width must match number of specific axes"));
        }
        if self.beta.nrows() != self.sigma.len() {
            return Err(Error::config("one noise scale per domain required"));
        }
        let tol = 1e-10;
        for j in 0..k {
            let dot_c: f64 = self.e_c.iter().zip(self.e_s.column(j)).map(|(a, b)| a * b).sum();
            if dot_c.abs() > tol {
                return Err(Error::config("specific axes must be orthogonal to e_c"));
            }
            for l in (j + 1)..k {
                let dot: f64 = self
                    .e_s
                    .column(j)
                    .iter()
                    .zip(self.e_s.column(l))
                    .map(|(a, b)| a * b)
                    .sum();
                if dot.abs() > tol {
                    return Err(Error::config("specific axes must be mutually orthogonal"));
                }
            }
        }
        Ok(())
    }

    /// Noiseless per-domain classifier bank `W` with columns
    /// `e_c + E_s β_d`, the matrix whose decomposition the identifiability
    /// results describe.
    pub fn classifier_bank(&self) -> Result<ClassifierBank> {
        let m = self.e_c.len();
        let d = self.beta.nrows();
        let mut w = Array2::zeros((m, d));
        for dom in 0..d {
            for i in 0..m {
                let mut v = self.e_c[i];
                for j in 0..self.e_s.ncols() {
                    v += self.beta[[dom, j]] * self.e_s[[i, j]];
                }
                w[[i, dom]] = v;
            }
        }
        ClassifierBank::new(w)
    }
}

/// Hyperparameters of the trained decomposition.
#[derive(Debug, Clone)]
pub struct CsdTrainConfig {
    /// Specific-subspace rank.
    pub k: usize,
    /// Weight λ of the common-head loss term.
    pub lambda: f64,
    /// Weight κ of the orthonormality penalty.
    pub kappa: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Hidden layer sizes of the feature stack; empty trains directly on
    /// the raw features.
    pub hidden: Vec<usize>,
}

impl CsdTrainConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        CsdTrainConfig {
            k,
            lambda: 1.0,
            kappa: 1.0,
            epochs: 400,
            lr: 0.1,
            seed,
            hidden: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.kappa < 0.0 {
            return Err(Error::config("lambda and kappa must be non-negative"));
        }
        if self.epochs == 0 || self.lr <= 0.0 {
            return Err(Error::config("epochs and lr must be positive"));
        }
        Ok(())
    }
}

/// Trainable decomposition head (plus optional feature stack).
///
/// `w_c` is `C × m_feat`; `w_s[j]` is the `C × m_feat` slab of the `j`-th
/// specific direction; `gamma` is `D × k`. The head used for an example of
/// domain `d` is `w_d = w_c + Σ_j γ_{d,j} w_s[j]`.
#[derive(Debug, Clone)]
pub struct CsdModel {
    pub features: Vec<Layer>,
    pub w_c: Array2<f64>,
    pub w_s: Vec<Array2<f64>>,
    pub gamma: Array2<f64>,
    input_dim: usize,
    feature_dim: usize,
    num_classes: usize,
}

impl CsdModel {
    /// Common-head classifier: the inference path (`θ`, `w_c`) packaged as
    /// an ordinary model so the usual evaluation applies.
    pub fn common_model(&self) -> ModelParams {
        let hidden: Vec<usize> = self.features.iter().map(|l| l.b.len()).collect();
        let arch = ModelArch {
            input_dim: self.input_dim,
            hidden,
            num_classes: self.num_classes,
        };
        let mut layers = self.features.clone();
        layers.push(Layer {
            w: self.w_c.clone(),
            b: Array1::zeros(self.num_classes),
        });
        ModelParams { arch, layers }
    }

    /// Per-class decomposition `[w_c[y] | W_s[y]]` of the head weights, as
    /// an `m × (k+1)` stack.
    pub fn class_stack(&self, class: usize) -> (Array1<f64>, Array2<f64>) {
        let m = self.feature_dim;
        let k = self.w_s.len();
        let w_c = Array1::from_iter(self.w_c.row(class).iter().copied());
        let mut w_s = Array2::zeros((m, k));
        for j in 0..k {
            for i in 0..m {
                w_s[[i, j]] = self.w_s[j][[class, i]];
            }
        }
        (w_c, w_s)
    }

    /// Total orthonormality penalty over classes.
    pub fn penalty(&self) -> f64 {
        (0..self.num_classes)
            .map(|c| {
                let (w_c, w_s) = self.class_stack(c);
                orthonormality_penalty(&w_c, &w_s)
            })
            .sum()
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.features {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out.extend(self.w_c.iter().copied());
        for s in &self.w_s {
            out.extend(s.iter().copied());
        }
        out.extend(self.gamma.iter().copied());
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for l in &mut self.features {
            for w in l.w.iter_mut() {
                *w = flat[pos];
                pos += 1;
            }
            for b in l.b.iter_mut() {
                *b = flat[pos];
                pos += 1;
            }
        }
        for w in self.w_c.iter_mut() {
            *w = flat[pos];
            pos += 1;
        }
        for s in &mut self.w_s {
            for w in s.iter_mut() {
                *w = flat[pos];
                pos += 1;
            }
        }
        for g in self.gamma.iter_mut() {
            *g = flat[pos];
            pos += 1;
        }
        assert_eq!(pos, flat.len());
    }
}

/// Per-epoch record of the trained decomposition.
#[derive(Debug, Clone)]
pub struct CsdSnapshot {
    pub loss: f64,
    pub penalty: f64,
    pub w_c: Array2<f64>,
    pub w_s: Vec<Array2<f64>>,
    pub gamma: Array2<f64>,
}

/// Result of [`csd_train`]: the trained model, the per-epoch trace, and
/// common-head metrics.
#[derive(Debug, Clone)]
pub struct CsdRun {
    pub model: CsdModel,
    pub trace: Vec<CsdSnapshot>,
    pub train: SplitMetrics,
    pub test: Option<SplitMetrics>,
}

fn init_csd_model(data: &DomainDataset, cfg: &CsdTrainConfig) -> CsdModel {
    let mut rng = SplitMix64::new(cfg.seed);
    let mut features = Vec::new();
    let mut fan_in = data.num_features();
    for &h in &cfg.hidden {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((h, fan_in), |_| rng.uniform(-bound, bound));
        features.push(Layer {
            w,
            b: Array1::zeros(h),
        });
        fan_in = h;
    }
    let c = data.num_classes();
    let d = data.num_domains();
    let bound = 1.0 / (fan_in as f64).sqrt();
    // The specific directions and coefficients must start away from zero:
    // at exactly zero their gradients vanish jointly.
    let w_c = Array2::zeros((c, fan_in));
    let w_s = (0..cfg.k)
        .map(|_| Array2::from_shape_fn((c, fan_in), |_| rng.uniform(-bound, bound)))
        .collect();
    let gamma = Array2::from_shape_fn((d, cfg.k), |_| rng.uniform(-1.0, 1.0));
    CsdModel {
        features,
        w_c,
        w_s,
        gamma,
        input_dim: data.num_features(),
        feature_dim: fan_in,
        num_classes: c,
    }
}

/// Mean of `CE(w_d·z, y) + λ CE(w_c·z, y)` over all examples plus
/// `κ · penalty`, with the exact gradient for every block. Exposed for the
/// finite-difference checks.
pub fn csd_loss_and_grad(
    model: &CsdModel,
    data: &DomainDataset,
    lambda: f64,
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    let c = model.num_classes;
    let mf = model.feature_dim;
    let k = model.w_s.len();
    let n_total = data.len() as f64;

    let mut g_features: Vec<(Array2<f64>, Array1<f64>)> = model
        .features
        .iter()
        .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
        .collect();
    let mut g_wc = Array2::<f64>::zeros((c, mf));
    let mut g_ws: Vec<Array2<f64>> = (0..k).map(|_| Array2::zeros((c, mf))).collect();
    let mut g_gamma = Array2::<f64>::zeros(model.gamma.dim());
    let mut loss = 0.0;

    for dom in 0..data.num_domains() {
        let examples = data.domain(dom);
        let n = examples.len();
        let xs = Array2::from_shape_fn((n, data.num_features()), |(i, j)| examples[i].x[j]);

        // forward through the feature stack
        let mut acts = vec![xs];
        for layer in &model.features {
            let mut z = acts.last().unwrap().dot(&layer.w.t());
            for mut row in z.rows_mut() {
                row += &layer.b;
            }
            z.mapv_inplace(f64::tanh);
            acts.push(z);
        }
        let feats = acts.last().unwrap().clone();

        // head for this domain
        let mut w_d = model.w_c.clone();
        for j in 0..k {
            w_d += &(&model.w_s[j] * model.gamma[[dom, j]]);
        }

        let logits_d = feats.dot(&w_d.t());
        let logits_c = feats.dot(&model.w_c.t());
        let mut delta_d = softmax_rows(&logits_d);
        let mut delta_c = softmax_rows(&logits_c);
        for (i, ex) in examples.iter().enumerate() {
            let row_d = logits_d.row(i);
            let row_c = logits_c.row(i);
            loss += (log_sum_exp(row_d.as_slice().unwrap()) - row_d[ex.y]) / n_total;
            loss +=
                lambda * (log_sum_exp(row_c.as_slice().unwrap()) - row_c[ex.y]) / n_total;
            delta_d[[i, ex.y]] -= 1.0;
            delta_c[[i, ex.y]] -= 1.0;
        }
        delta_d /= n_total;
        delta_c *= lambda / n_total;

        // head gradients
        let gd = delta_d.t().dot(&feats); // C × mf, gradient for w_d
        g_wc = g_wc + &gd + &delta_c.t().dot(&feats);
        for j in 0..k {
            g_ws[j] = &g_ws[j] + &(&gd * model.gamma[[dom, j]]);
            let contraction: f64 = gd.iter().zip(model.w_s[j].iter()).map(|(a, b)| a * b).sum();
            g_gamma[[dom, j]] += contraction;
        }

        // feature gradients: back through both heads
        if !model.features.is_empty() {
            let mut dfeat = delta_d.dot(&w_d) + delta_c.dot(&model.w_c);
            for idx in (0..model.features.len()).rev() {
                let a = &acts[idx + 1];
                dfeat.zip_mut_with(a, |d, &t| *d *= 1.0 - t * t);
                let gw = dfeat.t().dot(&acts[idx]);
                let gb = dfeat.sum_axis(ndarray::Axis(0));
                g_features[idx].0 = &g_features[idx].0 + &gw;
                g_features[idx].1 = &g_features[idx].1 + &gb;
                dfeat = dfeat.dot(&model.features[idx].w);
            }
        }
    }

    // orthonormality penalty and its gradient: ∇_Ŵ ‖I - ŴᵀŴ‖² = -4 Ŵ (I - ŴᵀŴ)
    if kappa > 0.0 {
        for class in 0..c {
            let (w_c_cls, w_s_cls) = model.class_stack(class);
            loss += kappa * orthonormality_penalty(&w_c_cls, &w_s_cls);
            let mut stacked = Array2::zeros((mf, k + 1));
            for i in 0..mf {
                stacked[[i, 0]] = w_c_cls[i];
                for j in 0..k {
                    stacked[[i, j + 1]] = w_s_cls[[i, j]];
                }
            }
            let gram = stacked.t().dot(&stacked);
            let mut residual = Array2::eye(k + 1);
            residual -= &gram;
            let grad_stacked = stacked.dot(&residual) * (-4.0 * kappa);
            for i in 0..mf {
                g_wc[[class, i]] += grad_stacked[[i, 0]];
                for j in 0..k {
                    g_ws[j][[class, i]] += grad_stacked[[i, j + 1]];
                }
            }
        }
    }

    let mut flat = Vec::new();
    for (gw, gb) in &g_features {
        flat.extend(gw.iter().copied());
        flat.extend(gb.iter().copied());
    }
    flat.extend(g_wc.iter().copied());
    for s in &g_ws {
        flat.extend(s.iter().copied());
    }
    flat.extend(g_gamma.iter().copied());
    if !loss.is_finite() || flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("csd loss", None));
    }
    Ok((loss, flat))
}

/// Train the decomposed classifier by full-batch gradient descent.
pub fn csd_train(
    data: &DomainDataset,
    test: Option<&DomainDataset>,
    cfg: &CsdTrainConfig,
) -> Result<CsdRun> {
    cfg.validate()?;
    if data.num_domains() < 2 && cfg.k > 0 {
        return Err(Error::config("a specific subspace needs at least 2 domains"));
    }
    if cfg.k + 1 > data.num_domains() && cfg.k > 0 {
        return Err(Error::config(format!(
            "rank k = {} too large for {} domains",
            cfg.k,
            data.num_domains()
        )));
    }

    let mut model = init_csd_model(data, cfg);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = csd_loss_and_grad(&model, data, cfg.lambda, cfg.kappa)?;
        if loss > crate::optim::DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                epoch,
                domain: 0,
                loss,
                limit: crate::optim::DIVERGENCE_LIMIT,
            });
        }
        trace.push(CsdSnapshot {
            loss,
            penalty: model.penalty(),
            w_c: model.w_c.clone(),
            w_s: model.w_s.clone(),
            gamma: model.gamma.clone(),
        });
        let mut flat = model.flat();
        for (x, g) in flat.iter_mut().zip(&grad) {
            *x -= cfg.lr * g;
        }
        model.set_flat(&flat);
    }

    let common = model.common_model();
    let train_metrics = metrics::evaluate(&common, data)?;
    let test_metrics = test.map(|t| metrics::evaluate(&common, t)).transpose()?;
    Ok(CsdRun {
        model,
        trace,
        train: train_metrics,
        test: test_metrics,
    })
}
