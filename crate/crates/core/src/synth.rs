//! Seeded generators for the synthetic multi-domain tasks.
//!
//! Every generator is a pure function of its spec and a 64-bit seed. The
//! substream layout is fixed: a root [`SplitMix64`] is seeded and split
//! once per training domain in index order, then once per test domain, so
//! adding test data never disturbs the training draw. Within a domain
//! stream, feature draws come first, example by example, followed by any
//! index selection for flips or corruptions.
//!
//! Fractions like "20% of examples" are applied as exact counts chosen
//! without replacement (`round(rate · n)` via a partial Fisher–Yates
//! pass), not per-example coin flips.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{DomainDataset, Example};
use crate::rng::SplitMix64;

/// Two-feature generative setting with one common and one specific axis:
/// `x = y·e_c + β_d·y·e_s + σ_d·N(0, I)` with `y = ±1` equiprobable
/// (class 1 for +1). The first `train_domains` entries of `betas` are the
/// training domains; the rest form the test split.
#[derive(Debug, Clone)]
pub struct DgExampleSpec {
    pub e_c: Vec<f64>,
    pub e_s: Vec<f64>,
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub train_domains: usize,
    pub test_size: usize,
}

impl Default for DgExampleSpec {
    fn default() -> Self {
        DgExampleSpec {
            e_c: vec![1.0, 0.0],
            e_s: vec![0.0, 1.0],
            betas: vec![-1.0, 2.0, -4.0],
            sigmas: vec![0.2, 0.5, 0.4],
            train_sizes: vec![500, 500],
            train_domains: 2,
            test_size: 1000,
        }
    }
}

/// Label-noise setting: both features standard normal, label
/// `y = [x₁ + x₂ > 0]`; the first domain's *training* labels are flipped
/// for an exact 20% (Noisy-Majority); the other two domains stay clean
/// (Clean-Majority, Clean-Minority). Test splits are clean unless
/// `noisy_test` is set.
#[derive(Debug, Clone)]
pub struct NoiseSimpleSpec {
    pub sizes: Vec<usize>,
    pub flip_rate: f64,
    pub test_size: usize,
    /// Apply the same label flipping to the first domain's test split.
    pub noisy_test: bool,
}

impl Default for NoiseSimpleSpec {
    fn default() -> Self {
        NoiseSimpleSpec {
            sizes: vec![450, 450, 100],
            flip_rate: 0.2,
            test_size: 1000,
            noisy_test: false,
        }
    }
}

/// Rotation setting: three deterministic labelers over standard-normal
/// features, `[x₁ > 0]`, `[0.87 x₁ + 0.5 x₂ > 0]`, `[0.5 x₁ + 0.87 x₂ > 0]`
/// (Left, Center, Right; the printed 0.87/0.5 coefficients, not exact
/// cos/sin), with a two-example minority domain.
#[derive(Debug, Clone)]
pub struct RotationSimpleSpec {
    pub sizes: Vec<usize>,
    pub test_size: usize,
}

impl Default for RotationSimpleSpec {
    fn default() -> Self {
        RotationSimpleSpec {
            sizes: vec![499, 499, 2],
            test_size: 1000,
        }
    }
}

/// Labeling directions of the rotation setting, one per domain.
pub const ROTATION_WEIGHTS: [[f64; 2]; 3] = [[1.0, 0.0], [0.87, 0.5], [0.5, 0.87]];

/// Spurious-correlation setting: base task as in the noise setting plus a
/// third feature. Domain 0 sets `x₃ = y` and has its first two features
/// negated for an exact `1 - predictive_rate` fraction (so they imply the
/// correct label only `predictive_rate` of the time); domain 1 sets
/// `x₃ = y` for an exact `x3_agree_rate` fraction and `1 - y` otherwise;
/// domain 2 (minority) sets `x₃ = 1 - y`. The feature corruption of
/// domain 0 is a training artifact and is not applied to the test split
/// unless `corrupt_test` is set; the `x₃` construction, being part of
/// each domain's distribution, always is.
#[derive(Debug, Clone)]
pub struct SpuriousSimpleSpec {
    pub sizes: Vec<usize>,
    /// Fraction of domain-0 examples whose first two features imply the
    /// correct label.
    pub predictive_rate: f64,
    /// Fraction of domain-1 examples with `x₃ = y`.
    pub x3_agree_rate: f64,
    pub test_size: usize,
    pub corrupt_test: bool,
}

impl Default for SpuriousSimpleSpec {
    fn default() -> Self {
        SpuriousSimpleSpec {
            sizes: vec![490, 490, 20],
            predictive_rate: 0.6,
            x3_agree_rate: 0.6,
            test_size: 1000,
            corrupt_test: false,
        }
    }
}

/// Any of the synthetic tasks, for configuration and dispatch.
#[derive(Debug, Clone)]
pub enum SynthTask {
    DgExample(DgExampleSpec),
    NoiseSimple(NoiseSimpleSpec),
    RotationSimple(RotationSimpleSpec),
    SpuriousSimple(SpuriousSimpleSpec),
}

impl SynthTask {
    pub fn name(&self) -> &'static str {
        match self {
            SynthTask::DgExample(_) => "dg-example",
            SynthTask::NoiseSimple(_) => "noise-simple",
            SynthTask::RotationSimple(_) => "rotation-simple",
            SynthTask::SpuriousSimple(_) => "spurious-simple",
        }
    }

    /// Generate `(train, test)` for this task.
    pub fn generate(&self, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
        match self {
            SynthTask::DgExample(s) => gen_dg_example(s, seed),
            SynthTask::NoiseSimple(s) => gen_noise_simple(s, seed),
            SynthTask::RotationSimple(s) => gen_rotation_simple(s, seed),
            SynthTask::SpuriousSimple(s) => gen_spurious_simple(s, seed),
        }
    }
}

fn sign_label(rng: &mut SplitMix64) -> (f64, usize) {
    // y = ±1 equiprobable; class index 1 for +1
    if rng.next_f64() < 0.5 {
        (-1.0, 0)
    } else {
        (1.0, 1)
    }
}

pub fn gen_dg_example(spec: &DgExampleSpec, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
    let m = spec.e_c.len();
    if spec.e_s.len() != m {
        return Err(Error::config("e_c and e_s lengths differ"));
    }
    if spec.betas.len() != spec.sigmas.len() {
        return Err(Error::config("betas and sigmas lengths differ"));
    }
    if spec.train_domains == 0 || spec.train_domains > spec.betas.len() {
        return Err(Error::config("train_domains out of range"));
    }
    if spec.train_sizes.len() != spec.train_domains {
        return Err(Error::config("one train size per train domain required"));
    }
    let mut root = SplitMix64::new(seed);

    let make_domain = |rng: &mut SplitMix64, d: usize, beta: f64, sigma: f64, n: usize| {
        (0..n)
            .map(|_| {
                let (sign, class) = sign_label(rng);
                let x: Vec<f64> = (0..m)
                    .map(|i| sign * spec.e_c[i] + beta * sign * spec.e_s[i] + sigma * rng.normal())
                    .collect();
                Example { x, y: class, d }
            })
            .collect::<Vec<_>>()
    };

    let mut train = Vec::new();
    for d in 0..spec.train_domains {
        let mut stream = root.split();
        train.extend(make_domain(
            &mut stream,
            d,
            spec.betas[d],
            spec.sigmas[d],
            spec.train_sizes[d],
        ));
    }
    let test_domains = spec.betas.len() - spec.train_domains;
    let mut test = Vec::new();
    for t in 0..test_domains {
        let d = spec.train_domains + t;
        let mut stream = root.split();
        test.extend(
            make_domain(&mut stream, t, spec.betas[d], spec.sigmas[d], spec.test_size)
                .into_iter()
                .map(|mut ex| {
                    ex.d = t;
                    ex
                }),
        );
    }
    Ok((
        DomainDataset::new(train, m, 2, spec.train_domains)?,
        DomainDataset::new(test, m, 2, test_domains)?,
    ))
}

fn base_examples(rng: &mut SplitMix64, d: usize, n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let x1 = rng.normal();
            let x2 = rng.normal();
            let y = usize::from(x1 + x2 > 0.0);
            Example {
                x: vec![x1, x2],
                y,
                d,
            }
        })
        .collect()
}

fn flip_labels(rng: &mut SplitMix64, examples: &mut [Example], rate: f64) {
    let count = (rate * examples.len() as f64).round() as usize;
    for idx in rng.choose_exact(examples.len(), count) {
        examples[idx].y = 1 - examples[idx].y;
    }
}

pub fn gen_noise_simple(
    spec: &NoiseSimpleSpec,
    seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    if spec.sizes.is_empty() {
        return Err(Error::config("need at least one domain"));
    }
    if !(0.0..=1.0).contains(&spec.flip_rate) {
        return Err(Error::config("flip rate must lie in [0, 1]"));
    }
    let k = spec.sizes.len();
    let mut root = SplitMix64::new(seed);

    let mut train = Vec::new();
    for (d, &n) in spec.sizes.iter().enumerate() {
        let mut stream = root.split();
        let mut examples = base_examples(&mut stream, d, n);
        if d == 0 {
            flip_labels(&mut stream, &mut examples, spec.flip_rate);
        }
        train.extend(examples);
    }
    let mut test = Vec::new();
    for d in 0..k {
        let mut stream = root.split();
        let mut examples = base_examples(&mut stream, d, spec.test_size);
        if d == 0 && spec.noisy_test {
            flip_labels(&mut stream, &mut examples, spec.flip_rate);
        }
        test.extend(examples);
    }
    Ok((
        DomainDataset::new(train, 2, 2, k)?,
        DomainDataset::new(test, 2, 2, k)?,
    ))
}

pub fn gen_rotation_simple(
    spec: &RotationSimpleSpec,
    seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    if spec.sizes.len() != 3 {
        return Err(Error::config("the rotation setting has exactly 3 domains"));
    }
    let mut root = SplitMix64::new(seed);
    let label = |d: usize, x1: f64, x2: f64| -> usize {
        let w = ROTATION_WEIGHTS[d];
        usize::from(w[0] * x1 + w[1] * x2 > 0.0)
    };
    let make = |rng: &mut SplitMix64, d: usize, n: usize| {
        (0..n)
            .map(|_| {
                let x1 = rng.normal();
                let x2 = rng.normal();
                Example {
                    x: vec![x1, x2],
                    y: label(d, x1, x2),
                    d,
                }
            })
            .collect::<Vec<_>>()
    };
    let mut train = Vec::new();
    for (d, &n) in spec.sizes.iter().enumerate() {
        let mut stream = root.split();
        train.extend(make(&mut stream, d, n));
    }
    let mut test = Vec::new();
    for d in 0..3 {
        let mut stream = root.split();
        test.extend(make(&mut stream, d, spec.test_size));
    }
    Ok((
        DomainDataset::new(train, 2, 2, 3)?,
        DomainDataset::new(test, 2, 2, 3)?,
    ))
}

pub fn gen_spurious_simple(
    spec: &SpuriousSimpleSpec,
    seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    if spec.sizes.len() != 3 {
        return Err(Error::config("the spurious setting has exactly 3 domains"));
    }
    for rate in [spec.predictive_rate, spec.x3_agree_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::config("rates must lie in [0, 1]"));
        }
    }
    let mut root = SplitMix64::new(seed);

    let make = |rng: &mut SplitMix64, d: usize, n: usize, corrupt: bool| {
        let mut examples = base_examples(rng, d, n);
        match d {
            0 => {
                for ex in examples.iter_mut() {
                    ex.x.push(ex.y as f64);
                }
                if corrupt {
                    let count =
                        ((1.0 - spec.predictive_rate) * examples.len() as f64).round() as usize;
                    for idx in rng.choose_exact(examples.len(), count) {
                        // negating the first two features reverses the label
                        // they imply while preserving their distribution
                        examples[idx].x[0] = -examples[idx].x[0];
                        examples[idx].x[1] = -examples[idx].x[1];
                    }
                }
            }
            1 => {
                let count = (spec.x3_agree_rate * examples.len() as f64).round() as usize;
                let agree = rng.choose_exact(examples.len(), count);
                let mut is_agree = vec![false; examples.len()];
                for idx in agree {
                    is_agree[idx] = true;
                }
                for (i, ex) in examples.iter_mut().enumerate() {
                    let x3 = if is_agree[i] { ex.y } else { 1 - ex.y };
                    ex.x.push(x3 as f64);
                }
            }
            _ => {
                for ex in examples.iter_mut() {
                    ex.x.push((1 - ex.y) as f64);
                }
            }
        }
        examples
    };

    let mut train = Vec::new();
    for (d, &n) in spec.sizes.iter().enumerate() {
        let mut stream = root.split();
        train.extend(make(&mut stream, d, n, true));
    }
    let mut test = Vec::new();
    for d in 0..3 {
        let mut stream = root.split();
        test.extend(make(&mut stream, d, spec.test_size, spec.corrupt_test));
    }
    Ok((
        DomainDataset::new(train, 3, 2, 3)?,
        DomainDataset::new(test, 3, 2, 3)?,
    ))
}

/// Write a dataset as flat CSV with header `x1..xm,y,d`.
pub fn write_dataset_csv<W: Write>(data: &DomainDataset, out: &mut W) -> std::io::Result<()> {
    let m = data.num_features();
    let header: Vec<String> = (1..=m)
        .map(|i| format!("x{i}"))
        .chain(["y".to_string(), "d".to_string()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for d in 0..data.num_domains() {
        for ex in data.domain(d) {
            let mut row: Vec<String> = ex.x.iter().map(|v| format!("{v}")).collect();
            row.push(ex.y.to_string());
            row.push(ex.d.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let spec = NoiseSimpleSpec::default();
        let (a_train, a_test) = gen_noise_simple(&spec, 99).unwrap();
        let (b_train, b_test) = gen_noise_simple(&spec, 99).unwrap();
        for d in 0..3 {
            assert_eq!(a_train.domain(d), b_train.domain(d));
            assert_eq!(a_test.domain(d), b_test.domain(d));
        }
        let (c_train, _) = gen_noise_simple(&spec, 100).unwrap();
        assert_ne!(a_train.domain(0), c_train.domain(0));
    }

    #[test]
    fn sizes_match_spec_exactly() {
        let (train, test) = gen_noise_simple(&NoiseSimpleSpec::default(), 1).unwrap();
        assert_eq!(train.sizes(), vec![450, 450, 100]);
        assert_eq!(test.sizes(), vec![1000, 1000, 1000]);
        let (train, test) = gen_rotation_simple(&RotationSimpleSpec::default(), 1).unwrap();
        assert_eq!(train.sizes(), vec![499, 499, 2]);
        assert_eq!(test.sizes(), vec![1000, 1000, 1000]);
        let (train, _) = gen_spurious_simple(&SpuriousSimpleSpec::default(), 1).unwrap();
        assert_eq!(train.sizes(), vec![490, 490, 20]);
        let (train, test) = gen_dg_example(&DgExampleSpec::default(), 1).unwrap();
        assert_eq!(train.sizes(), vec![500, 500]);
        assert_eq!(test.sizes(), vec![1000]);
    }

    #[test]
    fn dg_example_noise_free_closed_form() {
        let spec = DgExampleSpec {
            betas: vec![1.0],
            sigmas: vec![0.0],
            train_sizes: vec![50],
            train_domains: 1,
            test_size: 1,
            ..DgExampleSpec::default()
        };
        // betas/sigmas must cover train+test; use a single train domain and
        // a single test domain with β = -4
        let spec = DgExampleSpec {
            betas: vec![1.0, -4.0],
            sigmas: vec![0.0, 0.0],
            ..spec
        };
        let (train, test) = gen_dg_example(&spec, 7).unwrap();
        for ex in train.domain(0) {
            let sign = if ex.y == 1 { 1.0 } else { -1.0 };
            assert_eq!(ex.x, vec![sign, sign]);
        }
        for ex in test.domain(0) {
            let sign = if ex.y == 1 { 1.0 } else { -1.0 };
            assert_eq!(ex.x, vec![sign, -4.0 * sign]);
        }
    }

    #[test]
    fn noise_simple_flip_fraction_is_exact() {
        let (train, test) = gen_noise_simple(&NoiseSimpleSpec::default(), 3).unwrap();
        let flipped = train
            .domain(0)
            .iter()
            .filter(|ex| ex.y != usize::from(ex.x[0] + ex.x[1] > 0.0))
            .count();
        assert_eq!(flipped, 90); // exactly 20% of 450
        for d in 1..3 {
            assert!(train
                .domain(d)
                .iter()
                .all(|ex| ex.y == usize::from(ex.x[0] + ex.x[1] > 0.0)));
        }
        // test is clean by default
        assert!(test
            .domain(0)
            .iter()
            .all(|ex| ex.y == usize::from(ex.x[0] + ex.x[1] > 0.0)));

        let noisy = NoiseSimpleSpec {
            noisy_test: true,
            ..NoiseSimpleSpec::default()
        };
        let (_, test) = gen_noise_simple(&noisy, 3).unwrap();
        let flipped = test
            .domain(0)
            .iter()
            .filter(|ex| ex.y != usize::from(ex.x[0] + ex.x[1] > 0.0))
            .count();
        assert_eq!(flipped, 200);
    }

    #[test]
    fn zero_flip_rate_makes_domains_identically_distributed() {
        let spec = NoiseSimpleSpec {
            flip_rate: 0.0,
            sizes: vec![400, 400, 400],
            ..NoiseSimpleSpec::default()
        };
        let (train, _) = gen_noise_simple(&spec, 5).unwrap();
        // same labeling rule everywhere; check label balance per domain
        for d in 0..3 {
            assert!(train
                .domain(d)
                .iter()
                .all(|ex| ex.y == usize::from(ex.x[0] + ex.x[1] > 0.0)));
            let pos = train.domain(d).iter().filter(|e| e.y == 1).count() as f64;
            let n = train.domain(d).len() as f64;
            assert!((pos / n - 0.5).abs() <= 3.0 / n.sqrt());
        }
    }

    #[test]
    fn rotation_label_rules_match_printed_coefficients() {
        let label = |d: usize, x: [f64; 2]| {
            let w = ROTATION_WEIGHTS[d];
            usize::from(w[0] * x[0] + w[1] * x[1] > 0.0)
        };
        // x = (1, 0): label 1 in all domains
        for d in 0..3 {
            assert_eq!(label(d, [1.0, 0.0]), 1);
        }
        // x = (0, 1): labels (0, 1, 1)
        assert_eq!(label(0, [0.0, 1.0]), 0);
        assert_eq!(label(1, [0.0, 1.0]), 1);
        assert_eq!(label(2, [0.0, 1.0]), 1);
        // x = (-0.5, 1): labels (0, 1, 1) with margins -0.5, 0.065, 0.62
        assert_eq!(label(0, [-0.5, 1.0]), 0);
        assert_eq!(label(1, [-0.5, 1.0]), 1);
        assert_eq!(label(2, [-0.5, 1.0]), 1);
    }

    #[test]
    fn spurious_third_feature_construction() {
        let (train, test) = gen_spurious_simple(&SpuriousSimpleSpec::default(), 11).unwrap();
        // domain 0: x3 == y always (train and test)
        assert!(train.domain(0).iter().all(|ex| ex.x[2] == ex.y as f64));
        assert!(test.domain(0).iter().all(|ex| ex.x[2] == ex.y as f64));
        // domain 2: x3 == 1 - y always
        assert!(train.domain(2).iter().all(|ex| ex.x[2] == (1 - ex.y) as f64));
        // domain 1: exactly 60% agreement
        let agree = train
            .domain(1)
            .iter()
            .filter(|ex| ex.x[2] == ex.y as f64)
            .count();
        assert_eq!(agree, 294); // 0.6 · 490

        // domain 0 train: first two features imply the right label for
        // exactly 60%; test split is uncorrupted by default
        let implied_ok = |ex: &Example| usize::from(ex.x[0] + ex.x[1] > 0.0) == ex.y;
        let ok = train.domain(0).iter().filter(|e| implied_ok(e)).count();
        assert_eq!(ok, 294);
        assert!(test.domain(0).iter().all(implied_ok));
    }

    #[test]
    fn spurious_pooled_agreement_rates_are_near_0_8() {
        let (train, _) = gen_spurious_simple(&SpuriousSimpleSpec::default(), 13).unwrap();
        let total = train.len() as f64;
        let x3_agree = train
            .iter_all()
            .filter(|ex| ex.x[2] == ex.y as f64)
            .count() as f64;
        let x12_agree = train
            .iter_all()
            .filter(|ex| usize::from(ex.x[0] + ex.x[1] > 0.0) == ex.y)
            .count() as f64;
        // (490·1 + 294 + 0)/1000 and (294 + 490 + 20)/1000
        assert!((x3_agree / total - 0.8).abs() <= 0.03);
        assert!((x12_agree / total - 0.8).abs() <= 0.03);
    }

    #[test]
    fn csv_export_shape_and_determinism() {
        let (train, _) = gen_spurious_simple(&SpuriousSimpleSpec::default(), 2).unwrap();
        let mut a = Vec::new();
        write_dataset_csv(&train, &mut a).unwrap();
        let mut b = Vec::new();
        write_dataset_csv(&train, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2,x3,y,d");
        assert_eq!(text.lines().count(), 1 + train.len());
    }
}
