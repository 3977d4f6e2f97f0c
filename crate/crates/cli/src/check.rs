//! `domainshift check`: the fast invariant battery. Exercises the same
//! invariants as the test suite but from the installed binary, so a
//! packaged build can be validated in the field.

use ndarray::Array2;

use domainshift::crossgrad::CrossGradConfig;
use domainshift::model::{
    domain_stats, fd_gradient, grad_rel_err, loss_and_grad, scale_gradient, softmax_rows,
    Example, GradientSet, ModelArch, ModelParams, Sampler,
};
use domainshift::optim::{
    cgd_alpha_update, train, Algorithm, AlphaVariant, CgdConfig, DomainWeights, TrainConfig,
};
use domainshift::rng::SplitMix64;
use domainshift::synth::{gen_noise_simple, NoiseSimpleSpec};

use crate::bench::BenchReport;

fn check_line(report: &mut BenchReport, ok: bool, text: String) {
    if ok {
        report.passed += 1;
    } else {
        report.failed += 1;
    }
    let status = if ok { "PASS" } else { "FAIL" };
    println!("[{status}] {text}");
}

pub fn run() -> anyhow::Result<BenchReport> {
    let mut report = BenchReport {
        passed: 0,
        failed: 0,
    };
    let mut rng = SplitMix64::new(17);

    // gradient correctness spot checks
    let mut worst_grad: f64 = 0.0;
    for i in 0..10 {
        let arch = if i % 2 == 0 {
            ModelArch::linear(3, 3)
        } else {
            ModelArch::mlp(3, vec![4], 2)
        };
        let mut params = ModelParams::init(&arch, rng.next_u64());
        let flat: Vec<f64> = (0..params.param_count()).map(|_| rng.normal() * 0.7).collect();
        params.set_flat(&flat);
        let batch: Vec<Example> = (0..8)
            .map(|j| Example {
                x: (0..3).map(|_| rng.normal()).collect(),
                y: j % arch.num_classes,
                d: 0,
            })
            .collect();
        let (_, analytic) = loss_and_grad(&params, &batch)?;
        let fd = fd_gradient(|p| loss_and_grad(p, &batch).unwrap().0, &params, 1e-6);
        worst_grad = worst_grad.max(grad_rel_err(&analytic, &fd));
    }
    check_line(
        &mut report,
        worst_grad <= 1e-5,
        format!("analytic gradients vs central differences: worst rel err {worst_grad:.2e} ≤ 1e-5"),
    );

    // softmax normalization
    let logits = Array2::from_shape_fn((30, 4), |_| rng.normal() * 25.0);
    let probs = softmax_rows(&logits);
    let max_dev = probs
        .rows()
        .into_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0_f64, f64::max);
    check_line(
        &mut report,
        max_dev <= 1e-12,
        format!("softmax rows sum to one: max deviation {max_dev:.1e}"),
    );

    // scaled-gradient norm identity
    let mut worst_norm_dev: f64 = 0.0;
    for _ in 0..50 {
        let g: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let loss = rng.next_f64() * 3.0;
        let scaled = scale_gradient(&g, loss, 0.5);
        let norm = scaled.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_norm_dev = worst_norm_dev.max((norm - loss.sqrt()).abs());
    }
    check_line(
        &mut report,
        worst_norm_dev <= 1e-12,
        format!("scaled gradient norm equals loss^p: max deviation {worst_norm_dev:.1e}"),
    );

    // simplex preservation + mirror-descent monotonicity
    let mut worst_sum_dev: f64 = 0.0;
    let mut worst_align_violation: f64 = 0.0;
    for _ in 0..500 {
        let k = 2 + (rng.next_u64() % 4) as usize;
        let grads = Array2::from_shape_fn((k, 5), |_| rng.normal() * 2.0);
        let losses: Vec<f64> = (0..k).map(|_| rng.next_f64()).collect();
        let gs = GradientSet {
            losses,
            grads: grads.clone(),
        };
        let raw: Vec<f64> = (0..k).map(|_| rng.next_f64() + 0.01).collect();
        let z: f64 = raw.iter().sum();
        let alpha = DomainWeights::from_vec(raw.into_iter().map(|x| x / z).collect())?;
        let next = cgd_alpha_update(
            &alpha,
            &gs,
            rng.next_f64() + 0.01,
            AlphaVariant::InnerProduct,
            0.5,
            0.0,
            &vec![3; k],
        )?;
        worst_sum_dev =
            worst_sum_dev.max((next.as_slice().iter().sum::<f64>() - 1.0).abs());
        let mean: Vec<f64> = (0..5)
            .map(|j| (0..k).map(|i| grads[[i, j]]).sum::<f64>() / k as f64)
            .collect();
        let align = |w: &[f64]| -> f64 {
            (0..k)
                .map(|i| {
                    w[i] * grads.row(i).iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum()
        };
        worst_align_violation =
            worst_align_violation.max(align(alpha.as_slice()) - align(next.as_slice()));
    }
    check_line(
        &mut report,
        worst_sum_dev <= 1e-9,
        format!("weight updates stay on the simplex: max sum deviation {worst_sum_dev:.1e}"),
    );
    check_line(
        &mut report,
        worst_align_violation <= 1e-12,
        format!("mirror-descent monotonicity (500 instances): worst violation {worst_align_violation:.1e}"),
    );

    // degenerate reductions (short runs)
    let (data, _) = gen_noise_simple(&NoiseSimpleSpec::default(), 0)?;
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::new(ModelArch::linear(2, 2), 0)
    };
    let erm = train(&Algorithm::Erm, &data, None, &cfg)?;
    let uw = train(&Algorithm::ErmUw { c: 0.0 }, &data, None, &cfg)?;
    let cgd0 = train(
        &Algorithm::Cgd(CgdConfig {
            eta_alpha: 0.0,
            ..CgdConfig::default()
        }),
        &data,
        None,
        &cfg,
    )?;
    let xg0 = train(
        &Algorithm::CrossGrad(CrossGradConfig {
            eps_label: 0.0,
            eps_domain: 0.0,
            ..CrossGradConfig::default()
        }),
        &data,
        None,
        &cfg,
    )?;
    check_line(
        &mut report,
        erm.params.flat() == uw.params.flat()
            && erm.params.flat() == cgd0.params.flat()
            && erm.params.flat() == xg0.params.flat(),
        "degenerate configurations retrace the uniform baseline bitwise".to_string(),
    );

    // determinism of per-domain statistics
    let params = ModelParams::init(&ModelArch::linear(2, 2), 0);
    let a = domain_stats(&params, &data, &mut Sampler::FullBatch)?;
    let b = domain_stats(&params, &data, &mut Sampler::FullBatch)?;
    check_line(
        &mut report,
        a.losses == b.losses && a.grads == b.grads,
        "full-batch domain statistics are bit-identical across calls".to_string(),
    );

    Ok(report)
}
