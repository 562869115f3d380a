use super::config::ExperimentConfig;
use super::report::{ExperimentOutcome, Table, TestReport, Threshold};
use crate::chaos::{chaos_second_moment, contract, inner_h, FracFieldSampler, RectFn, TensorKernel, ThetaOptions};
use crate::error::Result;
use crate::rng::{derive_seed, keys};
use crate::stats::Moments;

const THETA_SAMPLE_CAP: usize = 200_000;

fn moment_z(xs: &[f64], want: f64) -> f64 {
    let m = Moments::of(xs);
    (m.mean - want).abs() / m.se_mean().max(f64::MIN_POSITIVE)
}

pub(super) fn chaos_identity_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let h = c.hurst;
    let samples = c.replicas;
    let t = &c.thresholds;
    let seed = derive_seed(c.seed, keys::FIELD);
    let f = RectFn::indicator((0.0, 1.0), (0.0, 1.0))?;
    let g = RectFn::indicator((0.5, 1.0), (-0.5, 0.5))?;
    let e = RectFn::new(3.0, (0.0, 0.25), (0.5, 1.5))?;
    let g1 = TensorKernel::power(&g, 1);

    let kernels = [
        TensorKernel::power(&f, 1),
        TensorKernel::power(&f, 2),
        TensorKernel::power(&f, 3),
        TensorKernel::elementary(1.0, &[(f, 1), (e, 1)]),
    ];
    let mut reports = Vec::new();
    let mut worst: f64 = 0.0;
    for k in &kernels {
        let l = k.order();
        let fg = k.tensor(&g1);
        let fc = contract(k, &g1, 1, h)?;
        let sampler = FracFieldSampler::for_kernels(&[k], &[g], h, seed)?;
        let s = sampler.multiple_integrals(&[k, &g1, &fg, &fc], samples)?;
        let (mut res, mut scale) = (0.0f64, 0.0f64);
        for i in 0..samples {
            let lhs = s[0][i] * s[1][i];
            res = res.max((lhs - s[2][i] - l as f64 * s[3][i]).abs());
            scale = scale.max(lhs.abs());
        }
        worst = worst.max(res / (1.0 + scale));
    }
    reports.push(TestReport::new(c, "product_formula_max_residual", worst, None, Threshold::AtMost(t.pathwise)));

    let sampler = FracFieldSampler::new(&[f, e, g], h, seed)?;
    for k in 1..=3 {
        let kernel = TensorKernel::power(&e, k);
        let draws = sampler.multiple_integrals(&[&kernel], samples)?.remove(0);
        let sq: Vec<f64> = draws.iter().map(|v| v * v).collect();
        let want = kernel.isometry_second_moment(h);
        reports.push(TestReport::info(c, &format!("isometry_order{k}_target"), want, None));
        reports.push(TestReport::new(c, &format!("isometry_order{k}_z"), moment_z(&sq, want), None, Threshold::AtMost(t.z_score)));
    }
    let mixed = TensorKernel::elementary(1.0, &[(f, 1), (e, 1)]);
    let draws = sampler.multiple_integrals(&[&mixed], samples)?.remove(0);
    let sq: Vec<f64> = draws.iter().map(|v| v * v).collect();
    reports.push(TestReport::new(
        c,
        "isometry_mixed_z",
        moment_z(&sq, mixed.isometry_second_moment(h)),
        None,
        Threshold::AtMost(t.z_score),
    ));

    let unit = g.scaled(1.0 / inner_h(&g, &g, h).sqrt());
    let square = TensorKernel::power(&unit, 2);
    let draws = FracFieldSampler::new(&[unit], h, derive_seed(seed, 2))?.multiple_integrals(&[&square], samples)?.remove(0);
    let sq: Vec<f64> = draws.iter().map(|v| v * v).collect();
    reports.push(TestReport::new(c, "unit_square_mean_z", moment_z(&draws, 0.0), None, Threshold::AtMost(t.z_score)));
    reports.push(TestReport::new(c, "unit_square_variance_z", moment_z(&sq, 2.0), None, Threshold::AtMost(t.z_score)));

    let opts = ThetaOptions {
        n_mc: c.theta_samples.min(THETA_SAMPLE_CAP),
        seed: derive_seed(c.seed, keys::THETA),
        ..Default::default()
    };
    let sum = chaos_second_moment(1.0, 0.0, 0.0, 0.0, c.beta, h, c.k_max, &opts)?;
    let mut table = Table::new("theta", &["k", "estimate", "se", "partial_sum"]);
    for (term, partial) in sum.terms.iter().zip(sum.partial_sums()) {
        table.push(vec![term.k as f64, term.estimate, term.se, partial]);
    }
    reports.push(TestReport::info(c, "chaos_second_moment", sum.total, Some(sum.se)));
    reports.push(TestReport::info(c, "chaos_tail_fraction", sum.tail_fraction, None));
    Ok(ExperimentOutcome { reports, tables: vec![table] })
}
