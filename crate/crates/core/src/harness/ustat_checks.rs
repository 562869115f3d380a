use super::config::ExperimentConfig;
use super::replicas::{run_replicas, ReplicaPlan};
use super::report::{ExperimentOutcome, TestReport, Threshold};
use crate::chaos::{inner_h, multiple_integral_sample, FracFieldSampler, RectFn, TensorKernel};
use crate::env::{CovarianceModel, GaussianWindow, ParityField};
use crate::error::Result;
use crate::rng::{derive_seed, keys};
use crate::stats::{correlation, ks_two_sample, mean_se_of, Moments};
use crate::ustat::{ustat_exact_covariance, ustat_exact_variance, ustat_scaled, UStatSpec};

fn unit_rect() -> RectFn {
    RectFn::indicator((0.0, 1.0), (0.0, 1.0)).expect("valid rectangle")
}

/// Sites `0..=⌈√n⌉+1` cover every cell meeting `x ∈ [0, 1]`.
fn window_hi(n: usize) -> i64 {
    (n as f64).sqrt().ceil() as i64 + 1
}

/// Scaled U-statistics of `specs` on independent Gaussian windows.
fn sample_ustats(c: &ExperimentConfig, specs: &[UStatSpec], salt: u64) -> Result<Vec<Vec<f64>>> {
    let p = c.env_params()?;
    let n = c.n_max();
    let hi = window_hi(n);
    let window = GaussianWindow::new(&p, 2, ParityField::sites_in(0, hi))?;
    let mut plan = ReplicaPlan::new(c.replicas, derive_seed(c.seed, salt));
    plan.tag = format!("{}-{salt}", c.check.name());
    let set = run_replicas(&plan, |_, seed| {
        let field = ParityField::sample_window(&window, &p, n, 0, hi, seed)?;
        specs.iter().map(|s| ustat_scaled(&field, s)).collect()
    })?;
    Ok((0..specs.len()).map(|j| set.column(j)).collect())
}

/// Raw moments `E X^j`, `j = 1..=4`, of two samples compared in standard errors.
fn moment_rows(c: &ExperimentConfig, label: &str, a: &[f64], b: &[f64], n: usize) -> Vec<TestReport> {
    (1..=4)
        .map(|j| {
            let (ma, sa) = mean_se_of(a, |x| x.powi(j));
            let (mb, sb) = mean_se_of(b, |x| x.powi(j));
            let z = (ma - mb).abs() / (sa * sa + sb * sb).sqrt();
            TestReport::new(c, &format!("{label}_moment{j}_z"), z, None, Threshold::AtMost(c.thresholds.z_score)).at_n(n)
        })
        .collect()
}

pub(super) fn ustat_limit_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let n = c.n_max();
    let h = c.hurst;
    let g = unit_rect();
    let kernel = TensorKernel::power(&g, 1);
    let spec = UStatSpec::tensor(n, kernel.clone())?;
    let cov = CovarianceModel::build(&p, 2 * window_hi(n) as usize + 4)?;
    let exact = ustat_exact_variance(&spec, &cov)? * (n as f64).powf(-(h + 1.0));
    let target = inner_h(&g, &g, h);
    let mut reports = vec![
        TestReport::info(c, "exact_scaled_variance", exact, None).at_n(n),
        TestReport::new(
            c,
            "exact_scaled_variance_rel_err",
            (exact / target - 1.0).abs(),
            None,
            Threshold::AtMost(c.thresholds.ustat_variance_rel),
        )
        .at_n(n),
    ];
    let s1 = sample_ustats(c, &[spec], 1)?.remove(0);
    let sampler = FracFieldSampler::new(&[g], h, derive_seed(c.seed, keys::FIELD))?;
    let i1 = multiple_integral_sample(&kernel, &sampler, c.replicas)?;
    let ks = ks_two_sample(&s1, &i1);
    reports.push(TestReport::new(c, "two_sample_ks_p", ks.p_value, None, Threshold::AtLeast(c.thresholds.ks_p)).at_n(n));
    let m = Moments::of(&s1);
    reports.push(TestReport::info(c, "sample_variance", m.var, Some(m.se_var())).at_n(n));
    reports.extend(moment_rows(c, "first_order", &s1, &i1, n));
    Ok(ExperimentOutcome { reports, tables: Vec::new() })
}

pub(super) fn ustat_joint_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let n = c.n_max();
    let h = c.hurst;
    let t = &c.thresholds;
    let g = unit_rect();
    let unit = g.scaled(1.0 / inner_h(&g, &g, h).sqrt());
    let second = TensorKernel::power(&unit, 2);
    let left = RectFn::indicator((0.0, 1.0), (0.0, 0.5))?;
    let right = RectFn::indicator((0.0, 1.0), (0.5, 1.0))?;
    let specs = [
        UStatSpec::tensor(n, second.clone())?,
        UStatSpec::tensor(n, TensorKernel::power(&left, 1))?,
        UStatSpec::tensor(n, TensorKernel::power(&right, 1))?,
    ];
    let s = sample_ustats(c, &specs, 2)?;
    let mut reports = Vec::new();

    let m = Moments::of(&s[0]);
    reports.push(TestReport::new(c, "second_order_mean_z", m.mean.abs() / m.se_mean(), None, Threshold::AtMost(t.z_score)).at_n(n));
    reports.push(TestReport::info(c, "second_order_variance", m.var, Some(m.se_var())).at_n(n));
    let cov = CovarianceModel::build(&p, 2 * window_hi(n) as usize + 4)?;
    let exact2 = ustat_exact_variance(&specs[0], &cov)? * (n as f64).powf(-2.0 * (h + 1.0));
    reports.push(TestReport::info(c, "second_order_exact_scaled_variance", exact2, None).at_n(n));
    reports.push(TestReport::info(c, "second_order_variance_over_limit", m.var / 2.0, None).at_n(n));
    reports.push(
        TestReport::new(c, "second_order_variance_z", (m.var - exact2).abs() / m.se_var(), None, Threshold::AtMost(t.z_score))
            .at_n(n),
    );
    // shape only: the limit law rescaled to the exact finite-n variance
    let sampler = FracFieldSampler::new(&[unit], h, derive_seed(c.seed, keys::FIELD ^ 2))?;
    let scale = (exact2 / 2.0).sqrt();
    let i2: Vec<f64> = multiple_integral_sample(&second, &sampler, c.replicas)?.into_iter().map(|v| scale * v).collect();
    let ks = ks_two_sample(&s[0], &i2);
    reports.push(TestReport::new(c, "second_order_shape_ks_p", ks.p_value, None, Threshold::AtLeast(t.ks_p)).at_n(n));

    let gram = inner_h(&left, &right, h) / (inner_h(&left, &left, h) * inner_h(&right, &right, h)).sqrt();
    let (r, se) = correlation(&s[1], &s[2]);
    reports.push(TestReport::info(c, "pair_correlation", r, Some(se)).at_n(n));
    reports.push(TestReport::info(c, "pair_gram_correlation", gram, None).at_n(n));
    let c12 = ustat_exact_covariance(&specs[1], &specs[2], &cov)?;
    let v1 = ustat_exact_variance(&specs[1], &cov)?;
    let v2 = ustat_exact_variance(&specs[2], &cov)?;
    let exact_r = c12 / (v1 * v2).sqrt();
    reports.push(TestReport::info(c, "pair_exact_correlation", exact_r, None).at_n(n));
    reports.push(TestReport::new(c, "pair_correlation_z", (r - exact_r).abs() / se, None, Threshold::AtMost(t.z_score)).at_n(n));
    Ok(ExperimentOutcome { reports, tables: Vec::new() })
}
