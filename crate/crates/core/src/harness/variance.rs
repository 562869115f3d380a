use super::config::{white_params, ExperimentConfig};
use super::replicas::{run_replicas, ReplicaPlan};
use super::report::{ExperimentOutcome, Table, TestReport, Threshold};
use crate::env::fill_xi;
use crate::env::{exact_gamma, spectral_density, CovarianceModel, EnvParams, XiDist};
use crate::error::{check_hurst, Error, Result};
use crate::quad::integrate;
use crate::rng::{keys, stream};
use crate::special::gamma;
use crate::stats::{ks_normal, linear_fit, pairwise_sum, KahanSum, Moments};
use crate::walk::{walk_p, walk_row};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// `Σ_{i=1}^n cos^{2i} η` written with `s = sin²η`.
fn cos_power_sum(n: usize, s: f64) -> f64 {
    if s == 0.0 {
        return n as f64;
    }
    let c = 1.0 - s;
    if c == 0.0 {
        return 0.0;
    }
    c * -(n as f64 * (-s).ln_1p()).exp_m1() / s
}

/// `A_n² = ∫_{−π}^{π} (cos²η − cos^{2n+2}η)/(1 − cos²η) g(η) dη`.
///
/// The integrand is a trigonometric polynomial of degree `2(M + n)`, so the
/// periodic trapezoid rule on `N > 2(M + n)` nodes is exact; the spectral
/// density on the nodes comes from one FFT of `ψ`.
pub fn a_n_squared(n: usize, params: &EnvParams) -> Result<f64> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    let m = params.support();
    let size = (2 * (m + n) + 2).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (k, &v) in params.psi_vector().iter().enumerate() {
        let j = k as i64 - m as i64;
        buf[j.rem_euclid(size as i64) as usize] = Complex::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let terms: Vec<f64> = buf
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let s = (2.0 * PI * j as f64 / size as f64).sin().powi(2);
            c.norm_sqr() * cos_power_sum(n, s)
        })
        .collect();
    Ok(pairwise_sum(&terms) / size as f64)
}

/// `A_n² = Σ_{i=1}^n Σ_d p(2i, d) γ(d)` summed on the lattice; `O(n²)`.
pub fn a_n_squared_lattice(n: usize, cov: &CovarianceModel) -> f64 {
    let mut acc = KahanSum::default();
    for i in 1..=n {
        let row = walk_row(2 * i as u64);
        for (j, p) in row.iter().enumerate() {
            acc.add(p * cov.gamma(2 * j as i64 - 2 * i as i64));
        }
    }
    acc.value()
}

/// `A_n²` by adaptive Gauss–Kronrod on the spectral form. Each density
/// evaluation costs `O(M)`; meant for moderate cutoffs.
pub fn a_n_squared_adaptive(n: usize, params: &EnvParams) -> Result<f64> {
    let f = |eta: f64| 2.0 * spectral_density(eta, params) * cos_power_sum(n, eta.sin().powi(2));
    match integrate(f, 0.0, PI, 1e-14, 1e-11, 4000) {
        Ok(r) => Ok(r.value),
        Err(_) => {
            // refined panels graded towards the peak at η = 0 and η = π
            let width = 1.0 / (n as f64).sqrt();
            let mut cuts = vec![0.0];
            let mut e = width / 8.0;
            while e < PI / 2.0 {
                cuts.push(e);
                e *= 2.0;
            }
            let mirrored: Vec<f64> = cuts.iter().rev().map(|c| PI - c).collect();
            cuts.push(PI / 2.0);
            cuts.extend(mirrored);
            let mut total = KahanSum::default();
            for w in cuts.windows(2) {
                total.add(integrate(f, w[0], w[1], 1e-15, 1e-11, 4000)?.value);
            }
            Ok(total.value())
        }
    }
}

/// `4β²Γ(1−H/2)/(DH)` with `D = 2Γ(2−2H)cos((1−H)π)`.
pub fn stated_sigma_sq(hurst: f64, beta: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let d = 2.0 * gamma(2.0 - 2.0 * hurst) * ((1.0 - hurst) * PI).cos();
    Ok(4.0 * beta * beta * gamma(1.0 - hurst / 2.0) / (d * hurst))
}

/// Leading constant of `β²A_n²/n^H` for a covariance with tail `λk^{2H−2}`:
/// `β²λ 2^{2H−2} Γ(H−½)/(√π H)`.
pub fn corrected_sigma_sq(hurst: f64, beta: f64, lambda: f64) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(beta * beta * lambda * 2f64.powf(2.0 * hurst - 2.0) * gamma(hurst - 0.5) / (PI.sqrt() * hurst))
}

pub(super) fn covariance_tail_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let h = c.hurst;
    let asym = |k: f64| h * (2.0 * h - 1.0) * k.powf(2.0 * h - 2.0);
    let mut reports = Vec::new();
    for &k in &c.n_grid {
        let ratio = exact_gamma(k as i64, &p) / asym(k as f64);
        reports.push(
            TestReport::new(c, "tail_ratio_rel_err", (ratio - 1.0).abs(), None, Threshold::AtMost(c.thresholds.tail_rel))
                .at_n(k),
        );
    }
    let lags: Vec<f64> = (0..=20).map(|j| 10f64.powf(2.0 + j as f64 / 10.0)).map(f64::round).collect();
    let gammas: Vec<f64> = lags.par_iter().map(|&k| exact_gamma(k as i64, &p)).collect();
    let mut table = Table::new("gamma", &["k", "gamma", "asymptote", "ratio"]);
    for (k, g) in lags.iter().zip(&gammas) {
        table.push(vec![*k, *g, asym(*k), g / asym(*k)]);
    }
    let lx: Vec<f64> = lags.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
    let (slope, _) = linear_fit(&lx, &ly);
    let target = 1.0 - 2.0 * p.alpha();
    reports.push(TestReport::info(c, "tail_slope", slope, None));
    reports.push(TestReport::new(
        c,
        "tail_slope_abs_err",
        (slope - target).abs(),
        None,
        Threshold::AtMost(c.thresholds.tail_slope),
    ));
    Ok(ExperimentOutcome { reports, tables: vec![table] })
}

pub(super) fn variance_asymptotics(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let h = c.hurst;
    let sigma = stated_sigma_sq(h, c.beta)?;
    let sigma_c = corrected_sigma_sq(h, c.beta, p.tail_constant())?;
    let mut table = Table::new("ratio", &["n", "a_n_sq", "ratio", "ratio_corrected"]);
    let mut reports = vec![
        TestReport::info(c, "sigma_sq", sigma, None),
        TestReport::info(c, "sigma_sq_corrected", sigma_c, None),
    ];
    let n_max = c.n_max();
    let mut grid = c.n_grid.clone();
    grid.sort_unstable();
    for &n in &grid {
        let a2 = c.beta * c.beta * a_n_squared(n, &p)?;
        let scale = (n as f64).powf(h);
        let ratio = a2 / (sigma * scale);
        let ratio_c = a2 / (sigma_c * scale);
        table.push(vec![n as f64, a2, ratio, ratio_c]);
        let threshold = if n == n_max {
            let (lo, hi) = c.thresholds.variance_ratio;
            Threshold::Between(lo, hi)
        } else {
            Threshold::Info
        };
        reports.push(TestReport::new(c, "a_n_sq_over_sigma_sq_n_h", ratio, None, threshold).at_n(n));
        reports.push(TestReport::info(c, "a_n_sq_over_corrected_constant", ratio_c, None).at_n(n));
    }
    let n0 = grid[0].min(512);
    let cov = CovarianceModel::build(&p, 2 * n0 + 2)?;
    let lattice = a_n_squared_lattice(n0, &cov);
    let quad = a_n_squared(n0, &p)?;
    reports.push(
        TestReport::new(
            c,
            "quadrature_vs_lattice_rel",
            (quad - lattice).abs() / lattice,
            None,
            Threshold::AtMost(c.thresholds.identity_rel),
        )
        .at_n(n0),
    );
    Ok(ExperimentOutcome { reports, tables: vec![table] })
}

pub(super) fn iid_variance_control(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = white_params(c)?;
    let g0 = exact_gamma(0, &p);
    let (lo, hi) = c.thresholds.iid_ratio;
    let mut reports = Vec::new();
    let mut table = Table::new("ratio", &["n", "a_n_sq", "reference", "ratio"]);
    for &n in &c.n_grid {
        let a2 = a_n_squared(n, &p)?;
        let reference = 2.0 * g0 * ((n + 1) as f64).sqrt() / PI.sqrt();
        table.push(vec![n as f64, a2, reference, a2 / reference]);
        reports.push(
            TestReport::new(c, "a_n_sq_over_iid_reference", a2 / reference, None, Threshold::Between(lo, hi)).at_n(n),
        );
        // closed form γ(0) Σ_{i≤n} p(2i, 0)
        let direct: KahanSum = (1..=n).map(|i| g0 * walk_p(2 * i as u64, 0)).collect();
        reports.push(
            TestReport::new(
                c,
                "quadrature_vs_return_probabilities_rel",
                (a2 - direct.value()).abs() / direct.value(),
                None,
                Threshold::AtMost(c.thresholds.identity_rel),
            )
            .at_n(n),
        );
    }
    Ok(ExperimentOutcome { reports, tables: vec![table] })
}

/// Row weights `b_i(y) = Σ_x p(i, x) ψ_{x−y}` with the walk truncated to
/// `|x| ≤ min(i, ⌈8√i⌉)`; row `i` covers `y ∈ [−W_i − M, W_i + M]`.
fn clt_weights(n: usize, p: &EnvParams) -> Vec<Vec<f64>> {
    let psi = p.psi_vector();
    let m = p.support();
    (1..=n)
        .into_par_iter()
        .map(|i| {
            let w = i.min((8.0 * (i as f64).sqrt()).ceil() as usize);
            let row = walk_row(i as u64);
            let mut b = vec![0.0; 2 * (w + m) + 1];
            for (j, &pw) in row.iter().enumerate() {
                let x = 2 * j as i64 - i as i64;
                if x.unsigned_abs() as usize > w || pw == 0.0 {
                    continue;
                }
                let base = (x + w as i64) as usize;
                for (k, &ps) in psi.iter().enumerate() {
                    b[base + k] += pw * ps;
                }
            }
            b
        })
        .collect()
}

pub(super) fn clt_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let n = c.n_max();
    let label = match c.xi {
        XiDist::StandardGaussian => "gaussian",
        XiDist::Rademacher => "rademacher",
    };
    let weights = clt_weights(n, &p);
    let var: KahanSum = weights.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).collect();
    let a2 = var.value();
    let scale = c.beta * (n as f64).powf(-c.hurst / 2.0);
    let plan = ReplicaPlan::new(c.replicas, c.seed);
    let set = run_replicas(&plan, |_, seed| {
        let mut rng = stream(seed, keys::REPLICA, 0);
        let mut xi = Vec::new();
        let mut acc = KahanSum::default();
        for b in &weights {
            xi.resize(b.len(), 0.0);
            fill_xi(&mut rng, p.xi, &mut xi);
            acc.add(b.iter().zip(&xi).map(|(u, v)| u * v).sum());
        }
        let x = scale * acc.value();
        Ok(vec![x, 2.0 * x])
    })?;
    let xs = set.column(0);
    let sd = scale * a2.sqrt();
    let ks = ks_normal(&xs, 0.0, sd);
    let m = Moments::of(&xs);
    let doubled = Moments::of(&set.column(1));
    let spectral = a_n_squared(n, &p)?;
    let t = &c.thresholds;
    let reports = vec![
        TestReport::new(c, &format!("{label}_ks_p"), ks.p_value, None, Threshold::AtLeast(t.ks_p)).at_n(n),
        TestReport::info(c, &format!("{label}_ks_d"), ks.statistic, None).at_n(n),
        TestReport::info(c, &format!("{label}_var_over_target"), m.var / (sd * sd), Some(m.se_var() / (sd * sd))).at_n(n),
        TestReport::new(
            c,
            &format!("{label}_double_beta_sd_ratio_err"),
            (doubled.sd() / m.sd() - 2.0).abs(),
            None,
            Threshold::AtMost(t.machine_rel),
        )
        .at_n(n),
        TestReport::new(
            c,
            &format!("{label}_truncated_vs_spectral_rel"),
            (a2 - spectral).abs() / spectral,
            None,
            Threshold::AtMost(t.identity_rel),
        )
        .at_n(n),
    ];
    Ok(ExperimentOutcome { reports, tables: Vec::new() })
}
