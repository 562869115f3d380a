use super::config::ExperimentConfig;
use super::replicas::{run_replicas, ReplicaPlan};
use super::report::{ExperimentOutcome, Table, TestReport, Threshold};
use crate::chaos::{chaos_second_moment, ThetaOptions};
use crate::env::{
    sample_environment, CovarianceModel, EnvParams, Environment, GaussianWindow, ParityField, XiDist,
};
use crate::error::Result;
use crate::partition::{
    chaos_terms, dp_partition, point_to_line_value, two_walk_second_moment, Endpoint, Normalization, PairWeight,
    PartitionParams, Storage, TwoWalkTarget, Variant,
};
use crate::rng::{derive_seed, keys};
use crate::special::heat_kernel;
use crate::stats::Moments;
use crate::ustat::{ustat_direct, ustat_eval, UStatSpec};
use crate::walk::walk_p;

/// Environments on `|x| ≤ half_width`: the exact window sampler for Gaussian
/// innovations, the dense linear process otherwise.
pub(super) enum ConeSampler {
    Window(GaussianWindow),
    Dense,
}

impl ConeSampler {
    pub(super) fn new(p: &EnvParams, half_width: usize) -> Result<Self> {
        Ok(match p.xi {
            XiDist::StandardGaussian => {
                ConeSampler::Window(GaussianWindow::new(p, 2, ParityField::sites_per_row(half_width))?)
            }
            XiDist::Rademacher => ConeSampler::Dense,
        })
    }

    pub(super) fn sample(&self, p: &EnvParams, n: usize, half_width: usize, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            ConeSampler::Window(w) => Box::new(ParityField::sample(w, p, n, half_width, seed)?),
            ConeSampler::Dense => {
                let hw = half_width as i64;
                Box::new(sample_environment(p, n, -hw, hw, seed)?)
            }
        })
    }
}

/// `min(n, 8√n)` rounded up to the parity of `n`; the walk leaves this
/// window with probability below `e^{−32}`.
pub(super) fn truncation_width(n: usize) -> usize {
    let w = (8.0 * (n as f64).sqrt()).ceil() as usize;
    w.min(n)
}

/// Brute-force enumeration grows like `n^{3k/2}`; keep it to small `n`.
const DIRECT_MAX_N: usize = 8;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub(super) fn expansion_identity_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let n_max = c.n_max();
    let h = c.hurst;
    let beta = c.beta;
    let mut plan = ReplicaPlan::new(c.replicas, c.seed);
    plan.tag = c.check.name().into();
    let set = run_replicas(&plan, |_, seed| {
        let hw = n_max as i64;
        let env = sample_environment(&p, n_max, -hw, hw, seed)?;
        let (mut expansion, mut bookkeeping, mut direct) = (0.0f64, 0.0f64, 0.0f64);
        for n in 1..=n_max {
            let params = PartitionParams::new(beta, n, h, Variant::Modified)?;
            let z = point_to_line_value(&env, &params)?;
            let terms = chaos_terms(&env, n, beta, n)?;
            expansion = expansion.max(rel(terms.iter().sum::<f64>(), z));
            let b = params.scaled_beta();
            for k in 1..=n.min(3) {
                let spec = UStatSpec::walk(n, k)?;
                let factor = 2f64.powf(k as f64 / 2.0) * b.powi(k as i32) * (n as f64).powf(-(k as f64) / 2.0);
                bookkeeping = bookkeeping.max(rel(factor * ustat_eval(&env, &spec)?, terms[k]));
                if n <= DIRECT_MAX_N {
                    direct = direct.max(rel(factor * ustat_direct(&env, &spec)?, terms[k]));
                }
            }
        }
        Ok(vec![expansion, bookkeeping, direct])
    })?;
    let worst = |j: usize| set.column(j).into_iter().fold(0.0, f64::max);
    let tol = Threshold::AtMost(c.thresholds.identity_rel);
    let reports = vec![
        TestReport::new(c, "partition_vs_chaos_sum_max_rel", worst(0), None, tol).at_n(n_max),
        TestReport::new(c, "chaos_term_vs_ustat_max_rel", worst(1), None, tol).at_n(n_max),
        TestReport::new(c, "chaos_term_vs_direct_sum_max_rel", worst(2), None, tol).at_n(n_max),
        TestReport::info(c, "environments", set.effective() as f64, None),
    ];
    Ok(ExperimentOutcome { reports, tables: Vec::new() })
}

pub(super) fn second_moment_oracle_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let n = c.n_max();
    let params = PartitionParams::new(c.beta, n, c.hurst, Variant::Modified)?;
    let sampler = ConeSampler::new(&p, n)?;
    let mut plan = ReplicaPlan::new(c.replicas, c.seed);
    plan.tag = format!("{}-{n}", c.check.name());
    let set = run_replicas(&plan, |_, seed| {
        let env = sampler.sample(&p, n, n, seed)?;
        Ok(vec![point_to_line_value(env.as_ref(), &params)?])
    })?;
    let cov = CovarianceModel::build(&p, 2 * n + 2)?;
    let m2 = two_walk_second_moment(n, c.beta, &cov, TwoWalkTarget::PointToLine, PairWeight::Modified)?;
    let m = set.moments(0);
    let z = c.thresholds.z_score;
    let reports = vec![
        TestReport::info(c, "oracle_variance", m2 - 1.0, None).at_n(n),
        TestReport::info(c, "mc_variance", m.var, Some(m.se_var())).at_n(n),
        TestReport::new(c, "variance_z", (m.var - (m2 - 1.0)).abs() / m.se_var(), None, Threshold::AtMost(z)).at_n(n),
        TestReport::new(c, "mean_z", (m.mean - 1.0).abs() / m.se_mean(), None, Threshold::AtMost(z)).at_n(n),
    ];
    Ok(ExperimentOutcome { reports, tables: Vec::new() })
}

pub(super) fn partition_limit_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = c.env_params()?;
    let h = c.hurst;
    let beta = c.beta;
    let t = &c.thresholds;
    let mut reports = Vec::new();

    // local limit theorem at β = 0
    let nl = 1usize << 14;
    let local = (nl as f64).sqrt() * walk_p(nl as u64, 0) / 2.0;
    reports.push(
        TestReport::new(c, "local_clt_rel_err", rel(local, heat_kernel(1.0, 0.0)), None, Threshold::AtMost(t.local_clt_rel))
            .at_n(nl)
            .with_beta(0.0),
    );

    let opts = ThetaOptions { n_mc: c.theta_samples, seed: derive_seed(c.seed, keys::THETA), ..Default::default() };
    let she = chaos_second_moment(1.0, 0.0, 0.0, 0.0, std::f64::consts::SQRT_2 * beta, h, c.k_max, &opts)?;
    let she_plain = chaos_second_moment(1.0, 0.0, 0.0, 0.0, beta, h, c.k_max, &opts)?;
    reports.push(TestReport::info(c, "chaos_sum_sqrt2_beta", she.total, Some(she.se)));
    reports.push(TestReport::info(c, "chaos_sum_beta", she_plain.total, Some(she_plain.se)));
    reports.push(TestReport::new(c, "chaos_tail_fraction", she.tail_fraction, None, Threshold::AtMost(t.chaos_tail)));

    let mut grid = c.n_grid.clone();
    grid.sort_unstable();
    let n_max = *grid.last().expect("validated non-empty");
    let cov = CovarianceModel::build(&p, 2 * n_max + 2)?;
    let mut table = Table::new("second_moment", &["n", "discrete", "discrete_exponential", "rel_sqrt2_beta", "rel_beta"]);
    let mut rels = Vec::new();
    let mut discrete = Vec::new();
    for &n in &grid {
        let target = TwoWalkTarget::PointToPoint { x: 0 };
        let d = n as f64 * two_walk_second_moment(n, beta, &cov, target, PairWeight::Modified)? / 4.0;
        let de = n as f64 * two_walk_second_moment(n, beta, &cov, target, PairWeight::Exponential)? / 4.0;
        let r = rel(d, she.total);
        table.push(vec![n as f64, d, de, r, rel(d, she_plain.total)]);
        reports.push(TestReport::info(c, "scaled_second_moment", d, None).at_n(n));
        reports.push(TestReport::info(c, "rel_err_vs_sqrt2_beta", r, None).at_n(n));
        reports.push(TestReport::info(c, "rel_err_vs_beta", rel(d, she_plain.total), None).at_n(n));
        reports.push(TestReport::info(c, "exponential_rel_err_vs_sqrt2_beta", rel(de, she.total), None).at_n(n));
        rels.push(r);
        discrete.push(d);
    }
    let improving = rels.len() >= 2 && rels.windows(2).all(|w| w[1] < w[0]);
    let close = *rels.last().expect("non-empty") <= t.chaos_rel;
    reports.push(TestReport::info(c, "trend_improving", f64::from(u8::from(improving)), None));
    reports.push(TestReport::new(
        c,
        "second_moment_agreement",
        f64::from(u8::from(close || improving)),
        None,
        Threshold::AtLeast(1.0),
    ));

    // Monte Carlo against the exact discrete moments at the largest n
    let hw = truncation_width(n_max);
    let sampler = ConeSampler::new(&p, hw)?;
    let params = PartitionParams::new(beta, n_max, h, Variant::Modified)?
        .with_endpoint(Endpoint::PointToPoint)
        .with_storage(Storage::Final)
        .with_half_width(hw);
    let mut plan = ReplicaPlan::new(c.replicas, derive_seed(c.seed, 9));
    plan.tag = format!("{}-{n_max}", c.check.name());
    let set = run_replicas(&plan, |_, seed| {
        let env = sampler.sample(&p, n_max, hw, seed)?;
        let z = dp_partition(env.as_ref(), &params)?.value(n_max, 0);
        let s = (n_max as f64).sqrt() / 2.0 * z;
        Ok(vec![s, s * s])
    })?;
    let first = Moments::of(&set.column(0));
    let second = Moments::of(&set.column(1));
    let mean_exact = (n_max as f64).sqrt() / 2.0 * walk_p(n_max as u64, 0);
    let d_max = *discrete.last().expect("non-empty");
    reports.push(
        TestReport::new(c, "mc_first_moment_z", (first.mean - mean_exact).abs() / first.se_mean(), None, Threshold::AtMost(t.z_score))
            .at_n(n_max),
    );
    reports.push(TestReport::info(c, "mc_first_moment_vs_heat_kernel", first.mean / heat_kernel(1.0, 0.0), None).at_n(n_max));
    reports.push(
        TestReport::new(c, "mc_second_moment_z", (second.mean - d_max).abs() / second.se_mean(), None, Threshold::AtMost(t.z_score))
            .at_n(n_max),
    );

    // pathwise: normalized exponential weights equal modified weights on the tilted field
    if p.xi == XiDist::StandardGaussian {
        let n = 64;
        let plan = ReplicaPlan::new(20, derive_seed(c.seed, 10));
        let exp = PartitionParams::new(beta, n, h, Variant::Exponential)?
            .with_normalization(Normalization::LogLaplace)
            .with_storage(Storage::Final);
        let tilted = PartitionParams::new(beta, n, h, Variant::Tilted)?.with_storage(Storage::Final);
        let set = run_replicas(&plan, |_, seed| {
            let env = sample_environment(&p, n, -(n as i64), n as i64, seed)?;
            let a = dp_partition(&env, &exp)?.partition_function();
            let b = dp_partition(&env, &tilted)?.partition_function();
            Ok(vec![rel(a, b)])
        })?;
        let worst = set.column(0).into_iter().fold(0.0, f64::max);
        reports.push(
            TestReport::new(c, "exponential_vs_tilted_max_rel", worst, None, Threshold::AtMost(t.machine_rel)).at_n(n),
        );
    }

    let mut theta = Table::new("chaos_terms", &["k", "theta_sqrt2_beta", "se", "theta_beta", "se_beta"]);
    for (a, b) in she.terms.iter().zip(&she_plain.terms) {
        theta.push(vec![a.k as f64, a.estimate, a.se, b.estimate, b.se]);
    }
    Ok(ExperimentOutcome { reports, tables: vec![table, theta] })
}
