use super::config::ExperimentConfig;
use super::polymer::{truncation_width, ConeSampler};
use super::replicas::{run_replicas, ReplicaPlan};
use super::report::{ExperimentOutcome, Table, TestReport, Threshold};
use crate::error::Result;
use crate::partition::{dp_partition, Endpoint, PartitionParams, Storage, Variant};
use crate::rng::derive_seed;
use crate::stats::{linear_fit, Moments};
use crate::walk::walk_p;

const TIME_LAGS: std::ops::RangeInclusive<i32> = 1..=6;
const SPACE_LAGS: std::ops::RangeInclusive<i32> = 1..=4;
const BOUND_TIMES: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

fn lag(j: i32) -> f64 {
    2f64.powi(-j)
}

/// Per replica: time increments, then space increments, then `|z(t, 0)|^{2q}`
/// at the bound times.
fn increments(c: &ExperimentConfig, n: usize) -> Result<Vec<Moments>> {
    let p = c.env_params()?;
    let hw = truncation_width(n);
    let sampler = ConeSampler::new(&p, hw)?;
    let params = PartitionParams::new(c.beta, n, c.hurst, Variant::Modified)?
        .with_endpoint(Endpoint::PointToPoint)
        .with_storage(Storage::Full)
        .with_half_width(hw);
    let power = 2 * c.q as i32;
    let mut plan = ReplicaPlan::new(c.replicas, derive_seed(c.seed, n as u64));
    plan.tag = format!("{}-{n}", c.check.name());
    let set = run_replicas(&plan, |_, seed| {
        let env = sampler.sample(&p, n, hw, seed)?;
        let s = dp_partition(env.as_ref(), &params)?;
        let u = s.density_scaled(1.0, 0.0);
        let mut row = Vec::new();
        row.extend(TIME_LAGS.map(|j| (u - s.density_scaled(1.0 - lag(j), 0.0)).powi(power)));
        row.extend(SPACE_LAGS.map(|k| (u - s.density_scaled(1.0, lag(k))).powi(power)));
        row.extend(BOUND_TIMES.iter().map(|&t| s.density_scaled(t, 0.0).powi(power)));
        Ok(row)
    })?;
    let width = TIME_LAGS.count() + SPACE_LAGS.count() + BOUND_TIMES.len();
    Ok((0..width).map(|j| set.moments(j)).collect())
}

fn log_slope(lags: &[f64], moments: &[f64]) -> f64 {
    let x: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    linear_fit(&x, &y).0
}

pub(super) fn tightness_check(c: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let h = c.hurst;
    let q = c.q as f64;
    let iota = c.iota();
    let t = &c.thresholds;
    let mut grid = c.n_grid.clone();
    grid.sort_unstable();
    let n_max = *grid.last().expect("validated non-empty");
    let nt = TIME_LAGS.count();
    let ns = SPACE_LAGS.count();
    let time_lags: Vec<f64> = TIME_LAGS.map(lag).collect();
    let space_lags: Vec<f64> = SPACE_LAGS.map(lag).collect();

    let mut reports = Vec::new();
    let mut table = Table::new("increments", &["n", "kind", "lag", "moment", "se"]);
    let mut bounds = Vec::new();
    let mut top = Vec::new();
    for &n in &grid {
        let m = increments(c, n)?;
        for (j, &l) in time_lags.iter().enumerate() {
            table.push(vec![n as f64, 0.0, l, m[j].mean, m[j].se_mean()]);
        }
        for (k, &l) in space_lags.iter().enumerate() {
            table.push(vec![n as f64, 1.0, l, m[nt + k].mean, m[nt + k].se_mean()]);
        }
        for (b, &tb) in BOUND_TIMES.iter().enumerate() {
            let v = &m[nt + ns + b];
            table.push(vec![n as f64, 2.0, tb, v.mean, v.se_mean()]);
        }
        let bound = m[nt + ns..].iter().map(|v| v.mean).fold(0.0, f64::max);
        reports.push(TestReport::info(c, "max_moment", bound, None).at_n(n));
        bounds.push(bound);
        if n == n_max {
            top = m;
        }
    }
    let means: Vec<f64> = top.iter().map(|m| m.mean).collect();
    let time_slope = log_slope(&time_lags, &means[..nt]);
    let space_slope = log_slope(&space_lags, &means[nt..nt + ns]);
    reports.push(
        TestReport::new(c, "time_increment_slope", time_slope, None, Threshold::AtLeast(h * q - t.slope_margin)).at_n(n_max),
    );
    reports.push(
        TestReport::new(c, "space_increment_slope", space_slope, None, Threshold::AtLeast(iota * q - t.slope_margin))
            .at_n(n_max),
    );
    let lo = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = bounds.iter().copied().fold(0.0, f64::max);
    reports.push(TestReport::new(c, "uniform_bound_ratio", hi / lo, None, Threshold::AtMost(t.uniform_bound_ratio)));

    // β = 0: the surface is the walk kernel itself
    let scale = (n_max as f64).sqrt() / 2.0;
    let free = |s: f64| scale * walk_p((s * n_max as f64).round() as u64, 0);
    let free_moments: Vec<f64> = time_lags.iter().map(|&l| (free(1.0) - free(1.0 - l)).abs().powf(2.0 * q)).collect();
    reports.push(
        TestReport::info(c, "free_time_increment_slope", log_slope(&time_lags, &free_moments), None)
            .at_n(n_max)
            .with_beta(0.0),
    );
    Ok(ExperimentOutcome { reports, tables: vec![table] })
}
