use crate::error::{check_hurst, Error, Result};
use crate::rng::{keys, stream};
use crate::special::{abs_power_moment, beta as beta_fn, gamma, heat_kernel};
use crate::stats::Moments;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Monte Carlo estimate of one chaos second moment `Θ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosMoment {
    pub k: usize,
    pub estimate: f64,
    pub se: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaEstimator {
    /// Uniform times on the simplex, two independent heat-kernel chains from
    /// `y`, weight `Π K(x_i, y_i) · P(x − x_k) P(x − y_k)`.
    ForwardChains,
    /// Uniform times, the difference of the two chains as a Brownian bridge
    /// `0 → 0` of diffusivity 2, the last kernel factor integrated exactly.
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOptions {
    pub n_mc: usize,
    pub seed: u64,
    pub estimator: ThetaEstimator,
    /// Allow `k > 6`.
    pub force: bool,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions { n_mc: 200_000, seed: 0, estimator: ThetaEstimator::Bridge, force: false }
    }
}

/// `Θ_0 = P_{t−s}(x−y)²`.
pub fn theta_0(t: f64, x: f64, s: f64, y: f64) -> f64 {
    heat_kernel(t - s, x - y).powi(2)
}

/// `Θ_1 = Θ_0 β² H(2H−1) 2^{2H−2} Γ(H−½)/√π · B(H, H) (t−s)^H`.
pub fn theta_1_exact(t: f64, x: f64, s: f64, y: f64, beta: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    check_times(t, s)?;
    let h = hurst;
    let c = h * (2.0 * h - 1.0) * 2f64.powf(2.0 * h - 2.0) * gamma(h - 0.5) / std::f64::consts::PI.sqrt();
    Ok(theta_0(t, x, s, y) * beta * beta * c * beta_fn(h, h) * (t - s).powf(h))
}

fn check_times(t: f64, s: f64) -> Result<()> {
    if !(t > s) {
        return Err(Error::Domain(format!("need t > s, got t={t}, s={s}")));
    }
    Ok(())
}

const BATCH: usize = 8192;

fn sorted_uniform_times(rng: &mut ChaCha8Rng, k: usize, span: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..k).map(|_| span * rng.random::<f64>()));
    out.sort_by(f64::total_cmp);
}

struct Problem {
    k: usize,
    t: f64,
    x: f64,
    s: f64,
    y: f64,
    hurst: f64,
    /// `β^{2k} (t−s)^k / k!`
    prefactor: f64,
}

impl Problem {
    fn kernel(&self, d: f64) -> f64 {
        self.hurst * (2.0 * self.hurst - 1.0) * d.abs().powf(2.0 * self.hurst - 2.0)
    }

    fn forward_chains(&self, rng: &mut ChaCha8Rng, times: &mut Vec<f64>) -> f64 {
        sorted_uniform_times(rng, self.k, self.t - self.s, times);
        let (mut a, mut b, mut prev) = (self.y, self.y, 0.0);
        let mut w = 1.0;
        for &u in times.iter() {
            let sd = (u - prev).sqrt();
            a += sd * rng.sample::<f64, _>(StandardNormal);
            b += sd * rng.sample::<f64, _>(StandardNormal);
            if a == b {
                return 0.0;
            }
            w *= self.kernel(a - b);
            prev = u;
        }
        let rest = self.t - self.s - prev;
        w * heat_kernel(rest, self.x - a) * heat_kernel(rest, self.x - b) * self.prefactor
    }

    fn bridge(&self, rng: &mut ChaCha8Rng, times: &mut Vec<f64>) -> f64 {
        let span = self.t - self.s;
        sorted_uniform_times(rng, self.k, span, times);
        let (mut d, mut prev) = (0.0, 0.0);
        let mut w = 1.0;
        let p = 2.0 * self.hurst - 2.0;
        let hc = self.hurst * (2.0 * self.hurst - 1.0);
        for (i, &u) in times.iter().enumerate() {
            let mean = d * (span - u) / (span - prev);
            let var = 2.0 * (u - prev) * (span - u) / (span - prev);
            if !(var > 0.0) {
                return 0.0;
            }
            if i + 1 == self.k {
                w *= hc * abs_power_moment(mean, var, p);
            } else {
                d = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                w *= self.kernel(d);
            }
            prev = u;
        }
        w * theta_0(self.t, self.x, self.s, self.y) * self.prefactor
    }
}

/// Monte Carlo estimate of `Θ_k(t, x; s, y)`.
#[allow(clippy::too_many_arguments)]
pub fn theta_k(k: usize, t: f64, x: f64, s: f64, y: f64, beta: f64, hurst: f64, opts: &ThetaOptions) -> Result<ChaosMoment> {
    check_hurst(hurst)?;
    check_times(t, s)?;
    if k == 0 {
        return Ok(ChaosMoment { k, estimate: theta_0(t, x, s, y), se: 0.0, samples: 0 });
    }
    if k > 6 && !opts.force {
        return Err(Error::Argument(format!("theta_k refuses k={k} > 6 (variance blow-up); set force to override")));
    }
    if opts.n_mc < 2 {
        return Err(Error::Argument("theta_k needs at least 2 samples".into()));
    }
    let fact: f64 = (1..=k).map(|j| j as f64).product();
    let problem = Problem { k, t, x, s, y, hurst, prefactor: beta.powi(2 * k as i32) * (t - s).powi(k as i32) / fact };
    let batches = opts.n_mc.div_ceil(BATCH);
    let values: Vec<f64> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let count = BATCH.min(opts.n_mc - b * BATCH);
            let mut rng = stream(opts.seed, keys::THETA, ((k as u64) << 32) | b as u64);
            let mut times = Vec::with_capacity(k);
            let problem = &problem;
            (0..count)
                .map(move |_| match opts.estimator {
                    ThetaEstimator::ForwardChains => problem.forward_chains(&mut rng, &mut times),
                    ThetaEstimator::Bridge => problem.bridge(&mut rng, &mut times),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let m = Moments::of(&values);
    Ok(ChaosMoment { k, estimate: m.mean, se: m.se_mean(), samples: values.len() })
}

/// `Σ_{k ≤ k_max} Θ_k` with its pieces.
#[derive(Debug, Clone, Serialize)]
pub struct ChaosSum {
    pub terms: Vec<ChaosMoment>,
    pub total: f64,
    pub se: f64,
    /// Geometric extrapolation `Θ_K r/(1−r)`, `r = Θ_K/Θ_{K−1}`.
    pub tail_estimate: f64,
    pub tail_fraction: f64,
    /// False if some `Θ_k` is negative by more than 2 SE.
    pub mc_consistent: bool,
}

impl ChaosSum {
    pub fn partial_sums(&self) -> Vec<f64> {
        self.terms
            .iter()
            .scan(0.0, |acc, t| {
                *acc += t.estimate;
                Some(*acc)
            })
            .collect()
    }
}

/// `E u(t, x; s, y)² ≈ Σ_{k ≤ k_max} Θ_k`; `Θ_0` and `Θ_1` are exact, higher
/// terms are Monte Carlo estimates.
#[allow(clippy::too_many_arguments)]
pub fn chaos_second_moment(
    t: f64,
    x: f64,
    s: f64,
    y: f64,
    beta: f64,
    hurst: f64,
    k_max: usize,
    opts: &ThetaOptions,
) -> Result<ChaosSum> {
    check_hurst(hurst)?;
    check_times(t, s)?;
    if k_max > 6 && !opts.force {
        return Err(Error::Argument(format!("k_max={k_max} exceeds 6")));
    }
    let mut terms = vec![ChaosMoment { k: 0, estimate: theta_0(t, x, s, y), se: 0.0, samples: 0 }];
    if k_max >= 1 {
        let e = theta_1_exact(t, x, s, y, beta, hurst)?;
        terms.push(ChaosMoment { k: 1, estimate: e, se: 0.0, samples: 0 });
    }
    for k in 2..=k_max {
        terms.push(theta_k(k, t, x, s, y, beta, hurst, opts)?);
    }
    let total: f64 = terms.iter().map(|m| m.estimate).sum();
    let se = terms.iter().map(|m| m.se * m.se).sum::<f64>().sqrt();
    let tail_estimate = match terms.len() {
        0 | 1 => f64::INFINITY,
        n => {
            let (a, b) = (terms[n - 2].estimate, terms[n - 1].estimate);
            if b == 0.0 {
                0.0
            } else {
                let r = b / a;
                if (0.0..1.0).contains(&r) {
                    b * r / (1.0 - r)
                } else {
                    f64::INFINITY
                }
            }
        }
    };
    let mc_consistent = terms.iter().all(|m| m.estimate >= -2.0 * m.se);
    Ok(ChaosSum { total, se, tail_fraction: tail_estimate / total, tail_estimate, terms, mc_consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use crate::special::normal_pdf;

    fn opts(n: usize, estimator: ThetaEstimator, seed: u64) -> ThetaOptions {
        ThetaOptions { n_mc: n, seed, estimator, force: false }
    }

    #[test]
    fn zeroth_term_convention() {
        let m = theta_k(0, 1.0, 0.3, 0.2, -0.1, 0.9, 0.75, &ThetaOptions::default()).unwrap();
        assert_eq!(m.estimate, heat_kernel(0.8, 0.4).powi(2));
        let p = 0.8;
        assert!((theta_0(1.0, 0.3, 0.2, -0.1) - heat_kernel(p / 2.0, 0.4) * heat_kernel(2.0 * p, 0.0)).abs() < 1e-15);
        let s = chaos_second_moment(1.0, 0.0, 0.0, 0.0, 0.0, 0.75, 4, &opts(1000, ThetaEstimator::Bridge, 1)).unwrap();
        assert_eq!(s.total, theta_0(1.0, 0.0, 0.0, 0.0));
        assert_eq!(s.tail_estimate, 0.0);
    }

    #[test]
    fn first_term_closed_form_matches_quadrature() {
        for h in [0.6, 0.75, 0.9] {
            let (t, s) = (1.3, 0.2);
            let span = t - s;
            // ∫_0^T E K(d_u) du with d_u ~ N(0, 2u(T−u)/T); the substitutions
            // z = w^{1/(2H−1)} and u = v^{1/H} remove the endpoint singularities
            let p = 2.0 * h - 2.0;
            let expected_k = |u: f64| {
                let sd = (2.0 * u * (span - u) / span).sqrt();
                let f = |w: f64| 2.0 * h * (2.0 * h - 1.0) * sd.powf(p) * normal_pdf(w.powf(1.0 / (p + 1.0))) / (p + 1.0);
                integrate(f, 0.0, 12f64.powf(p + 1.0), 1e-13, 1e-12, 4000).unwrap().value
            };
            let half = |v: f64| expected_k(v.powf(1.0 / h)) * v.powf(1.0 / h - 1.0) / h;
            let q = 2.0 * integrate(half, 0.0, (span / 2.0).powf(h), 1e-12, 1e-11, 4000).unwrap().value;
            let want = theta_0(t, 0.4, s, 0.1) * 0.49 * q;
            let got = theta_1_exact(t, 0.4, s, 0.1, 0.7, h).unwrap();
            assert!((got - want).abs() < 1e-6 * want, "H={h}: {got} vs {want}");
        }
        let r = theta_1_exact(1.0, 0.0, 0.0, 0.0, 1.0, 0.75).unwrap() / theta_0(1.0, 0.0, 0.0, 0.0);
        assert!((r - 0.919_062_526_848_883_2).abs() < 1e-12);
    }

    #[test]
    fn estimators_reproduce_first_term() {
        let exact = theta_1_exact(1.0, 0.2, 0.0, 0.0, 0.8, 0.9).unwrap();
        for est in [ThetaEstimator::ForwardChains, ThetaEstimator::Bridge] {
            let m = theta_k(1, 1.0, 0.2, 0.0, 0.0, 0.8, 0.9, &opts(200_000, est, 3)).unwrap();
            assert!((m.estimate - exact).abs() < 3.0 * m.se, "{est:?}: {m:?} vs {exact}");
        }
        let exact = theta_1_exact(1.0, 0.0, 0.0, 0.0, 1.0, 0.75).unwrap();
        let m = theta_k(1, 1.0, 0.0, 0.0, 0.0, 1.0, 0.75, &opts(200_000, ThetaEstimator::Bridge, 4)).unwrap();
        assert!((m.estimate - exact).abs() < 3.0 * m.se && m.se < 0.01 * exact, "{m:?} vs {exact}");
    }

    #[test]
    fn estimators_agree_at_second_order() {
        let a = theta_k(2, 1.0, 0.0, 0.0, 0.0, 1.0, 0.9, &opts(400_000, ThetaEstimator::ForwardChains, 5)).unwrap();
        let b = theta_k(2, 1.0, 0.0, 0.0, 0.0, 1.0, 0.9, &opts(400_000, ThetaEstimator::Bridge, 6)).unwrap();
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!((a.estimate - b.estimate).abs() < 3.0 * se, "{a:?} vs {b:?}");
    }

    #[test]
    fn bound_shape_is_geometric() {
        let (t, s, beta, h) = (1.0, 0.0, 1.0, 0.75);
        let a: Vec<f64> = (1..=4)
            .map(|k| {
                let m = theta_k(k, t, 0.0, s, 0.0, beta, h, &opts(200_000, ThetaEstimator::Bridge, 7)).unwrap();
                let kh = k as f64 * h;
                m.estimate * gamma(kh) / ((t - s).powf(kh - 1.0) * beta.powi(2 * k as i32))
            })
            .collect();
        let base = a[1] / a[0];
        for k in 2..4 {
            assert!(a[k] / a[k - 1] <= 2.0 * base, "a = {a:?}");
        }
    }

    #[test]
    fn partial_sums_and_refusals() {
        let s = chaos_second_moment(1.0, 0.0, 0.0, 0.0, 0.5, 0.75, 4, &opts(50_000, ThetaEstimator::Bridge, 8)).unwrap();
        let p = s.partial_sums();
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        assert!(s.mc_consistent);
        assert!(s.tail_fraction < 0.05);
        assert!(theta_k(7, 1.0, 0.0, 0.0, 0.0, 0.5, 0.75, &ThetaOptions::default()).is_err());
        assert!(theta_k(2, 0.5, 0.0, 0.5, 0.0, 0.5, 0.75, &ThetaOptions::default()).is_err());
        let forced = ThetaOptions { force: true, n_mc: 100, ..ThetaOptions::default() };
        assert!(theta_k(7, 1.0, 0.0, 0.0, 0.0, 0.5, 0.75, &forced).is_ok());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let o = opts(20_000, ThetaEstimator::Bridge, 9);
        assert_eq!(
            theta_k(3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.75, &o).unwrap(),
            theta_k(3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.75, &o).unwrap()
        );
    }
}
