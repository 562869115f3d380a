use super::scaled_beta;
use crate::env::{CovarianceModel, Environment};
use crate::error::{Error, Result};
use crate::stats::{pairwise_sum, KahanSum};
use rayon::prelude::*;

/// Per-step factor of the pair average `E_Q[w(ω(i,x)) w(ω(i,y))]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairWeight {
    /// `1 + b²γ(x−y)` (modified partition function).
    Modified,
    /// `e^{b²γ(x−y)}` (exponential normalized by `e^{−λ(b)}`, or tilted).
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoWalkTarget {
    PointToLine,
    /// Both walks end at `x` at time `n`.
    PointToPoint { x: i64 },
}

/// `E_Q[z_n²]` by a dynamic program over the difference walk `S − S'`
/// (steps `−2, 0, 2` with probabilities `¼, ½, ¼`).
///
/// For point-to-point targets the constraint on `S + S'` is imposed with a
/// Fourier integral that Gauss–Chebyshev evaluates exactly.
pub fn two_walk_second_moment(
    n: usize,
    beta: f64,
    gamma: &CovarianceModel,
    target: TwoWalkTarget,
    weight: PairWeight,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    let b = scaled_beta(beta, n, gamma.params().hurst / 2.0);
    let b2 = b * b;
    let factor: Vec<f64> = (0..=n)
        .map(|u| {
            let g = gamma.gamma(2 * u as i64);
            match weight {
                PairWeight::Modified => 1.0 + b2 * g,
                PairWeight::Exponential => (b2 * g).exp(),
            }
        })
        .collect();
    match target {
        TwoWalkTarget::PointToLine => {
            let d = difference_walk(n, &factor, 0.5);
            let mut s = KahanSum::default();
            s.add(d[0]);
            d[1..].iter().for_each(|v| s.add(2.0 * v));
            Ok(s.value())
        }
        TwoWalkTarget::PointToPoint { x } => {
            if x.unsigned_abs() as usize > n || (x + n as i64) % 2 != 0 {
                return Ok(0.0);
            }
            let m = (n + x.unsigned_abs() as usize + 2) / 2;
            let vals: Vec<f64> = (1..=m)
                .into_par_iter()
                .map(|j| {
                    let theta = (2 * j - 1) as f64 * std::f64::consts::PI / (2 * m) as f64;
                    (x as f64 * theta).cos() * difference_walk(n, &factor, 0.5 * theta.cos())[0]
                })
                .collect();
            Ok(pairwise_sum(&vals) / m as f64)
        }
    }
}

/// Difference-walk weights at time `n` indexed by `|d|/2`, with the zero step
/// carrying weight `stay` and each `±2` step weight `¼`.
fn difference_walk(n: usize, factor: &[f64], stay: f64) -> Vec<f64> {
    let mut cur = vec![0.0; n + 2];
    let mut next = vec![0.0; n + 2];
    cur[0] = 1.0;
    for i in 1..=n {
        next[0] = (stay * cur[0] + 0.5 * cur[1]) * factor[0];
        for u in 1..=i {
            next[u] = (0.25 * (cur[u - 1] + cur[u + 1]) + stay * cur[u]) * factor[u];
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.truncate(n + 1);
    cur
}

/// Chaos terms `b^k Σ_{i∈D_k} Σ_x Π_j ω(i_j, x_j) p_k(i, x)` of the modified
/// point-to-line partition function for `k = 0..=k_max`, `b = βn^{−H/2}`.
pub fn chaos_terms<E: Environment + ?Sized>(env: &E, n: usize, beta: f64, k_max: usize) -> Result<Vec<f64>> {
    let b = scaled_beta(beta, n, env.params().hurst / 2.0);
    chaos_terms_with(env, n, b, k_max)
}

/// As [`chaos_terms`] with the coupling `b` given directly.
pub(crate) fn chaos_terms_with<E: Environment + ?Sized>(
    env: &E,
    n: usize,
    b: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    if !env.covers_cone(n, n) {
        return Err(Error::Argument(format!("environment must cover rows 1..={n} and sites |x| <= i")));
    }
    let levels = k_max.min(n) + 1;
    let mut cur = vec![vec![0.0; n + 1]; levels];
    let mut next = vec![vec![0.0; n + 1]; levels];
    let mut avg = vec![0.0; n + 1];
    cur[0][0] = 1.0;
    let mut omega = vec![0.0; n + 1];
    for i in 1..=n {
        for (j, w) in omega[..=i].iter_mut().enumerate() {
            *w = b * env.value(i, 2 * j as i64 - i as i64);
        }
        let mut prev_avg = vec![0.0; i + 1];
        for k in 0..levels.min(i + 1) {
            let a = &cur[k];
            for j in 0..=i {
                let left = if j >= 1 { a[j - 1] } else { 0.0 };
                let right = if j < i { a[j] } else { 0.0 };
                avg[j] = 0.5 * (left + right);
            }
            for j in 0..=i {
                next[k][j] = avg[j] + if k > 0 { omega[j] * prev_avg[j] } else { 0.0 };
            }
            prev_avg.copy_from_slice(&avg[..=i]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut out: Vec<f64> = cur.iter().map(|a| pairwise_sum(a)).collect();
    out.resize(k_max + 1, 0.0);
    Ok(out)
}

/// The `k`-th chaos term; zero for `k > n`.
pub fn chaos_term<E: Environment + ?Sized>(env: &E, n: usize, beta: f64, k: usize) -> Result<f64> {
    Ok(chaos_terms(env, n, beta, k)?[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvParams, EnvironmentField};
    use crate::partition::{dp_modified_partition, PartitionParams, Variant};
    use crate::stats::Moments;
    use crate::walk::walk_p;

    fn cov(m: usize) -> CovarianceModel {
        CovarianceModel::build(&EnvParams::calibrated(0.75, m).unwrap(), 4 * m).unwrap()
    }

    /// Brute force over all pairs of paths.
    fn enumerate_pairs(n: usize, beta: f64, g: &CovarianceModel, end: Option<i64>) -> f64 {
        let b2 = beta * beta * (n as f64).powf(-0.75);
        let paths: Vec<Vec<i64>> = (0u32..(1 << n))
            .map(|mask| {
                let mut x = 0;
                (1..=n)
                    .map(|i| {
                        x += if mask >> (i - 1) & 1 == 1 { 1 } else { -1 };
                        x
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        for a in &paths {
            for c in &paths {
                if end.is_some_and(|x| a[n - 1] != x || c[n - 1] != x) {
                    continue;
                }
                total += a.iter().zip(c).map(|(s, t)| 1.0 + b2 * g.gamma(s - t)).product::<f64>();
            }
        }
        total / 4f64.powi(n as i32)
    }

    #[test]
    fn one_step_and_beta_zero() {
        let g = cov(40);
        let v = two_walk_second_moment(1, 0.9, &g, TwoWalkTarget::PointToLine, PairWeight::Modified).unwrap();
        let want = 1.0 + 0.81 * (g.gamma(0) + g.gamma(2)) / 2.0;
        assert!((v - want).abs() < 1e-14);
        for t in [TwoWalkTarget::PointToLine, TwoWalkTarget::PointToPoint { x: 0 }] {
            let v = two_walk_second_moment(10, 0.0, &g, t, PairWeight::Modified).unwrap();
            let want = match t {
                TwoWalkTarget::PointToLine => 1.0,
                TwoWalkTarget::PointToPoint { .. } => walk_p(10, 0).powi(2),
            };
            assert!((v - want).abs() < 1e-14, "{v} {want}");
        }
    }

    #[test]
    fn matches_pair_enumeration() {
        let g = cov(40);
        for n in [3usize, 6, 7] {
            let v = two_walk_second_moment(n, 1.3, &g, TwoWalkTarget::PointToLine, PairWeight::Modified).unwrap();
            let want = enumerate_pairs(n, 1.3, &g, None);
            assert!((v - want).abs() < 1e-12 * want);
            for x in [n as i64 % 2, 2 + n as i64 % 2, -(n as i64)] {
                let t = TwoWalkTarget::PointToPoint { x };
                let v = two_walk_second_moment(n, 1.3, &g, t, PairWeight::Modified).unwrap();
                let want = enumerate_pairs(n, 1.3, &g, Some(x));
                assert!((v - want).abs() < 1e-13, "n={n} x={x}: {v} vs {want}");
            }
            let odd = TwoWalkTarget::PointToPoint { x: n as i64 + 1 };
            assert_eq!(two_walk_second_moment(n, 1.3, &g, odd, PairWeight::Modified).unwrap(), 0.0);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_oracle() {
        let p = EnvParams::calibrated(0.75, 200).unwrap();
        let g = CovarianceModel::build(&p, 400).unwrap();
        let n = 24;
        let params = PartitionParams::new(1.5, n, 0.75, Variant::Modified).unwrap();
        let zs: Vec<f64> = (0..3000)
            .map(|s| {
                let env = sample_environment(&p, n, -(n as i64), n as i64, s).unwrap();
                dp_modified_partition(&env, &params).unwrap().partition_function().powi(2)
            })
            .collect();
        let m = Moments::of(&zs);
        let want = two_walk_second_moment(n, 1.5, &g, TwoWalkTarget::PointToLine, PairWeight::Modified).unwrap();
        assert!((m.mean - want).abs() < 3.5 * m.se_mean(), "{} ± {} vs {want}", m.mean, m.se_mean());
    }

    fn env12(seed: u64) -> EnvironmentField {
        let p = EnvParams::calibrated(0.75, 30).unwrap();
        sample_environment(&p, 12, -12, 12, seed).unwrap()
    }

    #[test]
    fn chaos_expansion_is_exact() {
        for seed in 0..5 {
            let env = env12(seed);
            let terms = chaos_terms(&env, 12, 2.0, 12).unwrap();
            assert_eq!(terms[0], 1.0);
            let params = PartitionParams::new(2.0, 12, 0.75, Variant::Modified).unwrap();
            let z = dp_modified_partition(&env, &params).unwrap().partition_function();
            let s: f64 = terms.iter().sum();
            assert!((s - z).abs() <= 1e-12 * z.abs().max(1.0));
        }
    }

    #[test]
    fn first_chaos_is_direct_sum() {
        let env = env12(3);
        let b = 0.7 * 12f64.powf(-0.375);
        let mut direct = 0.0;
        for i in 1..=12usize {
            for x in (-(i as i64)..=i as i64).step_by(2) {
                direct += env.get(i, x) * walk_p(i as u64, x);
            }
        }
        let t = chaos_term(&env, 12, 0.7, 1).unwrap();
        assert!((t - b * direct).abs() < 1e-14);
        assert_eq!(chaos_term(&env, 3, 0.7, 5).unwrap(), 0.0);
    }
}
