//! Summation, moment estimators and Kolmogorov–Smirnov tests.

use crate::special::normal_cdf;

/// Pairwise summation; error grows like O(log n) and the result depends only
/// on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sample moments with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// unbiased variance
    pub var: f64,
    /// central third and fourth moments (biased)
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2, "need at least two samples");
        let mean = pairwise_sum(xs) / n as f64;
        let dev = |p: i32| pairwise_sum(&xs.iter().map(|x| (x - mean).powi(p)).collect::<Vec<_>>());
        let m2 = dev(2);
        Moments {
            count: n,
            mean,
            var: m2 / (n - 1) as f64,
            m3: dev(3) / n as f64,
            m4: dev(4) / n as f64,
        }
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn se_mean(&self) -> f64 {
        (self.var / self.count as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn se_var(&self) -> f64 {
        let n = self.count as f64;
        let v = self.var;
        ((self.m4 - v * v * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Mean and standard error of `f(x)` over the sample; used for raw-moment checks.
pub fn mean_se_of<F: Fn(f64) -> f64>(xs: &[f64], f: F) -> (f64, f64) {
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let m = Moments::of(&ys);
    (m.mean, m.se_mean())
}

/// Pearson correlation and its large-sample standard error `(1−r²)/√n`.
pub fn correlation(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let sxy = pairwise_sum(&xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect::<Vec<_>>());
    let sxx = pairwise_sum(&xs.iter().map(|x| (x - mx).powi(2)).collect::<Vec<_>>());
    let syy = pairwise_sum(&ys.iter().map(|y| (y - my).powi(2)).collect::<Vec<_>>());
    let r = sxy / (sxx * syy).sqrt();
    (r, (1.0 - r * r) / n.sqrt())
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|j| {
                let m = (2 * j - 1) as f64;
                (-m * m * c).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// `P(D_n < d)` by the Marsaglia–Tsang–Wang matrix method.
/// Returns `None` when the matrix would be too large to be worth it.
fn ks_exact_cdf(n: usize, d: f64) -> Option<f64> {
    let nd = n as f64 * d;
    let k = nd.floor() as usize + 1;
    let m = 2 * k - 1;
    if m > 160 {
        return None;
    }
    let h = k as f64 - nd;
    let mut hm = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let mul = |a: &[f64], b: &[f64]| {
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            for l in 0..m {
                let ail = a[i * m + l];
                if ail == 0.0 {
                    continue;
                }
                for j in 0..m {
                    c[i * m + j] += ail * b[l * m + j];
                }
            }
        }
        c
    };
    type Mul<'a> = dyn Fn(&[f64], &[f64]) -> Vec<f64> + 'a;
    // binary powering with a decimal exponent kept on the side
    fn pow(
        base: &[f64],
        e: usize,
        m: usize,
        mul: &Mul<'_>,
    ) -> (Vec<f64>, i32) {
        if e == 1 {
            return (base.to_vec(), 0);
        }
        let (half, eh) = pow(base, e / 2, m, mul);
        let mut v = mul(&half, &half);
        let mut ev = 2 * eh;
        if e % 2 == 1 {
            v = mul(base, &v);
        }
        if v[(m / 2) * m + m / 2] > 1e140 {
            v.iter_mut().for_each(|x| *x *= 1e-140);
            ev += 140;
        }
        (v, ev)
    }
    let (q, mut eq) = pow(&hm, n, m, &mul);
    let mut s = q[(k - 1) * m + k - 1];
    for i in 1..=n {
        s = s * i as f64 / n as f64;
        if s < 1e-140 {
            s *= 1e140;
            eq -= 140;
        }
    }
    Some(s * 10f64.powi(eq))
}

/// One-sample KS test of `data` against a continuous `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> KsResult {
    let mut xs = data.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    KsResult { statistic: d, p_value: ks_one_sample_p(n, d) }
}

/// p-value of the one-sample statistic `d` at sample size `n`.
pub fn ks_one_sample_p(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= 1.0 {
        return 0.0;
    }
    if let Some(c) = ks_exact_cdf(n, d) {
        return (1.0 - c).clamp(0.0, 1.0);
    }
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

pub fn ks_normal(data: &[f64], mean: f64, sd: f64) -> KsResult {
    ks_one_sample(data, |x| normal_cdf((x - mean) / sd))
}

/// Two-sample KS test with the effective-size asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sn = ne.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn exact_small_sample_critical_values() {
        // scipy.stats.kstwo(n).isf(0.05)
        assert!((ks_one_sample_p(5, 0.5632751983660635) - 0.05).abs() < 1e-6);
        assert!((ks_one_sample_p(10, 0.4092460847775048) - 0.05).abs() < 1e-6);
        assert!((ks_one_sample_p(10, 0.48893165941109273) - 0.01).abs() < 1e-6);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        for &l in &[1.17, 1.18, 1.19] {
            let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
            let small: f64 = 1.0
                - (2.0 * std::f64::consts::PI).sqrt() / l
                    * (1..=20).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum::<f64>();
            assert!((small - kolmogorov_sf(l)).abs() < 1e-12);
        }
        assert!((kolmogorov_sf(1.3580986393225505) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn p_values_uniform_under_null() {
        let mut rng = crate::rng::stream(11, 0, 0);
        let reps = 10_000;
        let mut ps = Vec::with_capacity(reps);
        for _ in 0..reps {
            let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            ps.push(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).p_value);
        }
        let meta = ks_one_sample(&ps, |x| x.clamp(0.0, 1.0));
        assert!(meta.p_value > 0.001, "{meta:?}");
    }

    #[test]
    fn two_sample_detects_shift() {
        let mut rng = crate::rng::stream(3, 0, 0);
        let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() + 0.1).collect();
        let c: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
        assert!(ks_two_sample(&a, &c).p_value > 0.001);
    }

    #[test]
    fn moments_and_pairwise() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-15);
        assert!((m.var - 5.0 / 3.0).abs() < 1e-15);
        let k: KahanSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(k.value(), 1.0);
    }
}
