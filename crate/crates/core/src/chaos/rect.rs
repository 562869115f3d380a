use crate::error::{check_hurst, Error, Result};
use serde::{Deserialize, Serialize};

/// `coeff · 1_{[t_lo, t_hi] × [x_lo, x_hi]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectFn {
    pub coeff: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl RectFn {
    pub fn new(coeff: f64, (t_lo, t_hi): (f64, f64), (x_lo, x_hi): (f64, f64)) -> Result<Self> {
        let finite = [coeff, t_lo, t_hi, x_lo, x_hi].iter().all(|v| v.is_finite());
        if !finite || t_lo > t_hi || x_lo > x_hi {
            return Err(Error::Argument(format!(
                "bad rectangle [{t_lo}, {t_hi}] x [{x_lo}, {x_hi}] with coefficient {coeff}"
            )));
        }
        Ok(RectFn { coeff, t_lo, t_hi, x_lo, x_hi })
    }

    /// Indicator of `[t_lo, t_hi] × [x_lo, x_hi]`.
    pub fn indicator(t: (f64, f64), x: (f64, f64)) -> Result<Self> {
        Self::new(1.0, t, x)
    }

    pub fn is_zero(&self) -> bool {
        self.coeff == 0.0 || self.t_lo == self.t_hi || self.x_lo == self.x_hi
    }

    pub fn scaled(&self, c: f64) -> Self {
        RectFn { coeff: self.coeff * c, ..*self }
    }

    /// Same support, unit coefficient.
    pub fn support(&self) -> Self {
        RectFn { coeff: 1.0, ..*self }
    }

    pub fn time_overlap(&self, other: &RectFn) -> f64 {
        (self.t_hi.min(other.t_hi) - self.t_lo.max(other.t_lo)).max(0.0)
    }

    pub fn area(&self) -> f64 {
        (self.t_hi - self.t_lo) * (self.x_hi - self.x_lo)
    }

    /// `∫ f` over a box.
    pub fn integral_over(&self, t: (f64, f64), x: (f64, f64)) -> f64 {
        let dt = (self.t_hi.min(t.1) - self.t_lo.max(t.0)).max(0.0);
        let dx = (self.x_hi.min(x.1) - self.x_lo.max(x.0)).max(0.0);
        self.coeff * dt * dx
    }
}

/// `K(u, v) = H(2H−1)|u−v|^{2H−2}`.
pub fn kernel_k(u: f64, v: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if u == v {
        return Err(Error::Domain("kernel K is singular on the diagonal u = v".into()));
    }
    Ok(hurst * (2.0 * hurst - 1.0) * (u - v).abs().powf(2.0 * hurst - 2.0))
}

/// Covariance of the fBm increments over `[a, b]` and `[c, d]`.
pub fn fbm_increment_cov((a, b): (f64, f64), (c, d): (f64, f64), hurst: f64) -> f64 {
    let p = |z: f64| z.abs().powf(2.0 * hurst);
    0.5 * (p(b - c) + p(a - d) - p(b - d) - p(a - c))
}

/// `⟨f, g⟩_H`: time overlap times the fBm increment covariance.
pub fn inner_h(f: &RectFn, g: &RectFn, hurst: f64) -> f64 {
    let dt = f.time_overlap(g);
    if dt == 0.0 {
        return 0.0;
    }
    f.coeff * g.coeff * dt * fbm_increment_cov((f.x_lo, f.x_hi), (g.x_lo, g.x_hi), hurst)
}

/// Probabilists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        (h0, h1) = (h1, x * h1 - k as f64 * h0);
    }
    h1
}

/// `H_0(x), …, H_n(x)`.
pub(crate) fn hermite_table(n: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let v = x * out[k] - k as f64 * out[k - 1];
        out.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use crate::rng::stream;
    use crate::stats::Moments;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_k(0.0, 1.0, 0.75).unwrap(), 0.375);
        assert!((kernel_k(0.0, 2.0, 0.75).unwrap() - 0.265_165_042_944_955_3).abs() < 1e-15);
        assert_eq!(kernel_k(0.3, 1.7, 0.6).unwrap(), kernel_k(1.7, 0.3, 0.6).unwrap());
        assert!(matches!(kernel_k(1.0, 1.0, 0.75), Err(Error::Domain(_))));
    }

    #[test]
    fn rectangle_norms() {
        let f = RectFn::indicator((0.2, 0.7), (1.0, 3.5)).unwrap();
        assert!((inner_h(&f, &f, 0.75) - 0.5 * 2.5f64.powf(1.5)).abs() < 1e-14);
        let g = RectFn::indicator((0.7, 1.0), (1.0, 3.5)).unwrap();
        assert_eq!(inner_h(&f, &g, 0.75), 0.0);
        let a = RectFn::indicator((0.0, 1.0), (0.0, 1.0)).unwrap();
        let b = RectFn::indicator((0.0, 1.0), (1.0, 2.0)).unwrap();
        let want = 0.5 * (2f64.powf(1.5) - 2.0);
        assert!((inner_h(&a, &b, 0.75) - want).abs() < 1e-15);
        assert!((want - 0.414_213_562_373_095).abs() < 1e-12);
    }

    /// `∫_{[0,1]}∫_{[1,2]} K(u, v) dv du` by nested adaptive quadrature.
    #[test]
    fn adjacent_inner_product_by_quadrature() {
        let h = 0.75;
        let inner = |u: f64| {
            integrate(|v| kernel_k(u, v, h).unwrap(), 1.0, 2.0, 1e-11, 1e-10, 2000).unwrap().value
        };
        let q = integrate(inner, 0.0, 1.0, 1e-9, 1e-9, 2000).unwrap();
        let direct = inner_h(
            &RectFn::indicator((0.0, 1.0), (0.0, 1.0)).unwrap(),
            &RectFn::indicator((0.0, 1.0), (1.0, 2.0)).unwrap(),
            h,
        );
        assert!((q.value - direct).abs() < 1e-2 * direct, "{} vs {direct}", q.value);
    }

    #[test]
    fn hermite_values_and_recurrence() {
        assert_eq!(hermite(0, 3.3), 1.0);
        assert_eq!(hermite(1, 3.3), 3.3);
        assert_eq!(hermite(2, 2.0), 3.0);
        assert_eq!(hermite(3, 2.0), 2.0);
        let mut t = Vec::new();
        hermite_table(6, 0.7, &mut t);
        for (n, v) in t.iter().enumerate() {
            assert!((v - hermite(n, 0.7)).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_orthogonality_under_correlation() {
        let r: f64 = 0.6;
        let reps = 1_000_000;
        let mut rng = stream(3, 9, 0);
        let pairs: Vec<(f64, f64)> = (0..reps)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (a, r * a + (1.0 - r * r).sqrt() * b)
            })
            .collect();
        for j in 0..=4usize {
            for k in 0..=4usize {
                if j + k == 0 {
                    continue;
                }
                let xs: Vec<f64> = pairs.iter().map(|&(a, b)| hermite(k, a) * hermite(j, b)).collect();
                let m = Moments::of(&xs);
                let want = if j == k { r.powi(k as i32) * (1..=k).product::<usize>() as f64 } else { 0.0 };
                assert!((m.mean - want).abs() < 3.5 * m.se_mean(), "j={j} k={k}: {} ± {} vs {want}", m.mean, m.se_mean());
            }
        }
    }

    fn rect_strategy() -> impl Strategy<Value = RectFn> {
        (-2.0..2.0f64, 0.0..1.0f64, 0.0..1.0f64, -3.0..3.0f64, 0.01..3.0f64).prop_map(|(c, t0, dt, x0, dx)| {
            RectFn::new(c, (t0 * 0.5, t0 * 0.5 + dt * 0.5), (x0, x0 + dx)).unwrap()
        })
    }

    /// `‖f‖²_H / (∫(∫|f|^{1/H}dx)^{2H}dt)` for `f = Σ c_a 1_{[0,1] × I_a}`, disjoint `I_a`.
    fn hl_ratio(cuts: &[f64], coeffs: &[f64], h: f64) -> f64 {
        let rects: Vec<RectFn> = coeffs
            .iter()
            .enumerate()
            .map(|(a, &c)| RectFn::new(c, (0.0, 1.0), (cuts[2 * a], cuts[2 * a + 1])).unwrap())
            .collect();
        let lhs: f64 = rects.iter().flat_map(|f| rects.iter().map(move |g| inner_h(f, g, h))).sum();
        let l1h: f64 = rects.iter().map(|f| f.coeff.abs().powf(1.0 / h) * (f.x_hi - f.x_lo)).sum();
        lhs / l1h.powf(2.0 * h)
    }

    fn random_step(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let k = rng.random_range(1..=5);
        let mut cuts: Vec<f64> = (0..2 * k).map(|_| rng.random_range(0.0..5.0)).collect();
        cuts.sort_by(f64::total_cmp);
        let coeffs = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        (cuts, coeffs)
    }

    #[test]
    fn hardy_littlewood_constant_holds_out_of_sample() {
        let h = 0.75;
        let mut rng = stream(42, 1, 0);
        let fitted = (0..5000)
            .map(|_| {
                let (c, a) = random_step(&mut rng);
                hl_ratio(&c, &a, h)
            })
            .fold(0.0f64, f64::max);
        let c_h = 1.1 * fitted;
        let single = RectFn::indicator((0.0, 1.0), (0.0, 2.0)).unwrap();
        assert!((inner_h(&single, &single, h) - 2f64.powf(2.0 * h)).abs() < 1e-14);
        let mut rng = stream(43, 1, 0);
        for _ in 0..5000 {
            let (c, a) = random_step(&mut rng);
            assert!(hl_ratio(&c, &a, h) <= c_h);
        }
    }

    proptest! {
        #[test]
        fn inner_product_is_symmetric_bilinear_and_cauchy_schwarz(
            f in rect_strategy(), g in rect_strategy(), c in -3.0..3.0f64, h in 0.55..0.95f64
        ) {
            let fg = inner_h(&f, &g, h);
            prop_assert!((fg - inner_h(&g, &f, h)).abs() <= 1e-12 * (1.0 + fg.abs()));
            prop_assert!((inner_h(&f.scaled(c), &g, h) - c * fg).abs() <= 1e-12 * (1.0 + fg.abs()));
            let ff = inner_h(&f, &f, h);
            let gg = inner_h(&g, &g, h);
            prop_assert!(ff >= 0.0);
            prop_assert!(fg * fg <= ff * gg * (1.0 + 1e-10) + 1e-15);
        }
    }
}
