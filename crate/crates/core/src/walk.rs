//! Simple random walk kernels on the parity lattice `{(i, x): i + x even}`.

use crate::error::{Error, Result};
use crate::special::{heat_kernel, ln_gamma};
use std::f64::consts::PI;

/// Time indices `i_1, …, i_k` in `[1, n]`.
///
/// `Ordered` tuples are strictly increasing; `Distinct` tuples only need
/// pairwise distinct entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeTuple {
    Ordered(Vec<usize>),
    Distinct(Vec<usize>),
}

impl TimeTuple {
    pub fn ordered(idx: Vec<usize>) -> Result<Self> {
        if idx.windows(2).all(|w| w[0] < w[1]) {
            Ok(TimeTuple::Ordered(idx))
        } else {
            Err(Error::Argument(format!("time indices {idx:?} are not strictly increasing")))
        }
    }

    pub fn distinct(idx: Vec<usize>) -> Result<Self> {
        let mut s = idx.clone();
        s.sort_unstable();
        if s.windows(2).all(|w| w[0] < w[1]) {
            Ok(TimeTuple::Distinct(idx))
        } else {
            Err(Error::Argument(format!("time indices {idx:?} repeat")))
        }
    }

    pub fn indices(&self) -> &[usize] {
        match self {
            TimeTuple::Ordered(v) | TimeTuple::Distinct(v) => v,
        }
    }

    pub fn len(&self) -> usize {
        self.indices().len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices().is_empty()
    }

    pub fn is_increasing(&self) -> bool {
        self.indices().windows(2).all(|w| w[0] < w[1])
    }
}

/// `lnΓ(n+1) − (n+½)ln n + n − ½ln 2π`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    const SMALL: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_258,
        0.041_340_695_955_409_294,
        0.027_677_925_684_998_339,
        0.020_790_672_103_765_093,
        0.016_644_691_189_821_192,
        0.013_876_128_823_070_748,
        0.011_896_709_945_891_770,
        0.010_411_265_261_972_096,
        0.009_255_462_182_712_733,
        0.008_330_563_433_362_871,
        0.007_573_675_487_951_841,
        0.006_942_840_107_209_530,
        0.006_408_994_188_004_207,
        0.005_951_370_112_758_848,
        0.005_554_733_551_962_801,
    ];
    if n <= 15.0 {
        if n.fract() == 0.0 {
            return SMALL[n as usize];
        }
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * PI).ln();
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term `x ln(x/m) + m − x`, stable when `x ≈ m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `C(n, k) 2^{-n}` by Loader's saddle-point form; relative error ~1e-15 for all n.
pub fn half_binomial_saddle(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if k == 0 || k == n {
        return 0.5f64.powi(n as i32);
    }
    let (nf, kf) = (n as f64, k as f64);
    let m = nf / 2.0;
    let lc = stirling_error(nf)
        - stirling_error(kf)
        - stirling_error(nf - kf)
        - deviance(kf, m)
        - deviance(nf - kf, m);
    lc.exp() * (nf / (2.0 * PI * kf * (nf - kf))).sqrt()
}

/// `C(n, k) 2^{-n}` from the exact integer binomial; valid for `n ≤ 62`.
pub fn half_binomial_exact(n: u64, k: u64) -> f64 {
    assert!(n <= 62);
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n - j) as u128 / (j + 1) as u128;
    }
    c as f64 * 0.5f64.powi(n as i32)
}

/// `p(n, x) = P(S_n = x)`.
pub fn walk_p(n: u64, x: i64) -> f64 {
    let ax = x.unsigned_abs();
    if ax > n || (n + ax) % 2 == 1 {
        return 0.0;
    }
    let k = (n + ax) / 2;
    if n <= 62 {
        half_binomial_exact(n, k)
    } else {
        half_binomial_saddle(n, k)
    }
}

/// The full row `p(n, x)` for `x = −n, −n+2, …, n` (index `(x+n)/2`).
pub fn walk_row(n: u64) -> Vec<f64> {
    let len = n as usize + 1;
    let mut row = vec![0.0; len];
    let mid = len / 2;
    // fill outward from the centre by the ratio p(x+2)/p(x) = (n−x)/(n+x+2)
    for (j, slot) in row.iter_mut().enumerate().take(len).skip(mid) {
        let x = 2 * j as i64 - n as i64;
        *slot = walk_p(n, x);
        if *slot == 0.0 {
            break;
        }
    }
    for j in 0..mid {
        row[j] = row[len - 1 - j];
    }
    row
}

/// `Π p(i_j − i_{j−1}, x_j − x_{j−1})` with `i_0 = 0, x_0 = 0`; zero off `D_k^n`.
pub fn walk_pk(times: &TimeTuple, xs: &[i64]) -> Result<f64> {
    let idx = times.indices();
    if idx.len() != xs.len() {
        return Err(Error::Argument(format!(
            "{} times but {} sites",
            idx.len(),
            xs.len()
        )));
    }
    if !times.is_increasing() {
        return Ok(0.0);
    }
    let (mut pi, mut px) = (0usize, 0i64);
    let mut prod = 1.0;
    for (&i, &x) in idx.iter().zip(xs) {
        prod *= walk_p((i - pi) as u64, x - px);
        if prod == 0.0 {
            return Ok(0.0);
        }
        pi = i;
        px = x;
    }
    Ok(prod)
}

/// The integer with the parity of `i` closest to `x`; ties go to the smaller one.
pub fn nearest_parity_int(x: f64, i: i64) -> i64 {
    let f = x.floor() as i64;
    let lo = if (f - i).rem_euclid(2) == 0 { f } else { f - 1 };
    let hi = lo + 2;
    if hi as f64 - x < x - lo as f64 {
        hi
    } else {
        lo
    }
}

/// `p̄_k(i, x) = 2^{-k} p_k(i, [x]_i)`, a density on `ℝ^k`.
pub fn pbar_k(times: &TimeTuple, xs: &[f64]) -> Result<f64> {
    let idx = times.indices();
    if idx.len() != xs.len() {
        return Err(Error::Argument(format!(
            "{} times but {} coordinates",
            idx.len(),
            xs.len()
        )));
    }
    let sites: Vec<i64> = idx
        .iter()
        .zip(xs)
        .map(|(&i, &x)| nearest_parity_int(x, i as i64))
        .collect();
    Ok(walk_pk(times, &sites)? * 0.5f64.powi(idx.len() as i32))
}

/// `⌊n t⌋`, snapping products within 1e-9 of an integer onto it.
pub fn lattice_time(n: usize, t: f64) -> i64 {
    let s = n as f64 * t;
    let r = s.round();
    if (s - r).abs() < 1e-9 {
        r as i64
    } else {
        s.floor() as i64
    }
}

/// `p^n_k(t, x) = p̄_k(⌊nt⌋, √n x) 1{⌊nt⌋ ∈ D_k^n}`.
pub fn p_scaled(t: &[f64], xs: &[f64], n: usize) -> Result<f64> {
    if t.len() != xs.len() {
        return Err(Error::Argument(format!("{} times but {} coordinates", t.len(), xs.len())));
    }
    let idx: Vec<i64> = t.iter().map(|&s| lattice_time(n, s)).collect();
    let in_range = idx.iter().all(|&i| i >= 1 && i <= n as i64);
    if !in_range || !idx.windows(2).all(|w| w[0] < w[1]) {
        return Ok(0.0);
    }
    let times = TimeTuple::Ordered(idx.iter().map(|&i| i as usize).collect());
    let sn = (n as f64).sqrt();
    let y: Vec<f64> = xs.iter().map(|x| sn * x).collect();
    pbar_k(&times, &y)
}

/// Brownian `k`-point density `Π P_{t_j − t_{j−1}}(x_j − x_{j−1})` from `(0, 0)`.
pub fn brownian_pk(t: &[f64], xs: &[f64]) -> f64 {
    let (mut pt, mut px) = (0.0, 0.0);
    let mut prod = 1.0;
    for (&s, &x) in t.iter().zip(xs) {
        if s <= pt {
            return 0.0;
        }
        prod *= heat_kernel(s - pt, x - px);
        pt = s;
        px = x;
    }
    prod
}
