//! Weighted U-statistics `S_k^n(f) = 2^{k/2} Σ_{E_k^n} Σ_x f̄_n Π_j ω(i_j, x_j) 1_{i_j↔x_j}`.
//!
//! Cells: time index `i` covers `((i−1)/n, i/n]`, site `x` covers
//! `((x−1)/√n, (x+1)/√n]`.

use crate::chaos::{RectFn, TensorKernel};
use crate::env::{CovarianceModel, Environment};
use crate::error::{Error, Result};
use crate::partition::chaos_terms_with;
use crate::stats::KahanSum;
use crate::walk::{walk_p, walk_pk, TimeTuple};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub enum UStatWeight {
    /// Cell averages of a symmetric rectangle tensor.
    Tensor(TensorKernel),
    /// The walk density `n^{k/2} p^n_k`, equal to `n^{k/2} 2^{−k} p_k(i, x)`
    /// on the cell of `(i, x)` when `i_1 < … < i_k`, and 0 otherwise.
    Walk { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UStatSpec {
    pub n: usize,
    pub weight: UStatWeight,
}

impl UStatSpec {
    pub fn tensor(n: usize, kernel: TensorKernel) -> Result<Self> {
        Self::checked(n, UStatWeight::Tensor(kernel))
    }

    pub fn walk(n: usize, k: usize) -> Result<Self> {
        Self::checked(n, UStatWeight::Walk { k })
    }

    fn checked(n: usize, weight: UStatWeight) -> Result<Self> {
        let s = UStatSpec { n, weight };
        if n == 0 {
            return Err(Error::Argument("n must be >= 1".into()));
        }
        if s.order() > n {
            return Err(Error::Argument(format!("order {} exceeds n={n}", s.order())));
        }
        Ok(s)
    }

    pub fn order(&self) -> usize {
        match &self.weight {
            UStatWeight::Tensor(k) => k.order(),
            UStatWeight::Walk { k } => *k,
        }
    }
}

/// One lattice cell `((i−1)/n, i/n] × ((x−1)/√n, (x+1)/√n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub i: usize,
    pub x: i64,
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

fn time_fraction(g: &RectFn, n: usize, i: usize) -> f64 {
    let nf = n as f64;
    nf * overlap((g.t_lo, g.t_hi), ((i - 1) as f64 / nf, i as f64 / nf))
}

fn space_fraction(g: &RectFn, n: usize, x: i64) -> f64 {
    let r = (n as f64).sqrt();
    0.5 * r * overlap((g.x_lo, g.x_hi), ((x - 1) as f64 / r, (x + 1) as f64 / r))
}

/// Sites whose cells meet the rectangle's spatial interval.
fn site_range(g: &RectFn, n: usize) -> (i64, i64) {
    let r = (n as f64).sqrt();
    ((r * g.x_lo - 1.0).floor() as i64 + 1, (r * g.x_hi + 1.0).ceil() as i64 - 1)
}

/// Exact cell average of a rectangle function.
pub fn f_bar(g: &RectFn, n: usize, cell: Cell) -> f64 {
    g.coeff * time_fraction(g, n, cell.i) * space_fraction(g, n, cell.x)
}

/// Cell average of a symmetric tensor kernel on a product cell (explicit symmetrization).
pub fn f_bar_tensor(kernel: &TensorKernel, n: usize, cells: &[Cell]) -> Result<f64> {
    if cells.len() != kernel.order() {
        return Err(Error::Argument(format!("{} cells for a kernel of order {}", cells.len(), kernel.order())));
    }
    let k = cells.len();
    let perms = permutations(k);
    let mut total = 0.0;
    for term in kernel.terms() {
        let slots = term.slots();
        let avg: f64 = perms
            .iter()
            .map(|p| p.iter().zip(cells).map(|(&s, c)| f_bar(&slots[s], n, *c)).product::<f64>())
            .sum::<f64>()
            / perms.len() as f64;
        total += term.coeff * avg;
    }
    Ok(total)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn check_cover<E: Environment + ?Sized>(env: &E, n: usize, lo: i64, hi: i64) -> Result<()> {
    if env.n_time() < n {
        return Err(Error::Argument(format!("environment has {} rows, need {n}", env.n_time())));
    }
    for i in 1..=n {
        let (a, b) = env.row_range(i);
        if a > lo || b < hi {
            return Err(Error::Argument(format!("environment must cover sites {lo}..={hi} in every row")));
        }
    }
    Ok(())
}

/// `q(i) = Σ_x ḡ(i, x) ω(i, x) 1_{i↔x}` for `i = 1..=n` (index `i − 1`).
pub fn row_sums<E: Environment + ?Sized>(env: &E, g: &RectFn, n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = site_range(g, n);
    if lo > hi {
        return Ok(vec![0.0; n]);
    }
    check_cover(env, n, lo, hi)?;
    Ok((1..=n)
        .into_par_iter()
        .map(|i| {
            let tf = time_fraction(g, n, i);
            if tf == 0.0 {
                return 0.0;
            }
            let start = if (lo - i as i64).rem_euclid(2) == 0 { lo } else { lo + 1 };
            let s: KahanSum = (start..=hi)
                .step_by(2)
                .map(|x| space_fraction(g, n, x) * env.value(i, x))
                .collect();
            g.coeff * tf * s.value()
        })
        .collect())
}

/// `e_0, …, e_k` of `q` by Newton's identities with compensated power sums.
pub fn elementary_symmetric_newton(q: &[f64], k: usize) -> Vec<f64> {
    let power: Vec<f64> = (1..=k)
        .map(|m| q.iter().map(|v| v.powi(m as i32)).collect::<KahanSum>().value())
        .collect();
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for m in 1..=k {
        let mut s = KahanSum::default();
        for j in 1..=m {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            s.add(sign * e[m - j] * power[j - 1]);
        }
        e[m] = s.value() / m as f64;
    }
    e
}

/// `e_0, …, e_k` of `q` from the product `Π_i (1 + t q_i)`.
pub fn elementary_symmetric_product(q: &[f64], k: usize) -> Vec<f64> {
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for &v in q {
        for m in (1..=k).rev() {
            e[m] += v * e[m - 1];
        }
    }
    e
}

/// `Σ` over ordered tuples of distinct rows of `Π_j q_{a_j}(i_j)`, where the
/// multiset `{a_j}` has multiplicity `mult[a]`: `Π k_a!` times the
/// coefficient of `Π t_a^{k_a}` in `Π_i (1 + Σ_a t_a q_a(i))`.
fn mixed_distinct_sum(rows: &[&[f64]], mult: &[usize]) -> f64 {
    let dims: Vec<usize> = mult.iter().map(|m| m + 1).collect();
    let size: usize = dims.iter().product();
    let mut table = vec![0.0; size];
    table[0] = 1.0;
    let strides: Vec<usize> = dims.iter().scan(1, |s, d| {
        let v = *s;
        *s *= d;
        Some(v)
    }).collect();
    let n = rows.first().map_or(0, |r| r.len());
    for i in 0..n {
        for idx in (0..size).rev() {
            let mut add = 0.0;
            let mut rem = idx;
            for (a, &d) in dims.iter().enumerate() {
                let c = rem % d;
                rem /= d;
                if c > 0 {
                    add += rows[a][i] * table[idx - strides[a]];
                }
            }
            table[idx] += add;
        }
    }
    let fact = mult.iter().map(|&m| (1..=m).map(|j| j as f64).product::<f64>()).product::<f64>();
    fact * table[size - 1]
}

/// `S_k^n` for the given weight.
pub fn ustat_eval<E: Environment + ?Sized>(env: &E, spec: &UStatSpec) -> Result<f64> {
    let n = spec.n;
    match &spec.weight {
        UStatWeight::Walk { k } => {
            let k = *k;
            let s = chaos_terms_with(env, n, 1.0, k)?[k];
            Ok((n as f64 / 2.0).powf(k as f64 / 2.0) * s)
        }
        UStatWeight::Tensor(kernel) => {
            let k = kernel.order();
            if k == 0 {
                return Ok(kernel.terms().iter().map(|t| t.coeff).sum());
            }
            let supports = kernel.supports();
            let rows: Vec<Vec<f64>> = supports.iter().map(|g| row_sums(env, g, n)).collect::<Result<_>>()?;
            let mut total = KahanSum::default();
            for term in kernel.terms() {
                let value = if term.factors.len() == 1 {
                    let a = supports.iter().position(|g| *g == term.factors[0].0).expect("support listed");
                    let fact: f64 = (1..=k).map(|j| j as f64).product();
                    fact * elementary_symmetric_newton(&rows[a], k)[k]
                } else {
                    let refs: Vec<&[f64]> = term
                        .factors
                        .iter()
                        .map(|(g, _)| rows[supports.iter().position(|s| s == g).expect("support listed")].as_slice())
                        .collect();
                    let mult: Vec<usize> = term.factors.iter().map(|(_, m)| *m).collect();
                    mixed_distinct_sum(&refs, &mult)
                };
                total.add(term.coeff * value);
            }
            Ok(2f64.powf(k as f64 / 2.0) * total.value())
        }
    }
}

/// `n^{−(H+1)k/2} S_k^n`.
pub fn ustat_scaled<E: Environment + ?Sized>(env: &E, spec: &UStatSpec) -> Result<f64> {
    let h = env.params().hurst;
    Ok(ustat_eval(env, spec)? * (spec.n as f64).powf(-(h + 1.0) * spec.order() as f64 / 2.0))
}

/// Brute-force `S_k^n` over all distinct time tuples; `n ≤ 12`, `k ≤ 3`.
pub fn ustat_direct<E: Environment + ?Sized>(env: &E, spec: &UStatSpec) -> Result<f64> {
    let (n, k) = (spec.n, spec.order());
    if n > 12 || k > 3 {
        return Err(Error::Argument(format!("direct enumeration limited to n <= 12, k <= 3 (got n={n}, k={k})")));
    }
    let (lo, hi) = match &spec.weight {
        UStatWeight::Walk { .. } => (-(n as i64), n as i64),
        UStatWeight::Tensor(kernel) => kernel
            .supports()
            .iter()
            .map(|g| site_range(g, n))
            .fold((i64::MAX, i64::MIN), |(a, b), (c, d)| (a.min(c), b.max(d))),
    };
    if lo > hi {
        return Ok(0.0);
    }
    check_cover(env, n, lo, hi)?;
    let mut total = KahanSum::default();
    let mut times = vec![0usize; k];
    let mut sites = vec![0i64; k];
    enumerate_times(n, k, 0, &mut times, &mut |times| {
        let ranges: Vec<Vec<i64>> = times
            .iter()
            .map(|&i| (lo..=hi).filter(|x| (x - i as i64).rem_euclid(2) == 0).collect())
            .collect();
        enumerate_sites(&ranges, 0, &mut sites, &mut |sites| {
            let w = match &spec.weight {
                UStatWeight::Walk { k } => {
                    if times.windows(2).all(|p| p[0] < p[1]) {
                        let t = TimeTuple::ordered(times.to_vec()).expect("increasing");
                        let scale = (n as f64).powf(*k as f64 / 2.0) * 2f64.powi(-(*k as i32));
                        scale * walk_pk(&t, sites).expect("dimensions match")
                    } else {
                        0.0
                    }
                }
                UStatWeight::Tensor(kernel) => {
                    let cells: Vec<Cell> = times.iter().zip(sites.iter()).map(|(&i, &x)| Cell { i, x }).collect();
                    f_bar_tensor(kernel, n, &cells).expect("order matches")
                }
            };
            if w != 0.0 {
                let prod: f64 = times.iter().zip(sites.iter()).map(|(&i, &x)| env.value(i, x)).product();
                total.add(w * prod);
            }
        });
    });
    Ok(2f64.powf(k as f64 / 2.0) * total.value())
}

fn enumerate_times(n: usize, k: usize, j: usize, times: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if j == k {
        f(times);
        return;
    }
    for i in 1..=n {
        if times[..j].contains(&i) {
            continue;
        }
        times[j] = i;
        enumerate_times(n, k, j + 1, times, f);
    }
}

fn enumerate_sites(ranges: &[Vec<i64>], j: usize, sites: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
    if j == ranges.len() {
        f(sites);
        return;
    }
    for &x in &ranges[j] {
        sites[j] = x;
        enumerate_sites(ranges, j + 1, sites, f);
    }
}

/// Time and space profiles of a rectangle on one parity class.
struct Profile {
    time: Vec<f64>,
    /// `(site, weight)` for even and odd sites.
    space: [Vec<(i64, f64)>; 2],
}

impl Profile {
    fn of(g: &RectFn, n: usize) -> Self {
        let time = (1..=n).map(|i| g.coeff * time_fraction(g, n, i)).collect();
        let (lo, hi) = site_range(g, n);
        let mut space = [Vec::new(), Vec::new()];
        for x in lo..=hi {
            let w = space_fraction(g, n, x);
            if w != 0.0 {
                space[x.rem_euclid(2) as usize].push((x, w));
            }
        }
        Profile { time, space }
    }
}

/// `Q_ab(i) = Σ_{x,y} ḡ_a(i,x) ḡ_b(i,y) γ(x−y)` over parity sites, `i = 1..=n`.
fn row_quadratic_forms(profiles: &[Profile], n: usize, gamma: &CovarianceModel) -> Vec<Vec<Vec<f64>>> {
    let s = profiles.len();
    let mut spatial = vec![vec![[0.0f64; 2]; s]; s];
    for a in 0..s {
        for b in a..s {
            for par in 0..2 {
                let mut acc = KahanSum::default();
                for &(x, u) in &profiles[a].space[par] {
                    for &(y, v) in &profiles[b].space[par] {
                        acc.add(u * v * gamma.gamma(x - y));
                    }
                }
                spatial[a][b][par] = acc.value();
                spatial[b][a][par] = acc.value();
            }
        }
    }
    (0..s)
        .map(|a| {
            (0..s)
                .map(|b| {
                    (1..=n)
                        .map(|i| profiles[a].time[i - 1] * profiles[b].time[i - 1] * spatial[a][b][i % 2])
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `E[S_k^n(f) S_k^n(g)]` from the covariance, for `k ∈ {1, 2}` (rectangle
/// tensors) or `k = 1` (walk weight).
pub fn ustat_exact_covariance(a: &UStatSpec, b: &UStatSpec, gamma: &CovarianceModel) -> Result<f64> {
    if a.n != b.n || a.order() != b.order() {
        return Ok(0.0);
    }
    let n = a.n;
    match (&a.weight, &b.weight) {
        (UStatWeight::Walk { k: 1 }, UStatWeight::Walk { k: 1 }) => {
            // 2 Σ_i Σ_{x,y} (√n p(i,x)/2)(√n p(i,y)/2) γ(x−y) = (n/2) Σ_i Σ_d p(2i, d) γ(d)
            let mut acc = KahanSum::default();
            for i in 1..=n {
                for m in -(i as i64)..=(i as i64) {
                    acc.add(walk_p(2 * i as u64, 2 * m) * gamma.gamma(2 * m));
                }
            }
            Ok(n as f64 / 2.0 * acc.value())
        }
        (UStatWeight::Tensor(fa), UStatWeight::Tensor(fb)) => {
            let k = fa.order();
            let mut supports = fa.supports();
            for g in fb.supports() {
                if !supports.contains(&g) {
                    supports.push(g);
                }
            }
            let profiles: Vec<Profile> = supports.iter().map(|g| Profile::of(g, n)).collect();
            let q = row_quadratic_forms(&profiles, n, gamma);
            let idx = |g: &RectFn| supports.iter().position(|s| s == g).expect("support listed");
            match k {
                1 => {
                    let mut acc = KahanSum::default();
                    for ta in fa.terms() {
                        for tb in fb.terms() {
                            let (x, y) = (idx(&ta.factors[0].0), idx(&tb.factors[0].0));
                            let s: f64 = q[x][y].iter().sum();
                            acc.add(ta.coeff * tb.coeff * s);
                        }
                    }
                    Ok(2.0 * acc.value())
                }
                2 => {
                    // f̄(i,x; j,y) = Σ_m C_m u_m(i,x) v_m(j,y) with symmetrized pairs
                    let pairs = |f: &TensorKernel| -> Vec<(f64, usize, usize)> {
                        f.terms()
                            .iter()
                            .flat_map(|t| {
                                let s = t.slots();
                                let (u, v) = (idx(&s[0]), idx(&s[1]));
                                [(0.5 * t.coeff, u, v), (0.5 * t.coeff, v, u)]
                            })
                            .collect()
                    };
                    let (pa, pb) = (pairs(fa), pairs(fb));
                    let mut acc = KahanSum::default();
                    for &(c, u, v) in &pa {
                        for &(d, u2, v2) in &pb {
                            let qa = &q[u][u2];
                            let qb = &q[v][v2];
                            let sa: f64 = qa.iter().sum();
                            let sb: f64 = qb.iter().sum();
                            let diag: f64 = qa.iter().zip(qb).map(|(x, y)| x * y).sum();
                            acc.add(c * d * (sa * sb - diag));
                        }
                    }
                    Ok(8.0 * acc.value())
                }
                _ => Err(Error::Argument(format!("exact variance for order {k} is not available; use Monte Carlo"))),
            }
        }
        _ => Err(Error::Argument(
            "exact variance is available for rectangle tensors of order <= 2 and the order-1 walk weight; use Monte Carlo"
                .into(),
        )),
    }
}

/// `E[S_k^n(f)²]`.
pub fn ustat_exact_variance(spec: &UStatSpec, gamma: &CovarianceModel) -> Result<f64> {
    ustat_exact_covariance(spec, spec, gamma)
}

/// `C` in `E[S_k^n(f)²] = C λ^k n^{(1+H)k} ‖f‖²_{H^k}`.
pub fn variance_bound_constant(spec: &UStatSpec, gamma: &CovarianceModel) -> Result<f64> {
    let UStatWeight::Tensor(kernel) = &spec.weight else {
        return Err(Error::Argument("variance bound needs a rectangle tensor".into()));
    };
    let h = gamma.params().hurst;
    let k = kernel.order() as i32;
    let v = ustat_exact_variance(spec, gamma)?;
    Ok(v / (gamma.tail_constant().powi(k) * (spec.n as f64).powf((1.0 + h) * k as f64) * kernel.norm_sq(h)))
}
