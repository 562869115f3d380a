use super::rect::{hermite_table, inner_h, RectFn};
use super::tensor::{contract, TensorKernel};
use crate::env::factor_with_jitter;
use crate::error::{Error, Result};
use crate::rng::{keys, stream};
use crate::stats::Moments;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

/// Exact Gaussian sampler of `W(f_1), …, W(f_d)` for rectangles `f_a`.
///
/// The Gram matrix is factored as `G = LLᵀ` by a rank-revealing Cholesky, so
/// `W(f_a) = Σ_b L_{ab} ζ_b` where the `ζ_b` are the coordinates of an
/// orthonormal basis of `span{f_a}`. Columns of dependent rectangles are zero.
#[derive(Debug, Clone)]
pub struct FracFieldSampler {
    hurst: f64,
    rects: Vec<RectFn>,
    gram: DMatrix<f64>,
    lower: DMatrix<f64>,
    dependent: Vec<usize>,
    seed: u64,
}

const PIVOT_TOL: f64 = 1e-12;

impl FracFieldSampler {
    /// Sampler over the supports of `rects` (coefficients are dropped).
    pub fn new(rects: &[RectFn], hurst: f64, seed: u64) -> Result<Self> {
        crate::error::check_hurst(hurst)?;
        let rects: Vec<RectFn> = rects.iter().map(RectFn::support).collect();
        let d = rects.len();
        let gram = DMatrix::from_fn(d, d, |a, b| inner_h(&rects[a], &rects[b], hurst));
        let (lower, dependent) = match semidefinite_cholesky(&gram) {
            Some(f) => f,
            None => (factor_with_jitter(&gram)?, Vec::new()),
        };
        Ok(FracFieldSampler { hurst, rects, gram, lower, dependent, seed })
    }

    /// Sampler over every factor support appearing in `kernels`.
    pub fn for_kernels(kernels: &[&TensorKernel], extra: &[RectFn], hurst: f64, seed: u64) -> Result<Self> {
        let mut rects: Vec<RectFn> = Vec::new();
        for g in kernels.iter().flat_map(|k| k.supports()).chain(extra.iter().map(RectFn::support)) {
            if !rects.contains(&g) {
                rects.push(g);
            }
        }
        Self::new(&rects, hurst, seed)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn rects(&self) -> &[RectFn] {
        &self.rects
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Indices of rectangles lying in the span of earlier ones.
    pub fn dependent(&self) -> &[usize] {
        &self.dependent
    }

    pub fn rank(&self) -> usize {
        self.rects.len() - self.dependent.len()
    }

    /// `‖LLᵀ − G‖_F / ‖G‖_F`.
    pub fn residual(&self) -> f64 {
        let r = &self.lower * self.lower.transpose() - &self.gram;
        r.norm() / self.gram.norm().max(f64::MIN_POSITIVE)
    }

    fn index_of(&self, g: &RectFn) -> Result<usize> {
        let s = g.support();
        self.rects
            .iter()
            .position(|r| *r == s)
            .ok_or_else(|| Error::Argument(format!("rectangle {s:?} is not in the sampler basis")))
    }

    /// Orthonormal coordinates `ζ` of sample `i`.
    pub fn coordinates(&self, i: u64) -> Vec<f64> {
        let mut rng = stream(self.seed, keys::FIELD, i);
        (0..self.rects.len()).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn field_from(&self, zeta: &[f64]) -> Vec<f64> {
        let d = self.rects.len();
        (0..d).map(|a| (0..=a).map(|b| self.lower[(a, b)] * zeta[b]).sum()).collect()
    }

    /// `n_samples` draws of `(W(f_1), …, W(f_d))`, one row per draw.
    pub fn sample_field(&self, n_samples: usize) -> Vec<Vec<f64>> {
        (0..n_samples as u64).into_par_iter().map(|i| self.field_from(&self.coordinates(i))).collect()
    }

    /// Joint draws of `I_{k_j}(kernels[j])`; `out[j][i]` is sample `i` of kernel `j`.
    pub fn multiple_integrals(&self, kernels: &[&TensorKernel], n_samples: usize) -> Result<Vec<Vec<f64>>> {
        let polys: Vec<ChaosPolynomial> =
            kernels.iter().map(|k| ChaosPolynomial::build(k, self)).collect::<Result<_>>()?;
        let max_order = kernels.iter().map(|k| k.order()).max().unwrap_or(0);
        let rows: Vec<Vec<f64>> = (0..n_samples as u64)
            .into_par_iter()
            .map_init(Vec::new, |scratch, i| {
                let zeta = self.coordinates(i);
                let tables: Vec<Vec<f64>> = zeta
                    .iter()
                    .map(|&z| {
                        hermite_table(max_order, z, scratch);
                        scratch.clone()
                    })
                    .collect();
                polys.iter().map(|p| p.eval(&tables)).collect()
            })
            .collect();
        Ok((0..kernels.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
    }
}

/// `G = LLᵀ` allowing zero pivots; `None` if a pivot is clearly negative.
fn semidefinite_cholesky(g: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<usize>)> {
    let d = g.nrows();
    let scale = (0..d).map(|a| g[(a, a)]).fold(0.0, f64::max);
    let mut l = DMatrix::zeros(d, d);
    let mut dependent = Vec::new();
    for a in 0..d {
        let pivot = g[(a, a)] - (0..a).map(|b| l[(a, b)] * l[(a, b)]).sum::<f64>();
        if pivot <= PIVOT_TOL * scale {
            if pivot < -1e-10 * scale {
                return None;
            }
            dependent.push(a);
            continue;
        }
        let s = pivot.sqrt();
        l[(a, a)] = s;
        for c in a + 1..d {
            let v = g[(c, a)] - (0..a).map(|b| l[(c, b)] * l[(a, b)]).sum::<f64>();
            l[(c, a)] = v / s;
        }
    }
    Some((l, dependent))
}

/// `I_k(f)` as a polynomial `Σ c Π_b H_{n_b}(ζ_b)` in the orthonormal coordinates.
struct ChaosPolynomial {
    monomials: Vec<(f64, Vec<(usize, usize)>)>,
}

impl ChaosPolynomial {
    fn build(kernel: &TensorKernel, sampler: &FracFieldSampler) -> Result<Self> {
        let d = sampler.rects.len();
        let mut acc: HashMap<Vec<u8>, f64> = HashMap::new();
        for term in kernel.terms() {
            let rows: Vec<usize> = term.slots().iter().map(|g| sampler.index_of(g)).collect::<Result<_>>()?;
            let mut counts = vec![0u8; d];
            expand(&rows, 0, term.coeff, &sampler.lower, &mut counts, &mut acc);
        }
        let monomials = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(counts, c)| {
                let powers: Vec<(usize, usize)> = counts.iter().enumerate().filter(|(_, n)| **n > 0).map(|(b, n)| (b, *n as usize)).collect();
                (c, powers)
            })
            .collect::<Vec<_>>();
        let mut monomials = monomials;
        monomials.sort_by(|a, b| a.1.cmp(&b.1));
        Ok(ChaosPolynomial { monomials })
    }

    fn eval(&self, hermite: &[Vec<f64>]) -> f64 {
        self.monomials.iter().map(|(c, p)| c * p.iter().map(|&(b, n)| hermite[b][n]).product::<f64>()).sum()
    }
}

/// Multinomial expansion of `Π_j (Σ_b L_{row_j, b} e_b)`.
fn expand(
    rows: &[usize],
    j: usize,
    coeff: f64,
    lower: &DMatrix<f64>,
    counts: &mut Vec<u8>,
    acc: &mut HashMap<Vec<u8>, f64>,
) {
    if j == rows.len() {
        *acc.entry(counts.clone()).or_insert(0.0) += coeff;
        return;
    }
    let a = rows[j];
    for b in 0..=a {
        let l = lower[(a, b)];
        if l == 0.0 {
            continue;
        }
        counts[b] += 1;
        expand(rows, j + 1, coeff * l, lower, counts, acc);
        counts[b] -= 1;
    }
}

/// Samples of `I_k(kernel)`.
pub fn multiple_integral_sample(
    kernel: &TensorKernel,
    sampler: &FracFieldSampler,
    n_samples: usize,
) -> Result<Vec<f64>> {
    Ok(sampler.multiple_integrals(&[kernel], n_samples)?.remove(0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductFormulaReport {
    pub identity: String,
    pub k: usize,
    pub n_samples: usize,
    pub residual_mean: f64,
    pub residual_se: f64,
    pub residual_var: f64,
    pub residual_var_se: f64,
    pub max_abs_residual: f64,
    pub pass: bool,
}

impl ProductFormulaReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain struct")
    }
}

/// Monte Carlo check of `I_l(f) I_1(g) = I_{l+1}(f ⊗ g) + l I_{l−1}(f ⊗_1 g)`.
pub fn verify_product_formula(
    f: &TensorKernel,
    g: &RectFn,
    hurst: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ProductFormulaReport> {
    let l = f.order();
    if l == 0 {
        return Err(Error::Argument("product formula needs a kernel of order >= 1".into()));
    }
    let g1 = TensorKernel::power(g, 1);
    let fg = f.tensor(&g1);
    let fc = contract(f, &g1, 1, hurst)?;
    let sampler = FracFieldSampler::for_kernels(&[f], &[*g], hurst, seed)?;
    let s = sampler.multiple_integrals(&[f, &g1, &fg, &fc], n_samples)?;
    let residual: Vec<f64> =
        (0..n_samples).map(|i| s[0][i] * s[1][i] - s[2][i] - l as f64 * s[3][i]).collect();
    let scale = 1.0 + s[0].iter().zip(&s[1]).map(|(a, b)| (a * b).abs()).sum::<f64>() / n_samples.max(1) as f64;
    let m = Moments::of(&residual);
    let max_abs = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let tol = 1e-12 * scale;
    let pass = m.mean.abs() <= 3.0 * m.se_mean() + tol && m.var <= 3.0 * m.se_var() + tol * tol;
    Ok(ProductFormulaReport {
        identity: "I_l(f) I_1(g) = I_{l+1}(f(x)g) + l I_{l-1}(f(x)_1 g)".into(),
        k: l,
        n_samples,
        residual_mean: m.mean,
        residual_se: m.se_mean(),
        residual_var: m.var,
        residual_var_se: m.se_var(),
        max_abs_residual: max_abs,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::rect::hermite;
    use crate::stats::correlation;

    const H: f64 = 0.75;

    fn rect(t: (f64, f64), x: (f64, f64)) -> RectFn {
        RectFn::indicator(t, x).unwrap()
    }

    fn within(xs: &[f64], want: f64, what: &str) {
        let m = Moments::of(xs);
        assert!((m.mean - want).abs() < 3.5 * m.se_mean(), "{what}: {} ± {} vs {want}", m.mean, m.se_mean());
    }

    fn var_within(xs: &[f64], want: f64, what: &str) {
        let m = Moments::of(xs);
        assert!((m.var - want).abs() < 3.5 * m.se_var(), "{what}: {} ± {} vs {want}", m.var, m.se_var());
    }

    #[test]
    fn single_and_disjoint_rectangles() {
        let f = rect((0.0, 0.5), (0.0, 2.0));
        let g = rect((0.5, 1.0), (0.0, 2.0));
        let s = FracFieldSampler::new(&[f, g], H, 1).unwrap();
        let draws = s.sample_field(40_000);
        let a: Vec<f64> = draws.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = draws.iter().map(|r| r[1]).collect();
        var_within(&a, inner_h(&f, &f, H), "Var W(f)");
        let (r, se) = correlation(&a, &b);
        assert!(r.abs() < 3.5 * se);
        assert_eq!(s.sample_field(3), s.sample_field(3));
    }

    #[test]
    fn gram_recovery_with_five_rectangles() {
        let rects = [
            rect((0.0, 1.0), (0.0, 1.0)),
            rect((0.0, 1.0), (1.0, 2.0)),
            rect((0.2, 0.7), (0.5, 1.5)),
            rect((0.5, 1.0), (-1.0, 3.0)),
            rect((0.0, 0.3), (0.0, 0.4)),
        ];
        let s = FracFieldSampler::new(&rects, H, 2).unwrap();
        assert!(s.residual() <= 1e-8);
        let draws = s.sample_field(100_000);
        for a in 0..5 {
            for b in a..5 {
                let xs: Vec<f64> = draws.iter().map(|r| r[a] * r[b]).collect();
                within(&xs, s.gram()[(a, b)], &format!("G[{a},{b}]"));
            }
        }
    }

    #[test]
    fn dependent_rectangles_reduce_rank() {
        let a = rect((0.0, 1.0), (0.0, 1.0));
        let b = rect((0.0, 1.0), (1.0, 2.0));
        let ab = rect((0.0, 1.0), (0.0, 2.0));
        let s = FracFieldSampler::new(&[a, b, ab, a], H, 3).unwrap();
        assert_eq!(s.rank(), 2);
        assert_eq!(s.dependent(), &[2, 3]);
        assert!(s.residual() < 1e-12);
        let w = s.sample_field(5);
        for r in w {
            assert!((r[2] - r[0] - r[1]).abs() < 1e-12);
            assert_eq!(r[3], r[0]);
        }
    }

    #[test]
    fn first_order_integral_is_the_field() {
        let f = rect((0.0, 1.0), (0.0, 1.5)).scaled(2.0);
        let s = FracFieldSampler::new(&[f], H, 4).unwrap();
        let i1 = multiple_integral_sample(&TensorKernel::power(&f, 1), &s, 10).unwrap();
        let w = s.sample_field(10);
        for (a, r) in i1.iter().zip(&w) {
            assert!((a - 2.0 * r[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn second_order_of_unit_vector() {
        let g = rect((0.0, 1.0), (0.0, 1.0));
        let s = FracFieldSampler::new(&[g], H, 5).unwrap();
        assert!((inner_h(&g, &g, H) - 1.0).abs() < 1e-15);
        let i2 = multiple_integral_sample(&TensorKernel::power(&g, 2), &s, 50_000).unwrap();
        let w = s.sample_field(50_000);
        for (a, r) in i2.iter().zip(&w).take(100) {
            assert!((a - (r[0] * r[0] - 1.0)).abs() < 1e-13);
        }
        within(&i2, 0.0, "E I_2");
        var_within(&i2, 2.0, "Var I_2");
    }

    #[test]
    fn orthogonal_product() {
        let f = rect((0.0, 0.5), (0.0, 1.0));
        let g = rect((0.5, 1.0), (2.0, 4.0));
        let s = FracFieldSampler::new(&[f, g], H, 6).unwrap();
        let k = TensorKernel::elementary(1.0, &[(f, 1), (g, 1)]);
        let i2 = multiple_integral_sample(&k, &s, 50_000).unwrap();
        let w = s.sample_field(50_000);
        for (a, r) in i2.iter().zip(&w).take(100) {
            assert!((a - r[0] * r[1]).abs() < 1e-13);
        }
        let sq: Vec<f64> = i2.iter().map(|v| v * v).collect();
        within(&sq, inner_h(&f, &f, H) * inner_h(&g, &g, H), "E[I_2(f⊗g)²]");
    }

    #[test]
    fn isometry_and_cross_order_orthogonality() {
        let a = rect((0.0, 1.0), (0.0, 1.0));
        let b = rect((0.2, 0.9), (0.5, 1.7)).scaled(-0.8);
        let c = rect((0.0, 0.6), (-1.0, 0.3));
        let kernels = [
            TensorKernel::power(&a, 1).add(&TensorKernel::power(&b, 1)).unwrap(),
            TensorKernel::elementary(1.0, &[(a, 1), (b, 1)]).add(&TensorKernel::power(&c, 2)).unwrap(),
            TensorKernel::elementary(0.7, &[(a, 2), (c, 1)]).add(&TensorKernel::power(&b, 3)).unwrap(),
        ];
        let refs: Vec<&TensorKernel> = kernels.iter().collect();
        let s = FracFieldSampler::for_kernels(&refs, &[], H, 7).unwrap();
        let draws = s.multiple_integrals(&refs, 100_000).unwrap();
        for (k, (kern, xs)) in kernels.iter().zip(&draws).enumerate() {
            within(xs, 0.0, &format!("E I_{}", k + 1));
            let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
            within(&sq, kern.isometry_second_moment(H), &format!("E I_{}²", k + 1));
        }
        for (j, k) in [(0, 1), (0, 2), (1, 2)] {
            let prod: Vec<f64> = draws[j].iter().zip(&draws[k]).map(|(x, y)| x * y).collect();
            within(&prod, 0.0, &format!("E I_{} I_{}", j + 1, k + 1));
        }
    }

    #[test]
    fn product_formula_is_pathwise_exact() {
        let h = rect((0.0, 1.0), (0.0, 1.0));
        let r = verify_product_formula(&TensorKernel::power(&h, 2), &h, H, 2000, 8).unwrap();
        assert!(r.pass && r.max_abs_residual <= 1e-12, "{r:?}");
        let s = FracFieldSampler::new(&[h], H, 8).unwrap();
        let w = s.sample_field(1);
        assert!((hermite(3, w[0][0]) - (w[0][0] * hermite(2, w[0][0]) - 2.0 * hermite(1, w[0][0]))).abs() < 1e-13);

        let h1 = rect((0.0, 0.5), (0.0, 1.0));
        let h2 = rect((0.5, 1.0), (0.0, 1.0));
        let f = TensorKernel::power(&h1, 2);
        let c = contract(&f, &TensorKernel::power(&h2, 1), 1, H).unwrap();
        assert!(c.terms().is_empty());
        assert!(verify_product_formula(&f, &h2, H, 2000, 9).unwrap().pass);

        let m = TensorKernel::elementary(1.0, &[(h1, 1), (rect((0.2, 0.8), (0.4, 1.9)), 2)]);
        let r = verify_product_formula(&m, &rect((0.1, 0.7), (0.0, 1.2)), H, 5000, 10).unwrap();
        assert!(r.pass, "{r:?}");
        let j = r.to_json();
        for key in ["identity", "k", "n_samples", "residual_mean", "residual_se", "pass"] {
            assert!(j.get(key).is_some());
        }
    }
}
