use super::rect::{inner_h, RectFn};
use crate::error::{Error, Result};
use std::cmp::Ordering;

/// `coeff · g_1^{⊗k_1} ⊗ … ⊗ g_s^{⊗k_s}`, standing for its symmetrization.
/// Factors are unit-coefficient supports; their coefficients live in `coeff`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTerm {
    pub coeff: f64,
    pub factors: Vec<(RectFn, usize)>,
}

fn cmp_support(a: &RectFn, b: &RectFn) -> Ordering {
    (a.t_lo, a.t_hi, a.x_lo, a.x_hi)
        .partial_cmp(&(b.t_lo, b.t_hi, b.x_lo, b.x_hi))
        .unwrap_or(Ordering::Equal)
}

impl TensorTerm {
    pub fn new(coeff: f64, factors: &[(RectFn, usize)]) -> Self {
        let mut c = coeff;
        let mut fs: Vec<(RectFn, usize)> = Vec::new();
        for &(g, k) in factors.iter().filter(|(_, k)| *k > 0) {
            c *= g.coeff.powi(k as i32);
            fs.push((g.support(), k));
        }
        fs.sort_by(|a, b| cmp_support(&a.0, &b.0));
        let mut merged: Vec<(RectFn, usize)> = Vec::with_capacity(fs.len());
        for (g, k) in fs {
            match merged.last_mut() {
                Some((h, m)) if *h == g => *m += k,
                _ => merged.push((g, k)),
            }
        }
        TensorTerm { coeff: c, factors: merged }
    }

    pub fn order(&self) -> usize {
        self.factors.iter().map(|(_, k)| k).sum()
    }

    /// One entry per tensor slot.
    pub fn slots(&self) -> Vec<RectFn> {
        self.factors.iter().flat_map(|&(g, k)| std::iter::repeat_n(g, k)).collect()
    }

    fn from_slots(coeff: f64, slots: &[RectFn]) -> Self {
        let pairs: Vec<(RectFn, usize)> = slots.iter().map(|&g| (g, 1)).collect();
        TensorTerm::new(coeff, &pairs)
    }
}

/// Symmetric kernel of order `k`: a linear combination of elementary tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorKernel {
    order: usize,
    terms: Vec<TensorTerm>,
}

impl TensorKernel {
    pub fn zero(order: usize) -> Self {
        TensorKernel { order, terms: Vec::new() }
    }

    /// The constant `c` as an order-0 kernel.
    pub fn constant(c: f64) -> Self {
        TensorKernel { order: 0, terms: vec![TensorTerm { coeff: c, factors: Vec::new() }] }
    }

    /// `g^{⊗k}`.
    pub fn power(g: &RectFn, k: usize) -> Self {
        Self::elementary(1.0, &[(*g, k)])
    }

    /// `coeff · g_1^{⊗k_1} ⊗ … ⊗ g_s^{⊗k_s}`.
    pub fn elementary(coeff: f64, factors: &[(RectFn, usize)]) -> Self {
        let t = TensorTerm::new(coeff, factors);
        TensorKernel { order: t.order(), terms: vec![t] }
    }

    pub fn from_terms(order: usize, terms: Vec<TensorTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.order() != order) {
            return Err(Error::Argument(format!("term of order {} in a kernel of order {order}", t.order())));
        }
        Ok(TensorKernel { order, terms }.simplified())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[TensorTerm] {
        &self.terms
    }

    /// Distinct unit-coefficient factor supports.
    pub fn supports(&self) -> Vec<RectFn> {
        let mut out: Vec<RectFn> = Vec::new();
        for t in &self.terms {
            for (g, _) in &t.factors {
                if !out.contains(g) {
                    out.push(*g);
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        let terms = self.terms.iter().map(|t| TensorTerm { coeff: t.coeff * c, ..t.clone() }).collect();
        TensorKernel { order: self.order, terms }
    }

    pub fn add(&self, other: &TensorKernel) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::Argument(format!("cannot add kernels of order {} and {}", self.order, other.order)));
        }
        let terms = self.terms.iter().chain(&other.terms).cloned().collect();
        Ok(TensorKernel { order: self.order, terms }.simplified())
    }

    pub fn sub(&self, other: &TensorKernel) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// Symmetrized tensor product `f ⊗ g`.
    pub fn tensor(&self, other: &TensorKernel) -> Self {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut fs = a.factors.clone();
                fs.extend(b.factors.iter().copied());
                terms.push(TensorTerm::new(a.coeff * b.coeff, &fs));
            }
        }
        TensorKernel { order: self.order + other.order, terms }.simplified()
    }

    /// Merge equal factor lists and drop zero terms.
    fn simplified(mut self) -> Self {
        let mut out: Vec<TensorTerm> = Vec::new();
        for t in self.terms.drain(..) {
            match out.iter_mut().find(|u| u.factors == t.factors) {
                Some(u) => u.coeff += t.coeff,
                None => out.push(t),
            }
        }
        out.retain(|t| t.coeff != 0.0);
        TensorKernel { order: self.order, terms: out }
    }

    /// `⟨f, g⟩_{H^{⊗k}}` of the symmetrizations.
    pub fn inner(&self, other: &TensorKernel, hurst: f64) -> Result<f64> {
        if self.order != other.order {
            return Err(Error::Argument("inner product of kernels of different orders".into()));
        }
        let k = self.order;
        let fact: f64 = (1..=k).map(|j| j as f64).product();
        let mut total = 0.0;
        for a in &self.terms {
            let sa = a.slots();
            for b in &other.terms {
                let sb = b.slots();
                let g: Vec<f64> =
                    sa.iter().flat_map(|u| sb.iter().map(move |v| inner_h(u, v, hurst))).collect();
                total += a.coeff * b.coeff * permanent(&g, k);
            }
        }
        Ok(total / fact)
    }

    pub fn norm_sq(&self, hurst: f64) -> f64 {
        self.inner(self, hurst).expect("same order")
    }

    /// `E[I_k(f)²] = k! ‖f‖²`.
    pub fn isometry_second_moment(&self, hurst: f64) -> f64 {
        let fact: f64 = (1..=self.order).map(|j| j as f64).product();
        fact * self.norm_sq(hurst)
    }
}

/// Permanent of a row-major `k × k` matrix (Ryser).
pub(crate) fn permanent(m: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for set in 1u32..(1 << k) {
        let mut prod = 1.0;
        for r in 0..k {
            let row: f64 = (0..k).filter(|c| set >> c & 1 == 1).map(|c| m[r * k + c]).sum();
            prod *= row;
        }
        let sign = if (k as u32 - set.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * prod;
    }
    total
}

/// Ordered `r`-tuples of distinct indices below `n`.
fn ordered_tuples(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|t: Vec<usize>| {
                (0..n)
                    .filter(|i| !t.contains(i))
                    .map(|i| {
                        let mut u = t.clone();
                        u.push(i);
                        u
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

/// Symmetric contraction `f ⊗_r g`: pairs `r` slots of `f` with `r` slots of
/// `g` through `⟨·,·⟩_H`, averaging over slot choices.
pub fn contract(f: &TensorKernel, g: &TensorKernel, r: usize, hurst: f64) -> Result<TensorKernel> {
    let (m, l) = (f.order, g.order);
    if r > m.min(l) {
        return Err(Error::Argument(format!("contraction index r={r} exceeds min({m}, {l})")));
    }
    if r == 0 {
        return Ok(f.tensor(g));
    }
    let falling = |n: usize| (n - r + 1..=n).map(|j| j as f64).product::<f64>();
    let weight = 1.0 / (falling(m) * falling(l));
    let tf = ordered_tuples(m, r);
    let tg = ordered_tuples(l, r);
    let mut terms = Vec::new();
    for a in &f.terms {
        let sa = a.slots();
        for b in &g.terms {
            let sb = b.slots();
            for p in &tf {
                let rest_a: Vec<RectFn> = (0..m).filter(|i| !p.contains(i)).map(|i| sa[i]).collect();
                for q in &tg {
                    let pairing: f64 = p.iter().zip(q).map(|(&i, &j)| inner_h(&sa[i], &sb[j], hurst)).product();
                    if pairing == 0.0 {
                        continue;
                    }
                    let mut rest = rest_a.clone();
                    rest.extend((0..l).filter(|j| !q.contains(j)).map(|j| sb[j]));
                    terms.push(TensorTerm::from_slots(a.coeff * b.coeff * pairing * weight, &rest));
                }
            }
        }
    }
    Ok(TensorKernel { order: m + l - 2 * r, terms }.simplified())
}
