use super::{EnvParams, Environment, XiDist};
use crate::error::{Error, Result};
use crate::rng::{keys, stream};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionMethod {
    /// FFT unless the direct sum is cheaper.
    Auto,
    Fft,
    Direct,
}

#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    pub method: ConvolutionMethod,
    pub memory_budget_bytes: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions { method: ConvolutionMethod::Auto, memory_budget_bytes: 4 << 30 }
    }
}

/// Dense sample of `ω(i, x)` for `i ∈ 1..=n_time`, `x ∈ x_lo..=x_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentField {
    pub params: EnvParams,
    pub n_time: usize,
    pub x_lo: i64,
    pub x_hi: i64,
    pub seed: u64,
    values: Vec<f64>,
}

impl EnvironmentField {
    /// Wrap explicit values (row-major, rows `1..=n_time`).
    pub fn from_values(
        params: EnvParams,
        n_time: usize,
        x_lo: i64,
        x_hi: i64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let width = (x_hi - x_lo + 1) as usize;
        if x_hi < x_lo || values.len() != n_time * width {
            return Err(Error::Argument(format!(
                "{} values do not fill {n_time} rows of width {width}",
                values.len()
            )));
        }
        Ok(EnvironmentField { params, n_time, x_lo, x_hi, seed: 0, values })
    }

    pub fn width(&self) -> usize {
        (self.x_hi - self.x_lo + 1) as usize
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[(i - 1) * w..i * w]
    }

    pub fn get(&self, i: usize, x: i64) -> f64 {
        self.values[(i - 1) * self.width() + (x - self.x_lo) as usize]
    }
}

impl Environment for EnvironmentField {
    fn params(&self) -> &EnvParams {
        &self.params
    }
    fn n_time(&self) -> usize {
        self.n_time
    }
    fn row_range(&self, _i: usize) -> (i64, i64) {
        (self.x_lo, self.x_hi)
    }
    fn value(&self, i: usize, x: i64) -> f64 {
        self.get(i, x)
    }
}

pub fn sample_environment(
    params: &EnvParams,
    n: usize,
    x_lo: i64,
    x_hi: i64,
    seed: u64,
) -> Result<EnvironmentField> {
    sample_environment_with(params, n, x_lo, x_hi, seed, &SampleOptions::default())
}

pub(crate) fn fill_xi<R: RngCore>(rng: &mut R, xi: XiDist, out: &mut [f64]) {
    match xi {
        XiDist::StandardGaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        XiDist::Rademacher => {
            for chunk in out.chunks_mut(64) {
                let bits = rng.next_u64();
                for (b, v) in chunk.iter_mut().enumerate() {
                    *v = if (bits >> b) & 1 == 1 { 1.0 } else { -1.0 };
                }
            }
        }
    }
}

struct FftConvolver {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

impl FftConvolver {
    fn new(psi: &[f64], xi_len: usize) -> Self {
        let size = xi_len.next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut kernel_hat: Vec<Complex<f64>> = psi
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(size)
            .collect();
        forward.process(&mut kernel_hat);
        let inv = 1.0 / size as f64;
        kernel_hat.iter_mut().for_each(|c| *c *= inv);
        FftConvolver { size, forward, inverse, kernel_hat }
    }

    /// Convolve two real rows at once (real and imaginary lanes); returns the
    /// valid part starting at offset `2M`.
    fn convolve_pair(&self, a: &[f64], b: &[f64], m: usize, out_a: &mut [f64], out_b: Option<&mut [f64]>) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (j, slot) in buf.iter_mut().enumerate().take(a.len()) {
            *slot = Complex::new(a[j], if b.is_empty() { 0.0 } else { b[j] });
        }
        self.forward.process(&mut buf);
        buf.iter_mut().zip(&self.kernel_hat).for_each(|(c, k)| *c *= k);
        self.inverse.process(&mut buf);
        for (q, v) in out_a.iter_mut().enumerate() {
            *v = buf[q + 2 * m].re;
        }
        if let Some(ob) = out_b {
            for (q, v) in ob.iter_mut().enumerate() {
                *v = buf[q + 2 * m].im;
            }
        }
    }
}

fn convolve_direct(psi: &[f64], xi: &[f64], out: &mut [f64]) {
    for (q, v) in out.iter_mut().enumerate() {
        *v = psi.iter().zip(&xi[q..q + psi.len()]).map(|(p, x)| p * x).sum();
    }
}

/// Sample `ω` on `[1, n] × [x_lo, x_hi]`. Row `i` uses the noise stream
/// `(seed, i)`, so rows are reproducible individually and in any order.
pub fn sample_environment_with(
    params: &EnvParams,
    n: usize,
    x_lo: i64,
    x_hi: i64,
    seed: u64,
    opts: &SampleOptions,
) -> Result<EnvironmentField> {
    params.validate()?;
    if n == 0 || x_hi < x_lo {
        return Err(Error::Argument(format!("empty window: n={n}, x in [{x_lo}, {x_hi}]")));
    }
    let m = params.support();
    let width = (x_hi - x_lo + 1) as usize;
    let xi_len = width + 2 * m;
    let required = (n as u64) * (width as u64) * 8 + 2 * (xi_len as u64).next_power_of_two() * 16;
    if required > opts.memory_budget_bytes {
        return Err(Error::Resource { required_bytes: required, budget_bytes: opts.memory_budget_bytes });
    }
    let psi = params.psi_vector();
    let use_fft = match opts.method {
        ConvolutionMethod::Fft => true,
        ConvolutionMethod::Direct => false,
        ConvolutionMethod::Auto => {
            let direct_cost = (width * psi.len()) as f64;
            let size = xi_len.next_power_of_two() as f64;
            direct_cost > 3.0 * size * size.log2()
        }
    };
    let convolver = use_fft.then(|| FftConvolver::new(&psi, xi_len));
    let mut values = vec![0.0; n * width];
    let draw = |i: usize, buf: &mut Vec<f64>| {
        buf.resize(xi_len, 0.0);
        let mut rng = stream(seed, keys::ENV_ROW, i as u64);
        fill_xi(&mut rng, params.xi, buf);
    };
    values.par_chunks_mut(2 * width).enumerate().for_each(|(c, chunk)| {
        let first = 2 * c + 1;
        let (row_a, row_b) = chunk.split_at_mut(width);
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        draw(first, &mut xa);
        if !row_b.is_empty() {
            draw(first + 1, &mut xb);
        }
        match &convolver {
            Some(conv) => {
                let ob = if row_b.is_empty() { None } else { Some(row_b) };
                conv.convolve_pair(&xa, &xb, m, row_a, ob);
            }
            None => {
                convolve_direct(&psi, &xa, row_a);
                if !row_b.is_empty() {
                    convolve_direct(&psi, &xb, row_b);
                }
            }
        }
    });
    Ok(EnvironmentField { params: *params, n_time: n, x_lo, x_hi, seed, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{exact_gamma, EnvParams};
    use crate::stats::Moments;

    #[test]
    fn fft_and_direct_agree() {
        let p = EnvParams::calibrated(0.75, 300).unwrap();
        let mk = |method| {
            sample_environment_with(&p, 5, -40, 40, 9, &SampleOptions { method, ..Default::default() }).unwrap()
        };
        let a = mk(ConvolutionMethod::Fft);
        let b = mk(ConvolutionMethod::Direct);
        let scale = exact_gamma(0, &p).sqrt();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn reproducible_and_row_local() {
        let p = EnvParams::calibrated(0.8, 64).unwrap();
        let a = sample_environment(&p, 7, -10, 10, 42).unwrap();
        let b = sample_environment(&p, 7, -10, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_environment(&p, 3, -10, 10, 42).unwrap();
        assert_eq!(a.row(3), c.row(3));
        let d = sample_environment(&p, 7, -10, 10, 43).unwrap();
        assert_ne!(a.row(1), d.row(1));
    }

    #[test]
    fn white_field_is_iid() {
        let p = EnvParams::white(0.75, 0.5).unwrap();
        let f = sample_environment(&p, 20_000, 0, 1, 5).unwrap();
        let a: Vec<f64> = (1..=20_000).map(|i| f.get(i, 0)).collect();
        let prod: Vec<f64> = (1..=20_000).map(|i| f.get(i, 0) * f.get(i, 1)).collect();
        let m = Moments::of(&prod);
        assert!(m.mean.abs() < 3.0 * m.se_mean());
        let ma = Moments::of(&a);
        assert!((ma.var - 0.25).abs() < 3.0 * ma.se_var());
    }

    #[test]
    fn sample_covariance_matches_gamma() {
        for xi in [XiDist::StandardGaussian, XiDist::Rademacher] {
            let p = EnvParams::calibrated(0.75, 200).unwrap().with_xi(xi);
            let rows = 10_000;
            let f = sample_environment(&p, rows, 0, 10, 17).unwrap();
            for k in 0..=10i64 {
                let prods: Vec<f64> = (1..=rows).map(|i| f.get(i, 0) * f.get(i, k)).collect();
                let m = Moments::of(&prods);
                let g = exact_gamma(k, &p);
                assert!((m.mean - g).abs() < 3.5 * m.se_mean(), "xi={xi:?} k={k}: {} vs {g}", m.mean);
            }
        }
    }

    #[test]
    fn rows_uncorrelated_and_stationary() {
        let p = EnvParams::calibrated(0.75, 100).unwrap();
        let rows = 20_000;
        let f = sample_environment(&p, rows, 0, 60, 23).unwrap();
        let cross: Vec<f64> = (1..rows).step_by(2).map(|i| f.get(i, 0) * f.get(i + 1, 0)).collect();
        let m = Moments::of(&cross);
        assert!(m.mean.abs() < 3.0 * m.se_mean());
        let at = |x: i64| Moments::of(&(1..=rows).map(|i| f.get(i, x) * f.get(i, x + 3)).collect::<Vec<_>>());
        let (a, b) = (at(0), at(50));
        assert!((a.mean - b.mean).abs() < 3.0 * (a.se_mean().powi(2) + b.se_mean().powi(2)).sqrt());
    }

    #[test]
    fn budget_is_enforced() {
        let p = EnvParams::calibrated(0.75, 10).unwrap();
        let opts = SampleOptions { memory_budget_bytes: 1000, ..Default::default() };
        match sample_environment_with(&p, 100, 0, 100, 1, &opts) {
            Err(Error::Resource { required_bytes, .. }) => assert!(required_bytes > 1000),
            other => panic!("{other:?}"),
        }
    }
}
