use super::{CovarianceModel, EnvParams, Environment, XiDist};
use crate::error::{Error, Result};
use crate::rng::{keys, stream};
use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

enum Method {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky { lower: DMatrix<f64> },
}

/// Exact Gaussian sampler for `ω(i, x_0 + stride·j)`, `j < len`, within one row.
///
/// Uses circulant embedding when the embedding is nonnegative definite and a
/// dense Cholesky factor otherwise. Only valid for Gaussian `ξ`, where each
/// row is a stationary Gaussian sequence with covariance `γ`.
pub struct GaussianWindow {
    len: usize,
    stride: usize,
    method: Method,
}

impl std::fmt::Debug for GaussianWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussianWindow")
            .field("len", &self.len)
            .field("stride", &self.stride)
            .field("circulant", &self.is_circulant())
            .finish()
    }
}

const CHOLESKY_MAX_LEN: usize = 48;

impl GaussianWindow {
    pub fn new(params: &EnvParams, stride: usize, len: usize) -> Result<Self> {
        if params.xi != XiDist::StandardGaussian {
            return Err(Error::Argument("window sampling needs Gaussian xi".into()));
        }
        if len == 0 || stride == 0 {
            return Err(Error::Argument("window length and stride must be positive".into()));
        }
        let base = (2 * len.saturating_sub(1)).max(2).next_power_of_two();
        if len > CHOLESKY_MAX_LEN {
            let cov = CovarianceModel::build(params, stride * base * 2)?;
            for size in [base, 2 * base, 4 * base] {
                if let Some(m) = Self::circulant(&cov, stride, size) {
                    return Ok(GaussianWindow { len, stride, method: m });
                }
            }
        }
        let cov = CovarianceModel::build(params, stride * len)?;
        Ok(GaussianWindow { len, stride, method: Self::cholesky(&cov, stride, len)? })
    }

    fn circulant(cov: &CovarianceModel, stride: usize, size: usize) -> Option<Method> {
        let half = size / 2;
        let mut row: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let lag = if j <= half { j } else { size - j };
                Complex::new(cov.gamma((stride * lag) as i64), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
        if row.iter().any(|c| c.re < -1e-11 * max) {
            return None;
        }
        let sqrt_eig = row.iter().map(|c| (c.re.max(0.0) / size as f64).sqrt()).collect();
        Some(Method::Circulant { sqrt_eig, fft })
    }

    fn cholesky(cov: &CovarianceModel, stride: usize, len: usize) -> Result<Method> {
        let g = DMatrix::from_fn(len, len, |a, b| cov.gamma((stride * a.abs_diff(b)) as i64));
        let lower = factor_with_jitter(&g)?;
        Ok(Method::Cholesky { lower })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    /// Fill two independent rows (each of length at most `len`).
    pub fn fill_pair<R: RngCore>(&self, rng: &mut R, a: &mut [f64], b: &mut [f64]) {
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| Complex::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                fft.process(&mut buf);
                a.iter_mut().zip(&buf).for_each(|(v, c)| *v = c.re);
                b.iter_mut().zip(&buf).for_each(|(v, c)| *v = c.im);
            }
            Method::Cholesky { lower } => {
                for out in [a, b] {
                    let z: Vec<f64> = (0..self.len).map(|_| rng.sample(StandardNormal)).collect();
                    for (r, v) in out.iter_mut().enumerate() {
                        *v = (0..=r).map(|c| lower[(r, c)] * z[c]).sum();
                    }
                }
            }
        }
    }
}

/// Lower Cholesky factor, adding `ε·trace/dim` jitter (ε = 1e-12, ×10 at most
/// twice) when the plain factorization fails.
pub(crate) fn factor_with_jitter(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = g.clone().cholesky() {
        return Ok(c.l());
    }
    let dim = g.nrows().max(1) as f64;
    let base = g.trace() / dim;
    let mut eps = 1e-12;
    for _ in 0..3 {
        let j = g + DMatrix::identity(g.nrows(), g.ncols()) * (eps * base);
        if let Some(c) = j.cholesky() {
            return Ok(c.l());
        }
        eps *= 10.0;
    }
    let eig = g.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Err(Error::Numerical(format!(
        "covariance matrix is not positive semidefinite: smallest eigenvalue {min:e}"
    )))
}

/// Gaussian environment stored only on the parity sites of `x_lo..=x_hi`,
/// rows `1..=n`. Built for replica loops where only a window matters.
pub struct ParityField {
    params: EnvParams,
    n_time: usize,
    x_lo: i64,
    x_hi: i64,
    /// row `i` at offset `(i−1)·len`, sites `first(i) + 2j`
    values: Vec<f64>,
    len: usize,
}

impl ParityField {
    fn first_in(x_lo: i64, i: usize) -> i64 {
        if (x_lo - i as i64).rem_euclid(2) == 0 {
            x_lo
        } else {
            x_lo + 1
        }
    }

    #[cfg(test)]
    fn first_site(half_width: usize, i: usize) -> i64 {
        Self::first_in(-(half_width as i64), i)
    }

    /// Number of parity sites per row (the larger parity class) for `|x| ≤ half_width`.
    pub fn sites_per_row(half_width: usize) -> usize {
        half_width + 1
    }

    /// Parity sites per row for the window `x_lo..=x_hi`.
    pub fn sites_in(x_lo: i64, x_hi: i64) -> usize {
        ((x_hi - x_lo) / 2 + 1) as usize
    }

    /// Cone field on `|x| ≤ half_width`.
    pub fn sample(
        window: &GaussianWindow,
        params: &EnvParams,
        n: usize,
        half_width: usize,
        seed: u64,
    ) -> Result<Self> {
        let hw = half_width as i64;
        Self::sample_window(window, params, n, -hw, hw, seed)
    }

    pub fn sample_window(
        window: &GaussianWindow,
        params: &EnvParams,
        n: usize,
        x_lo: i64,
        x_hi: i64,
        seed: u64,
    ) -> Result<Self> {
        if x_hi < x_lo {
            return Err(Error::Argument(format!("empty window {x_lo}..={x_hi}")));
        }
        let len = Self::sites_in(x_lo, x_hi);
        if window.stride() != 2 || window.len() < len {
            return Err(Error::Argument(format!(
                "window (stride {}, len {}) cannot serve {len} parity sites",
                window.stride(),
                window.len()
            )));
        }
        let mut values = vec![0.0; n * len];
        let mut spare = vec![0.0; len];
        for (pair, chunk) in values.chunks_mut(2 * len).enumerate() {
            let mut rng = stream(seed, keys::WINDOW_ROW, pair as u64);
            let (a, b) = chunk.split_at_mut(len);
            if b.is_empty() {
                window.fill_pair(&mut rng, a, &mut spare);
            } else {
                window.fill_pair(&mut rng, a, b);
            }
        }
        Ok(ParityField { params: *params, n_time: n, x_lo, x_hi, values, len })
    }

    pub fn x_range(&self) -> (i64, i64) {
        (self.x_lo, self.x_hi)
    }
}

impl Environment for ParityField {
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
        let j = ((x - Self::first_in(self.x_lo, i)) / 2) as usize;
        debug_assert!((x - i as i64).rem_euclid(2) == 0);
        self.values[(i - 1) * self.len + j]
    }
}
