use super::{psi_coeff, EnvParams};
use crate::error::{Error, Result};
use crate::special::gamma;
use crate::stats::KahanSum;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// `γ(k) = Σ_y ψ_y ψ_{y+k}` by direct summation.
pub fn exact_gamma(k: i64, params: &EnvParams) -> f64 {
    let m = params.support() as i64;
    let k = k.abs();
    if k > 2 * m {
        return 0.0;
    }
    let psi = params.psi_vector();
    let mut s = KahanSum::default();
    for y in -m..=(m - k) {
        s.add(psi[(y + m) as usize] * psi[(y + k + m) as usize]);
    }
    s.value()
}

/// Density of the spectral measure, `(1/2π)|Σ_j ψ_j e^{ijη}|²`.
pub fn spectral_density(eta: f64, params: &EnvParams) -> f64 {
    let m = params.support();
    let mut s = KahanSum::default();
    s.add(params.origin_value());
    for j in 1..=m {
        s.add(2.0 * psi_coeff(j as i64, params) * (j as f64 * eta).cos());
    }
    let v = s.value();
    v * v / (2.0 * PI)
}

/// `|η|^{1−2H} / D` with `D = 2Γ(2−2H)cos((1−H)π)`.
pub fn limit_spectral_density(eta: f64, hurst: f64) -> Result<f64> {
    crate::error::check_hurst(hurst)?;
    if eta == 0.0 {
        return Err(Error::Domain("limit spectral density is singular at eta = 0".into()));
    }
    let d = 2.0 * gamma(2.0 - 2.0 * hurst) * ((1.0 - hurst) * PI).cos();
    Ok(eta.abs().powf(1.0 - 2.0 * hurst) / d)
}

/// The spectral density seen on the diffusive scale `x/√n`, normalised by the
/// tail constant: `n^{α−1/2} g(η/√n) n^{−1/2} / λ`. Tends to
/// `limit_spectral_density(η, H)` as `n → ∞`.
pub fn rescaled_spectral_density(eta: f64, n: u64, params: &EnvParams) -> f64 {
    let sn = (n as f64).sqrt();
    let scale = (n as f64).powf(params.alpha() - 0.5) / sn;
    scale * spectral_density(eta / sn, params) / params.tail_constant()
}

/// Covariance table `γ(0..=k_max)` with the associated tail constant.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    params: EnvParams,
    gamma: Vec<f64>,
}

impl CovarianceModel {
    /// Tabulate `γ` up to lag `k_max` (FFT autocorrelation for large tables).
    pub fn build(params: &EnvParams, k_max: usize) -> Result<Self> {
        params.validate()?;
        let m = params.support();
        let work = (2 * m + 1) as f64 * (k_max + 1).min(2 * m + 1) as f64;
        let gamma = if work <= 2.0e7 {
            Self::direct_table(params, k_max)
        } else {
            Self::fft_table(params, k_max)
        };
        Ok(CovarianceModel { params: *params, gamma })
    }

    fn direct_table(params: &EnvParams, k_max: usize) -> Vec<f64> {
        let m = params.support();
        let psi = params.psi_vector();
        (0..=k_max)
            .map(|k| {
                if k > 2 * m {
                    return 0.0;
                }
                psi[..psi.len() - k]
                    .iter()
                    .zip(&psi[k..])
                    .map(|(a, b)| a * b)
                    .collect::<KahanSum>()
                    .value()
            })
            .collect()
    }

    fn fft_table(params: &EnvParams, k_max: usize) -> Vec<f64> {
        let m = params.support();
        let len = 2 * m + 1;
        let size = (len + k_max.min(2 * m) + 1).next_power_of_two();
        let mut buf: Vec<Complex<f64>> = params
            .psi_vector()
            .into_iter()
            .map(|v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(size)
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(size).process(&mut buf);
        buf.iter_mut().for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
        planner.plan_fft_inverse(size).process(&mut buf);
        let inv = 1.0 / size as f64;
        (0..=k_max)
            .map(|k| if k > 2 * m { 0.0 } else { buf[k].re * inv })
            .collect()
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn k_max(&self) -> usize {
        self.gamma.len() - 1
    }

    /// `γ(k)`; lags beyond the table fall back to direct summation.
    pub fn gamma(&self, k: i64) -> f64 {
        let a = k.unsigned_abs() as usize;
        match self.gamma.get(a) {
            Some(&g) => g,
            None => exact_gamma(k, &self.params),
        }
    }

    pub fn table(&self) -> &[f64] {
        &self.gamma
    }

    pub fn tail_constant(&self) -> f64 {
        self.params.tail_constant()
    }

    /// `λ k^{2H−2}`.
    pub fn asymptote(&self, k: i64) -> f64 {
        self.tail_constant() * (k.abs() as f64).powf(2.0 * self.params.hurst - 2.0)
    }

    pub fn spectral_density(&self, eta: f64) -> f64 {
        spectral_density(eta, &self.params)
    }
}
