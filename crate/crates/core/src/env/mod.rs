//! The environment `ω(i, x) = Σ_y ψ_{y−x} ξ_{i,y}`: i.i.d. in time, a moving
//! average of i.i.d. noise in space with kernel `ψ_j ≈ δ|j|^{−α}`, `α = 3/2 − H`.

mod covariance;
mod field;
mod io;
mod window;

pub use covariance::{
    exact_gamma, limit_spectral_density, rescaled_spectral_density, spectral_density,
    CovarianceModel,
};
pub use field::{sample_environment, sample_environment_with, ConvolutionMethod, EnvironmentField, SampleOptions};
pub use io::{read_env_binary, write_gamma_csv, EnvDump, EnvHeader, ENV_MAGIC};
pub use window::{GaussianWindow, ParityField};
pub(crate) use field::fill_xi;
pub(crate) use window::factor_with_jitter;

use crate::error::{check_hurst, Error, Result};
use crate::special::{beta, zeta};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiDist {
    StandardGaussian,
    Rademacher,
}

/// Shape of the generating kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// `ψ_j = δ|j|^{−α}` for `1 ≤ |j| ≤ M`.
    PowerLaw,
    /// `ψ = δ` at the origin only: an i.i.d. environment.
    White,
}

/// Value of `ψ_0` for the power-law kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginWeight {
    /// `ψ_0 = δ`.
    Delta,
    /// `ψ_0 = −2ζ(α)δ`, which removes the constant term of `ψ̂(η)` at low
    /// frequency so the spectrum is a pure power `|η|^{1−2H}` near zero.
    Compensated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub hurst: f64,
    pub delta: f64,
    /// `M`: ψ vanishes for `|j| > M`.
    pub cutoff: usize,
    pub xi: XiDist,
    pub shape: KernelShape,
    pub origin: OriginWeight,
}

impl EnvParams {
    /// Power-law kernel with `δ` calibrated so that `γ(k) ~ H(2H−1)k^{2H−2}`.
    pub fn calibrated(hurst: f64, cutoff: usize) -> Result<Self> {
        let p = EnvParams {
            hurst,
            delta: calibrate_delta(hurst)?,
            cutoff,
            xi: XiDist::StandardGaussian,
            shape: KernelShape::PowerLaw,
            origin: OriginWeight::Compensated,
        };
        p.validate()?;
        Ok(p)
    }

    /// i.i.d. environment of variance `δ²`; `hurst` only sets downstream scalings.
    pub fn white(hurst: f64, delta: f64) -> Result<Self> {
        let p = EnvParams {
            hurst,
            delta,
            cutoff: 1,
            xi: XiDist::StandardGaussian,
            shape: KernelShape::White,
            origin: OriginWeight::Delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_xi(mut self, xi: XiDist) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_origin(mut self, origin: OriginWeight) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Domain(format!("kernel amplitude delta={} must be > 0", self.delta)));
        }
        if self.cutoff < 1 {
            return Err(Error::Domain("kernel cutoff M must be >= 1".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        1.5 - self.hurst
    }

    /// `H(2H−1)`, the target tail constant of γ.
    pub fn lambda_target(&self) -> f64 {
        self.hurst * (2.0 * self.hurst - 1.0)
    }

    /// Tail constant `λ` with `γ(k) ~ λ k^{2H−2}`; zero for a white kernel.
    pub fn tail_constant(&self) -> f64 {
        match self.shape {
            KernelShape::PowerLaw => self.delta * self.delta * two_sided_constant(self.alpha()),
            KernelShape::White => 0.0,
        }
    }

    /// Largest `|j|` with `ψ_j ≠ 0`.
    pub fn support(&self) -> usize {
        match self.shape {
            KernelShape::PowerLaw => self.cutoff,
            KernelShape::White => 0,
        }
    }

    pub fn origin_value(&self) -> f64 {
        match (self.shape, self.origin) {
            (KernelShape::White, _) | (_, OriginWeight::Delta) => self.delta,
            (KernelShape::PowerLaw, OriginWeight::Compensated) => -2.0 * zeta(self.alpha()) * self.delta,
        }
    }

    /// `ψ_{−M..=M}`, index `j + M`.
    pub fn psi_vector(&self) -> Vec<f64> {
        let m = self.support();
        let a = self.alpha();
        let mut v = vec![0.0; 2 * m + 1];
        for j in 1..=m {
            let w = self.delta * (j as f64).powf(-a);
            v[m + j] = w;
            v[m - j] = w;
        }
        v[m] = self.origin_value();
        v
    }
}

/// `ψ_j` for the given parameters; zero beyond the cutoff.
pub fn psi_coeff(j: i64, params: &EnvParams) -> f64 {
    let a = j.unsigned_abs() as usize;
    if a > params.support() {
        0.0
    } else if a == 0 {
        params.origin_value()
    } else {
        params.delta * (a as f64).powf(-params.alpha())
    }
}

/// `∫ |u|^{−α}|1+u|^{−α} du = 2B(1−α, 2α−1) + B(1−α, 1−α)`.
pub fn two_sided_constant(alpha: f64) -> f64 {
    2.0 * beta(1.0 - alpha, 2.0 * alpha - 1.0) + beta(1.0 - alpha, 1.0 - alpha)
}

/// `δ` making the tail constant of the two-sided kernel equal `H(2H−1)`.
pub fn calibrate_delta(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let alpha = 1.5 - hurst;
    Ok((hurst * (2.0 * hurst - 1.0) / two_sided_constant(alpha)).sqrt())
}

/// Random field indexed by `(i, x)`, rows `1..=n_time`.
pub trait Environment: Sync {
    fn params(&self) -> &EnvParams;
    fn n_time(&self) -> usize;
    /// Inclusive range of sites available in row `i`.
    fn row_range(&self, i: usize) -> (i64, i64);
    /// `ω(i, x)`; only called inside `row_range(i)` and with `i ↔ x`
    /// for parity-only fields.
    fn value(&self, i: usize, x: i64) -> f64;

    /// Whether rows `1..=n` cover the sites `|x| ≤ min(i, half_width)`.
    fn covers_cone(&self, n: usize, half_width: usize) -> bool {
        n <= self.n_time()
            && (1..=n).all(|i| {
                let w = i.min(half_width) as i64;
                let (lo, hi) = self.row_range(i);
                lo <= -w && hi >= w
            })
    }
}
