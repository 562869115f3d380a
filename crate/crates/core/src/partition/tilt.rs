use super::scaled_beta;
use crate::env::{exact_gamma, EnvParams, Environment, XiDist};
use crate::error::{Error, Result};

/// `λ(b) = ln E e^{bω}`; closed form `b²γ(0)/2` for Gaussian `ξ` only.
pub fn log_laplace(b: f64, params: &EnvParams) -> Result<f64> {
    match params.xi {
        XiDist::StandardGaussian => Ok(0.5 * b * b * exact_gamma(0, params)),
        XiDist::Rademacher => Err(Error::Argument(
            "the log-Laplace transform has no closed form for Rademacher xi; use Gaussian xi".into(),
        )),
    }
}

/// `ω̃(i, x) = (e^{bω(i,x) − λ(b)} − 1)/b`, evaluated on demand.
pub struct TiltedField<'a, E: ?Sized> {
    env: &'a E,
    b: f64,
    lambda: f64,
}

impl<'a, E: Environment + ?Sized> TiltedField<'a, E> {
    pub fn new(env: &'a E, b: f64) -> Result<Self> {
        let lambda = log_laplace(b, env.params())?;
        Ok(TiltedField { env, b, lambda })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn log_laplace(&self) -> f64 {
        self.lambda
    }

    pub fn transform(&self, omega: f64) -> f64 {
        if self.b == 0.0 {
            omega
        } else {
            (self.b * omega - self.lambda).exp_m1() / self.b
        }
    }

    /// `c_j = b^{j−1}/j!` for `j = 0..=j_max` (`c_0 = 0`): the coefficients of
    /// `ω̃` in the Hermite polynomials `σ^j H_j(ω/σ)`, `σ² = γ(0)`.
    pub fn appell_coeffs(&self, j_max: usize) -> Vec<f64> {
        let mut c = vec![0.0; j_max + 1];
        let mut term = 1.0;
        for (j, cj) in c.iter_mut().enumerate().skip(1) {
            if j > 1 {
                term *= self.b / j as f64;
            }
            *cj = term;
        }
        c
    }

    /// `E[ω̃(i,x)ω̃(i,y)] = (e^{b²γ(x−y)} − 1)/b²` given `γ(x−y)`.
    pub fn covariance(&self, gamma_k: f64) -> f64 {
        if self.b == 0.0 {
            gamma_k
        } else {
            (self.b * self.b * gamma_k).exp_m1() / (self.b * self.b)
        }
    }
}

impl<E: Environment + ?Sized> Environment for TiltedField<'_, E> {
    fn params(&self) -> &EnvParams {
        self.env.params()
    }
    fn n_time(&self) -> usize {
        self.env.n_time()
    }
    fn row_range(&self, i: usize) -> (i64, i64) {
        self.env.row_range(i)
    }
    fn value(&self, i: usize, x: i64) -> f64 {
        self.transform(self.env.value(i, x))
    }
}

/// The tilted field with `b = βn^{−H/2}`.
pub fn tilt_environment<E: Environment + ?Sized>(env: &E, beta: f64, n: usize) -> Result<TiltedField<'_, E>> {
    let b = scaled_beta(beta, n, env.params().hurst / 2.0);
    TiltedField::new(env, b)
}
