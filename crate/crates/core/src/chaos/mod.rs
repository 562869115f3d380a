//! Continuum side: the space-fractional, time-white Gaussian field, its
//! multiple integrals and the chaos second moments of the stochastic heat
//! equation.

mod rect;
mod sampler;
mod tensor;
mod theta;

pub use rect::{fbm_increment_cov, hermite, inner_h, kernel_k, RectFn};
pub use sampler::{multiple_integral_sample, verify_product_formula, FracFieldSampler, ProductFormulaReport};
pub use tensor::{contract, TensorKernel, TensorTerm};
pub use theta::{
    chaos_second_moment, theta_0, theta_1_exact, theta_k, ChaosMoment, ChaosSum, ThetaEstimator, ThetaOptions,
};
