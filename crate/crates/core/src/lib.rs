//! Directed polymers in a 1+1 dimensional random environment that is white
//! in time and long-range correlated in space.
//!
//! The crate is organised bottom-up:
//!
//! - [`walk`]: simple random walk kernels on the parity lattice.
//! - [`env`]: the linear-process environment, its covariance and samplers.
//! - [`partition`]: transfer-matrix partition functions and exact moments.
//! - [`ustat`]: weighted U-statistics of the environment.
//! - [`chaos`]: fractional-noise chaos calculus and SHE second moments.
//! - [`harness`]: reproducible Monte Carlo experiments and verdicts.

#![allow(clippy::excessive_precision, clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod env;
mod error;
pub mod harness;
pub mod partition;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;
pub mod ustat;
pub mod walk;

pub use chaos::{ChaosMoment, FracFieldSampler, RectFn, TensorKernel};
pub use env::{
    CovarianceModel, EnvParams, Environment, EnvironmentField, KernelShape, OriginWeight, XiDist,
};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, TestReport};
pub use partition::{Endpoint, PartitionParams, PartitionSurface, Variant};
pub use ustat::{UStatSpec, UStatWeight};
pub use walk::TimeTuple;
