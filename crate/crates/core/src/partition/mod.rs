//! Transfer-matrix partition functions of the directed polymer.

mod moments;
mod surface;
mod tilt;

pub use moments::{chaos_term, chaos_terms, two_walk_second_moment, PairWeight, TwoWalkTarget};
pub(crate) use moments::chaos_terms_with;
pub use surface::{
    dp_exp_partition, dp_modified_partition, dp_partition, point_to_line_value, PartitionSurface,
};
pub use tilt::{log_laplace, tilt_environment, TiltedField};

use crate::error::{check_hurst, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Weights `e^{bω}`.
    Exponential,
    /// Weights `1 + bω`.
    Modified,
    /// Weights `1 + bω̃` with the tilted field `ω̃`.
    Tilted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// `z(i, x)`: walks from `(i, x)` to the line `n`; `z(0, 0)` is the partition function.
    PointToLine,
    /// `z(i, x)`: walks from `(0, 0)` ending at `(i, x)`.
    PointToPoint,
}

/// Whether the exponential surface carries the factor `e^{−λ(b)}` per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    LogLaplace,
}

/// Which time levels of the surface to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    Full,
    /// Only the level carrying the partition function: `0` for point-to-line,
    /// `n` for point-to-point.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    pub beta: f64,
    pub n: usize,
    /// `ϱ = H/2`.
    pub rho: f64,
    pub variant: Variant,
    pub endpoint: Endpoint,
    pub normalization: Normalization,
    pub storage: Storage,
    /// Kill the walk outside `|x| ≤ half_width`.
    pub half_width: Option<usize>,
}

impl PartitionParams {
    pub fn new(beta: f64, n: usize, hurst: f64, variant: Variant) -> Result<Self> {
        check_hurst(hurst)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta={beta} must be finite and >= 0")));
        }
        if n == 0 {
            return Err(Error::Domain("n must be >= 1".into()));
        }
        let normalization = match variant {
            Variant::Exponential => Normalization::LogLaplace,
            _ => Normalization::Raw,
        };
        Ok(PartitionParams {
            beta,
            n,
            rho: hurst / 2.0,
            variant,
            endpoint: Endpoint::PointToLine,
            normalization,
            storage: Storage::Full,
            half_width: None,
        })
    }

    pub fn with_endpoint(mut self, endpoint: Endpoint) -> Self {
        self.endpoint = endpoint;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_storage(mut self, storage: Storage) -> Self {
        self.storage = storage;
        self
    }

    pub fn with_half_width(mut self, half_width: usize) -> Self {
        self.half_width = Some(half_width);
        self
    }

    pub fn hurst(&self) -> f64 {
        2.0 * self.rho
    }

    /// `b = βn^{−ϱ}`.
    pub fn scaled_beta(&self) -> f64 {
        scaled_beta(self.beta, self.n, self.rho)
    }

    fn cone_width(&self) -> usize {
        self.half_width.map_or(self.n, |w| w.min(self.n))
    }
}

pub(crate) fn scaled_beta(beta: f64, n: usize, rho: f64) -> f64 {
    beta * (n as f64).powf(-rho)
}
