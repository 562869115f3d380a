use crate::env::{EnvParams, OriginWeight, XiDist};
use crate::error::{check_hurst, Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// One verdict-producing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    CovarianceTail,
    VarianceAsymptotics,
    IidControl,
    Clt,
    UstatLimit,
    UstatJoint,
    ExpansionIdentity,
    SecondMomentOracle,
    ChaosIdentities,
    PartitionLimit,
    Tightness,
    Determinism,
}

impl Check {
    pub const ALL: [Check; 12] = [
        Check::CovarianceTail,
        Check::VarianceAsymptotics,
        Check::IidControl,
        Check::Clt,
        Check::UstatLimit,
        Check::UstatJoint,
        Check::ExpansionIdentity,
        Check::SecondMomentOracle,
        Check::ChaosIdentities,
        Check::PartitionLimit,
        Check::Tightness,
        Check::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::CovarianceTail => "covariance-tail",
            Check::VarianceAsymptotics => "variance-asymptotics",
            Check::IidControl => "iid-control",
            Check::Clt => "clt",
            Check::UstatLimit => "ustat-limit",
            Check::UstatJoint => "ustat-joint",
            Check::ExpansionIdentity => "expansion-identity",
            Check::SecondMomentOracle => "second-moment-oracle",
            Check::ChaosIdentities => "chaos-identities",
            Check::PartitionLimit => "partition-limit",
            Check::Tightness => "tightness",
            Check::Determinism => "determinism",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Checks whose statistics rest on a central limit approximation.
    fn needs_clt(self) -> bool {
        matches!(self, Check::Clt | Check::UstatLimit | Check::UstatJoint | Check::SecondMomentOracle | Check::Tightness)
    }
}

/// Command-line experiment names and the checks they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EnvCheck,
    VarianceAsymptotics,
    Clt,
    UstatLimit,
    PartitionLimit,
    ChaosMoments,
    Tightness,
    Identities,
    All,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::EnvCheck,
        Command::VarianceAsymptotics,
        Command::Clt,
        Command::UstatLimit,
        Command::PartitionLimit,
        Command::ChaosMoments,
        Command::Tightness,
        Command::Identities,
        Command::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::EnvCheck => "env-check",
            Command::VarianceAsymptotics => "variance-asymptotics",
            Command::Clt => "clt",
            Command::UstatLimit => "ustat-limit",
            Command::PartitionLimit => "partition-limit",
            Command::ChaosMoments => "chaos-moments",
            Command::Tightness => "tightness",
            Command::Identities => "identities",
            Command::All => "all",
        }
    }

    /// Desk configurations for every check of the command; `clt` runs both
    /// innovation laws.
    pub fn checks(self) -> Vec<ExperimentConfig> {
        use Check::*;
        let list: Vec<Check> = match self {
            Command::EnvCheck => vec![CovarianceTail],
            Command::VarianceAsymptotics => vec![VarianceAsymptotics, IidControl],
            Command::Clt => vec![Clt],
            Command::UstatLimit => vec![UstatLimit, UstatJoint],
            Command::PartitionLimit => vec![SecondMomentOracle, PartitionLimit],
            Command::ChaosMoments => vec![ChaosIdentities],
            Command::Tightness => vec![Tightness],
            Command::Identities => vec![ExpansionIdentity],
            Command::All => Check::ALL.to_vec(),
        };
        let mut out = Vec::new();
        for c in list {
            let desk = ExperimentConfig::desk(c);
            if c == Clt {
                let mut r = desk.clone();
                r.xi = XiDist::Rademacher;
                out.push(desk);
                out.push(r);
            } else {
                out.push(desk);
            }
        }
        out
    }
}

/// Declared pass thresholds. Set before sampling; never tuned afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// `|γ(k)/asymptote − 1|`.
    pub tail_rel: f64,
    /// Allowed deviation of the log-log tail slope.
    pub tail_slope: f64,
    pub variance_ratio: (f64, f64),
    pub iid_ratio: (f64, f64),
    pub ks_p: f64,
    pub ustat_variance_rel: f64,
    pub identity_rel: f64,
    /// Pathwise identities, relative to the sample scale.
    pub pathwise: f64,
    pub machine_rel: f64,
    /// Monte Carlo agreement in standard errors.
    pub z_score: f64,
    pub chaos_rel: f64,
    pub chaos_tail: f64,
    pub slope_margin: f64,
    pub local_clt_rel: f64,
    /// `max_n / min_n` of the largest 2q-th moment over the n grid.
    pub uniform_bound_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tail_rel: 0.05,
            tail_slope: 0.05,
            variance_ratio: (0.90, 1.10),
            iid_ratio: (0.95, 1.05),
            ks_p: 0.01,
            ustat_variance_rel: 0.10,
            identity_rel: 1e-10,
            pathwise: 1e-12,
            machine_rel: 1e-12,
            z_score: 3.0,
            chaos_rel: 0.15,
            chaos_tail: 0.05,
            slope_margin: 0.1,
            local_clt_rel: 0.01,
            uniform_bound_ratio: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub check: Check,
    pub hurst: f64,
    /// Kernel cutoff `M`.
    pub cutoff: usize,
    pub xi: XiDist,
    pub origin: OriginWeight,
    pub n_grid: Vec<usize>,
    pub beta: f64,
    pub replicas: usize,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<PathBuf>,
    /// Moment order `2q` for tightness.
    pub q: u32,
    /// Spatial Hölder exponent tested by tightness; defaults to `H − 0.1`.
    pub iota: Option<f64>,
    /// Monte Carlo samples per chaos moment.
    pub theta_samples: usize,
    pub k_max: usize,
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    /// Defaults of the desk-scale acceptance runs.
    pub fn desk(check: Check) -> Self {
        let base = ExperimentConfig {
            check,
            hurst: 0.75,
            cutoff: 100_000,
            xi: XiDist::StandardGaussian,
            origin: OriginWeight::Compensated,
            n_grid: vec![1024],
            beta: 1.0,
            replicas: 2000,
            seed: 20_240_601,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: None,
            q: 2,
            iota: None,
            theta_samples: 1_000_000,
            k_max: 4,
            thresholds: Thresholds::default(),
        };
        match check {
            Check::CovarianceTail => ExperimentConfig { cutoff: 1_000_000, n_grid: vec![1000], replicas: 0, ..base },
            Check::VarianceAsymptotics => {
                ExperimentConfig { n_grid: vec![256, 1024, 4096, 16_384], replicas: 0, ..base }
            }
            Check::IidControl => ExperimentConfig { n_grid: vec![1000, 10_000], replicas: 0, ..base },
            Check::Clt => ExperimentConfig { cutoff: 256, n_grid: vec![4096], ..base },
            Check::UstatLimit | Check::UstatJoint => ExperimentConfig { n_grid: vec![4096], ..base },
            Check::ExpansionIdentity => ExperimentConfig { cutoff: 1000, n_grid: vec![12], replicas: 100, ..base },
            Check::SecondMomentOracle => ExperimentConfig { n_grid: vec![256], replicas: 10_000, ..base },
            Check::ChaosIdentities => ExperimentConfig { replicas: 20_000, ..base },
            Check::PartitionLimit => ExperimentConfig { cutoff: 10_000, n_grid: vec![256, 512, 1024], beta: 0.5, ..base },
            Check::Tightness => ExperimentConfig { n_grid: vec![256, 512, 1024], beta: 0.5, ..base },
            Check::Determinism => ExperimentConfig { replicas: 100, threads: base.threads.max(4), ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta={} must be finite and >= 0", self.beta)));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Domain("the n grid must be non-empty with n >= 1".into()));
        }
        if self.cutoff == 0 {
            return Err(Error::Domain("kernel cutoff M must be >= 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Domain("threads must be >= 1".into()));
        }
        if self.check.needs_clt() && self.replicas < 100 {
            return Err(Error::Domain(format!(
                "{} needs at least 100 replicas, got {}",
                self.check.name(),
                self.replicas
            )));
        }
        if self.q < 2 {
            return Err(Error::Domain("tightness moment q must be an integer >= 2".into()));
        }
        if let Some(iota) = self.iota {
            if !(iota > 0.0 && iota < self.hurst) {
                return Err(Error::Domain(format!("iota={iota} must lie in (0, H={})", self.hurst)));
            }
        }
        if self.k_max > 6 {
            return Err(Error::Domain("k_max must be <= 6".into()));
        }
        Ok(())
    }

    pub fn env_params(&self) -> Result<EnvParams> {
        Ok(EnvParams::calibrated(self.hurst, self.cutoff)?.with_xi(self.xi).with_origin(self.origin))
    }

    pub fn iota(&self) -> f64 {
        self.iota.unwrap_or(self.hurst - 0.1)
    }

    pub fn n_max(&self) -> usize {
        *self.n_grid.iter().max().expect("validated non-empty")
    }

    /// Apply one `key = value` setting. Unknown keys and bad values are errors.
    pub fn apply_setting(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Format(format!("{key}: expected {what}, got {value:?}"));
        let float = || value.parse::<f64>().map_err(|_| bad("a number"));
        let uint = || value.parse::<u64>().map_err(|_| bad("a non-negative integer"));
        match key {
            "hurst" | "H" => self.hurst = float()?,
            "beta" => self.beta = float()?,
            "cutoff" | "M" => self.cutoff = uint()? as usize,
            "seed" => self.seed = uint()?,
            "threads" => self.threads = uint()? as usize,
            "replicas" => self.replicas = uint()? as usize,
            "q" => self.q = uint()? as u32,
            "iota" => self.iota = Some(float()?),
            "theta_samples" => self.theta_samples = uint()? as usize,
            "k_max" => self.k_max = uint()? as usize,
            "out" => self.out = Some(PathBuf::from(value)),
            "n" | "n_grid" => {
                self.n_grid = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| bad("a comma-separated list of integers")))
                    .collect::<Result<_>>()?
            }
            "xi" => {
                self.xi = match value {
                    "gaussian" | "standard_gaussian" => XiDist::StandardGaussian,
                    "rademacher" => XiDist::Rademacher,
                    _ => return Err(bad("gaussian or rademacher")),
                }
            }
            "origin" => {
                self.origin = match value {
                    "compensated" => OriginWeight::Compensated,
                    "delta" => OriginWeight::Delta,
                    _ => return Err(bad("compensated or delta")),
                }
            }
            k if k.starts_with("threshold.") => {
                let mut t = serde_json::to_value(&self.thresholds).expect("plain struct");
                let name = &k["threshold.".len()..];
                let slot = t.get_mut(name).ok_or_else(|| Error::Format(format!("unknown threshold {name:?}")))?;
                *slot = if value.contains(',') {
                    let parts: Vec<f64> = value.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad("two numbers"))?;
                    serde_json::json!(parts)
                } else {
                    serde_json::json!(float()?)
                };
                self.thresholds = serde_json::from_value(t).map_err(|e| bad(&e.to_string()))?;
            }
            _ => return Err(Error::Format(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

/// An i.i.d. environment with the configured Hurst scalings.
pub(crate) fn white_params(c: &ExperimentConfig) -> Result<EnvParams> {
    Ok(EnvParams::white(c.hurst, 1.0)?.with_xi(c.xi))
}
