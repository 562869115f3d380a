use super::tilt::{log_laplace, TiltedField};
use super::{Endpoint, Normalization, PartitionParams, Storage, Variant};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::stats::KahanSum;
use crate::walk::{lattice_time, nearest_parity_int};
use std::fmt::Write as _;
use std::path::Path;

/// Values at time `i` on sites `x = −i, −i+2, …, i`, stored as
/// `mantissa · 2^exponent`.
#[derive(Debug, Clone, PartialEq)]
struct Level {
    mantissa: Vec<f64>,
    exponent: i32,
}

impl Level {
    fn value(&self, j: usize) -> f64 {
        scale(self.mantissa[j], self.exponent)
    }
}

fn scale(v: f64, e: i32) -> f64 {
    if e == 0 {
        v
    } else if e.abs() < 1000 {
        v * 2f64.powi(e)
    } else {
        (v.abs().ln() + e as f64 * std::f64::consts::LN_2).exp().copysign(v)
    }
}

/// Partition-function surface on the parity cone `{(i, x): |x| ≤ i, i ↔ x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSurface {
    params: PartitionParams,
    /// Indexed by time; `None` when the level was not kept.
    levels: Vec<Option<Level>>,
}

fn site_index(i: usize, x: i64) -> Option<usize> {
    let off = x + i as i64;
    (off >= 0 && off <= 2 * i as i64 && off % 2 == 0).then_some((off / 2) as usize)
}

impl PartitionSurface {
    pub fn params(&self) -> &PartitionParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn endpoint(&self) -> Endpoint {
        self.params.endpoint
    }

    pub fn has_level(&self, i: usize) -> bool {
        self.levels.get(i).is_some_and(Option::is_some)
    }

    fn level(&self, i: usize) -> &Level {
        self.levels[i].as_ref().unwrap_or_else(|| panic!("time level {i} was not stored"))
    }

    /// `z(i, x)`; zero off the parity cone. Panics if level `i` was not stored.
    pub fn value(&self, i: usize, x: i64) -> f64 {
        let level = self.level(i);
        site_index(i, x).map_or(0.0, |j| level.value(j))
    }

    /// `ln |z(i, x)|`, finite even when `z` itself would overflow.
    pub fn log_abs_value(&self, i: usize, x: i64) -> f64 {
        let level = self.level(i);
        match site_index(i, x) {
            Some(j) => level.mantissa[j].abs().ln() + level.exponent as f64 * std::f64::consts::LN_2,
            None => f64::NEG_INFINITY,
        }
    }

    pub fn log_scale(&self, i: usize) -> f64 {
        self.level(i).exponent as f64 * std::f64::consts::LN_2
    }

    /// `(x, z(i, x))` over the level.
    pub fn level_values(&self, i: usize) -> Vec<(i64, f64)> {
        let level = self.level(i);
        (0..=i).map(|j| (2 * j as i64 - i as i64, level.value(j))).collect()
    }

    /// The point-to-line partition function: `z(0, 0)`, or `Σ_x z(n, x)` for
    /// a point-to-point surface.
    pub fn partition_function(&self) -> f64 {
        match self.params.endpoint {
            Endpoint::PointToLine => self.value(0, 0),
            Endpoint::PointToPoint => {
                let level = self.level(self.n());
                let s: KahanSum = level.mantissa.iter().copied().collect();
                scale(s.value(), level.exponent)
            }
        }
    }

    /// `√n/2 · z(i, x)` at the lattice point nearest to `(nt, √n x)`.
    pub fn density_scaled(&self, t: f64, x: f64) -> f64 {
        let n = self.n();
        let i = lattice_time(n, t).clamp(0, n as i64);
        let site = nearest_parity_int((n as f64).sqrt() * x, i);
        (n as f64).sqrt() / 2.0 * self.value(i as usize, site)
    }

    /// CSV with columns `i,x,value,log_scale`; `value·e^{log_scale}` is `z(i, x)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("i,x,value,log_scale\n");
        for (i, level) in self.levels.iter().enumerate() {
            let Some(level) = level else { continue };
            let ls = level.exponent as f64 * std::f64::consts::LN_2;
            for (j, v) in level.mantissa.iter().enumerate() {
                let _ = writeln!(out, "{i},{},{v:e},{ls:e}", 2 * j as i64 - i as i64);
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn summary_json(&self, seed: u64) -> serde_json::Value {
        let endpoint_values: Vec<serde_json::Value> = match self.params.endpoint {
            Endpoint::PointToLine => vec![serde_json::json!({"x": 0, "value": self.value(0, 0)})],
            Endpoint::PointToPoint => self
                .level_values(self.n())
                .into_iter()
                .map(|(x, v)| serde_json::json!({"x": x, "value": v}))
                .collect(),
        };
        serde_json::json!({
            "n": self.params.n,
            "beta": self.params.beta,
            "H": self.params.hurst(),
            "variant": self.params.variant,
            "endpoint": self.params.endpoint,
            "seed": seed,
            "endpoint_values": endpoint_values,
        })
    }
}

#[derive(Clone, Copy)]
enum StepWeight {
    Linear(f64),
    Exp { b: f64, shift: f64 },
}

impl StepWeight {
    #[inline]
    fn apply(self, omega: f64) -> Result<f64> {
        match self {
            StepWeight::Linear(b) => Ok(1.0 + b * omega),
            StepWeight::Exp { b, shift } => {
                let e = b * omega;
                if e.abs() > 50.0 {
                    return Err(Error::Numerical(format!("log weight {e} exceeds 50 in magnitude")));
                }
                Ok((e - shift).exp())
            }
        }
    }
}

const RESCALE_LO: f64 = 1.0 / 4_294_967_296.0;
const RESCALE_HI: f64 = 4_294_967_296.0;

/// Rescale by an exact power of two when the level leaves `[2^−32, 2^32]`.
fn renormalize(v: &mut [f64]) -> i32 {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m == 0.0 || (RESCALE_LO..=RESCALE_HI).contains(&m) {
        return 0;
    }
    let e = m.log2().floor() as i32;
    let f = 2f64.powi(-e);
    v.iter_mut().for_each(|x| *x *= f);
    e
}

fn run<E: Environment + ?Sized>(env: &E, params: &PartitionParams, w: StepWeight) -> Result<PartitionSurface> {
    let n = params.n;
    let width = params.cone_width() as i64;
    let keep = |i: usize| {
        params.storage == Storage::Full
            || match params.endpoint {
                Endpoint::PointToLine => i == 0,
                Endpoint::PointToPoint => i == n,
            }
    };
    let mut levels: Vec<Option<Level>> = vec![None; n + 1];
    let mut cur = vec![0.0; n + 2];
    let mut next = vec![0.0; n + 2];
    let mut exponent = 0i32;
    match params.endpoint {
        Endpoint::PointToPoint => {
            cur[0] = 1.0;
            if keep(0) {
                levels[0] = Some(Level { mantissa: vec![1.0], exponent: 0 });
            }
            for i in 1..=n {
                for j in 0..=i {
                    let x = 2 * j as i64 - i as i64;
                    next[j] = if x.abs() > width {
                        0.0
                    } else {
                        let left = if j >= 1 { cur[j - 1] } else { 0.0 };
                        let right = if j < i { cur[j] } else { 0.0 };
                        w.apply(env.value(i, x))? * 0.5 * (left + right)
                    };
                }
                exponent += renormalize(&mut next[..=i]);
                std::mem::swap(&mut cur, &mut next);
                if keep(i) {
                    levels[i] = Some(Level { mantissa: cur[..=i].to_vec(), exponent });
                }
            }
        }
        Endpoint::PointToLine => {
            for j in 0..=n {
                cur[j] = if (2 * j as i64 - n as i64).abs() > width { 0.0 } else { 1.0 };
            }
            if keep(n) {
                levels[n] = Some(Level { mantissa: cur[..=n].to_vec(), exponent: 0 });
            }
            for i in (0..n).rev() {
                let up = i + 1;
                for j in 0..=up {
                    if cur[j] != 0.0 {
                        cur[j] *= w.apply(env.value(up, 2 * j as i64 - up as i64))?;
                    }
                }
                for j in 0..=i {
                    let x = 2 * j as i64 - i as i64;
                    next[j] = if x.abs() > width { 0.0 } else { 0.5 * (cur[j] + cur[j + 1]) };
                }
                exponent += renormalize(&mut next[..=i]);
                std::mem::swap(&mut cur, &mut next);
                if keep(i) {
                    levels[i] = Some(Level { mantissa: cur[..=i].to_vec(), exponent });
                }
            }
        }
    }
    Ok(PartitionSurface { params: *params, levels })
}

/// Partition surface for any variant.
pub fn dp_partition<E: Environment + ?Sized>(env: &E, params: &PartitionParams) -> Result<PartitionSurface> {
    let width = params.cone_width();
    if !env.covers_cone(params.n, width) {
        return Err(Error::Argument(format!(
            "environment must cover rows 1..={} and sites |x| <= min(i, {width})",
            params.n
        )));
    }
    if params.normalization == Normalization::LogLaplace && params.variant != Variant::Exponential {
        return Err(Error::Argument("log-Laplace normalization applies to the exponential variant".into()));
    }
    let b = params.scaled_beta();
    match params.variant {
        Variant::Modified => run(env, params, StepWeight::Linear(b)),
        Variant::Exponential => {
            let shift = match params.normalization {
                Normalization::Raw => 0.0,
                Normalization::LogLaplace => log_laplace(b, env.params())?,
            };
            run(env, params, StepWeight::Exp { b, shift })
        }
        Variant::Tilted => {
            let tilted = TiltedField::new(env, b)?;
            run(&tilted, params, StepWeight::Linear(b))
        }
    }
}

pub fn dp_modified_partition<E: Environment + ?Sized>(
    env: &E,
    params: &PartitionParams,
) -> Result<PartitionSurface> {
    if params.variant != Variant::Modified {
        return Err(Error::Argument("dp_modified_partition needs the modified variant".into()));
    }
    dp_partition(env, params)
}

pub fn dp_exp_partition<E: Environment + ?Sized>(env: &E, params: &PartitionParams) -> Result<PartitionSurface> {
    if params.variant != Variant::Exponential {
        return Err(Error::Argument("dp_exp_partition needs the exponential variant".into()));
    }
    dp_partition(env, params)
}

/// The point-to-line partition function alone, without keeping the surface.
pub fn point_to_line_value<E: Environment + ?Sized>(env: &E, params: &PartitionParams) -> Result<f64> {
    let p = params.with_endpoint(Endpoint::PointToLine).with_storage(Storage::Final);
    Ok(dp_partition(env, &p)?.partition_function())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvParams, EnvironmentField, XiDist};
    use crate::partition::tilt_environment;
    use crate::walk::walk_p;

    fn small_env(n: usize, seed: u64) -> EnvironmentField {
        let p = EnvParams::calibrated(0.75, 30).unwrap();
        sample_environment(&p, n, -(n as i64), n as i64, seed).unwrap()
    }

    /// `E_P Π f(ω(i, S_i))` over all `2^n` paths.
    fn enumerate(env: &EnvironmentField, n: usize, f: impl Fn(f64) -> f64) -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut ends = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let mut x = 0i64;
            let mut w = 1.0;
            for i in 1..=n {
                x += if mask >> (i - 1) & 1 == 1 { 1 } else { -1 };
                w *= f(env.get(i, x));
            }
            let p = w / (1u64 << n) as f64;
            total += p;
            ends[((x + n as i64) / 2) as usize] += p;
        }
        (total, ends)
    }

    #[test]
    fn beta_zero_gives_walk_kernel() {
        let env = small_env(20, 1);
        let p = PartitionParams::new(0.0, 20, 0.75, Variant::Modified).unwrap();
        let ptp = dp_modified_partition(&env, &p.with_endpoint(Endpoint::PointToPoint)).unwrap();
        for i in 0..=20 {
            for x in -(i as i64)..=i as i64 {
                assert_eq!(ptp.value(i, x), walk_p(i as u64, x));
            }
        }
        let ptl = dp_modified_partition(&env, &p).unwrap();
        assert_eq!(ptl.value(0, 0), 1.0);
        assert_eq!(ptl.value(7, 3), 1.0);
        let e = PartitionParams::new(0.0, 20, 0.75, Variant::Exponential).unwrap();
        assert_eq!(dp_exp_partition(&env, &e).unwrap().partition_function(), 1.0);
    }

    #[test]
    fn matches_path_enumeration() {
        for n in [2usize, 3, 8] {
            let env = small_env(n, 5 + n as u64);
            let p = PartitionParams::new(1.7, n, 0.75, Variant::Modified).unwrap();
            let b = p.scaled_beta();
            let (total, ends) = enumerate(&env, n, |w| 1.0 + b * w);
            let ptl = dp_modified_partition(&env, &p).unwrap().partition_function();
            assert!((ptl - total).abs() <= 1e-12 * total.abs().max(1.0), "{ptl} {total}");
            let ptp = dp_modified_partition(&env, &p.with_endpoint(Endpoint::PointToPoint)).unwrap();
            for (j, e) in ends.iter().enumerate() {
                let x = 2 * j as i64 - n as i64;
                assert!((ptp.value(n, x) - e).abs() <= 1e-12 * e.abs().max(1e-3));
            }
            assert!((ptp.partition_function() - total).abs() <= 1e-12 * total.abs().max(1.0));

            let pe = PartitionParams::new(1.7, n, 0.75, Variant::Exponential)
                .unwrap()
                .with_normalization(Normalization::Raw);
            let (etotal, _) = enumerate(&env, n, |w| (b * w).exp());
            let z = dp_exp_partition(&env, &pe).unwrap().partition_function();
            assert!((z - etotal).abs() <= 1e-12 * etotal);
        }
    }

    #[test]
    fn normalized_exponential_equals_tilted_modified() {
        let env = small_env(64, 9);
        for endpoint in [Endpoint::PointToLine, Endpoint::PointToPoint] {
            let e = PartitionParams::new(1.0, 64, 0.75, Variant::Exponential).unwrap().with_endpoint(endpoint);
            let t = PartitionParams::new(1.0, 64, 0.75, Variant::Tilted).unwrap().with_endpoint(endpoint);
            let se = dp_exp_partition(&env, &e).unwrap();
            let st = dp_partition(&env, &t).unwrap();
            let tilted = tilt_environment(&env, 1.0, 64).unwrap();
            let m = PartitionParams::new(1.0, 64, 0.75, Variant::Modified).unwrap().with_endpoint(endpoint);
            let sm = dp_modified_partition(&tilted, &m).unwrap();
            for i in [0usize, 1, 17, 64] {
                for x in (-(i as i64)..=i as i64).step_by(2) {
                    let a = se.value(i, x);
                    assert!((a - st.value(i, x)).abs() <= 1e-12 * a.abs().max(1e-300));
                    assert_eq!(st.value(i, x), sm.value(i, x));
                }
            }
        }
    }

    #[test]
    fn renormalization_survives_large_beta() {
        let env = small_env(200, 3);
        let p = PartitionParams::new(40.0, 200, 0.75, Variant::Exponential)
            .unwrap()
            .with_normalization(Normalization::Raw);
        let s = dp_exp_partition(&env, &p).unwrap();
        assert!(s.log_abs_value(0, 0).is_finite());
        assert!(s.log_abs_value(0, 0) > 10.0);
        let huge = PartitionParams::new(5000.0, 200, 0.75, Variant::Exponential).unwrap();
        assert!(matches!(dp_exp_partition(&env, &huge), Err(Error::Numerical(_))));
    }

    #[test]
    fn rejects_small_window_and_rademacher_tilt() {
        let p = EnvParams::calibrated(0.75, 10).unwrap();
        let env = sample_environment(&p, 10, -3, 3, 0).unwrap();
        let pp = PartitionParams::new(1.0, 10, 0.75, Variant::Modified).unwrap();
        match dp_modified_partition(&env, &pp) {
            Err(Error::Argument(msg)) => assert!(msg.contains("|x| <= min(i, 10)")),
            other => panic!("{other:?}"),
        }
        assert!(dp_modified_partition(&env, &pp.with_half_width(3)).is_ok());
        let r = sample_environment(&p.with_xi(XiDist::Rademacher), 4, -4, 4, 0).unwrap();
        let t = PartitionParams::new(1.0, 4, 0.75, Variant::Tilted).unwrap();
        assert!(dp_partition(&r, &t).is_err());
    }

    #[test]
    fn truncated_walk_is_killed_outside_window() {
        let env = small_env(12, 4);
        let p = PartitionParams::new(1.0, 12, 0.75, Variant::Modified).unwrap().with_half_width(2);
        let b = p.scaled_beta();
        let mut total = 0.0;
        for mask in 0u32..(1 << 12) {
            let mut x = 0i64;
            let mut w = 1.0;
            for i in 1..=12 {
                x += if mask >> (i - 1) & 1 == 1 { 1 } else { -1 };
                if x.abs() > 2 {
                    w = 0.0;
                    break;
                }
                w *= 1.0 + b * env.get(i, x);
            }
            total += w / 4096.0;
        }
        let z = point_to_line_value(&env, &p).unwrap();
        assert!((z - total).abs() < 1e-13);
        let ptp = dp_partition(&env, &p.with_endpoint(Endpoint::PointToPoint)).unwrap();
        assert!((ptp.partition_function() - total).abs() < 1e-13);
    }

    #[test]
    fn storage_and_exports() {
        let env = small_env(6, 2);
        let p = PartitionParams::new(1.0, 6, 0.75, Variant::Modified)
            .unwrap()
            .with_endpoint(Endpoint::PointToPoint);
        let full = dp_partition(&env, &p).unwrap();
        let last = dp_partition(&env, &p.with_storage(Storage::Final)).unwrap();
        assert!(!last.has_level(3) && last.has_level(6));
        assert_eq!(full.partition_function(), last.partition_function());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface.csv");
        full.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("i,x,value,log_scale\n"));
        assert_eq!(text.lines().count(), 1 + (1..=7).sum::<usize>());
        let j = full.summary_json(11);
        assert_eq!(j["endpoint_values"].as_array().unwrap().len(), 7);
        assert_eq!(j["variant"], "modified");
        assert!((full.density_scaled(1.0, 0.0) - 6f64.sqrt() / 2.0 * full.value(6, 0)).abs() < 1e-15);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn partition_equals_its_chaos_sum(seed in 0u64..1000, n in 1usize..10, beta in 0.0f64..2.0) {
            let env = small_env(n, seed);
            let params = PartitionParams::new(beta, n, 0.75, Variant::Modified).unwrap();
            let z = point_to_line_value(&env, &params).unwrap();
            let sum: f64 = crate::partition::chaos_terms(&env, n, beta, n).unwrap().iter().sum();
            proptest::prop_assert!((z - sum).abs() <= 1e-11 * z.abs().max(1.0), "{z} vs {sum}");
        }

        #[test]
        fn free_surface_is_the_walk_kernel(n in 1usize..40, seed in 0u64..100) {
            let env = small_env(n, seed);
            let params = PartitionParams::new(0.0, n, 0.75, Variant::Exponential).unwrap().with_endpoint(Endpoint::PointToPoint);
            let s = dp_partition(&env, &params).unwrap();
            for x in (-(n as i64)..=n as i64).step_by(2) {
                proptest::prop_assert!((s.value(n, x) - walk_p(n as u64, x)).abs() < 1e-14);
            }
        }
    }
}
