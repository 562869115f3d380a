//! Frozen reference values through the public API.

use polymer_core::chaos::{theta_0, theta_1_exact};
use polymer_core::env::{calibrate_delta, two_sided_constant};
use polymer_core::harness::{corrected_sigma_sq, stated_sigma_sq, run_check, write_outputs, Check, ExperimentConfig};
use polymer_core::partition::{two_walk_second_moment, PairWeight, TwoWalkTarget};
use polymer_core::special::heat_kernel;
use polymer_core::walk::walk_p;
use polymer_core::{CovarianceModel, EnvParams};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn environment_constants() {
    assert!(close(two_sided_constant(0.75), 17.904_528_926_373_967, 1e-10));
    assert!(close(calibrate_delta(0.75).unwrap(), 0.144_721_876_255_403_84, 1e-12));
    let p = EnvParams::calibrated(0.75, 1_000_000).unwrap();
    assert!(close(p.tail_constant(), 0.375, 1e-12));
}

#[test]
fn variance_constants() {
    assert!(close(stated_sigma_sq(0.75, 1.0).unwrap(), 3.052_214_509_525_775_6, 1e-9));
    assert!(close(corrected_sigma_sq(0.75, 1.0, 0.375).unwrap(), 0.723_204_542_316_038_8, 1e-9));
}

#[test]
fn heat_kernel_and_local_limit() {
    assert!(close(heat_kernel(1.0, 0.0), 0.398_942_280_401_432_7, 1e-15));
    let n = 1u64 << 14;
    assert!(close((n as f64).sqrt() * walk_p(n, 0) / 2.0, heat_kernel(1.0, 0.0), 0.01));
}

#[test]
fn chaos_terms_at_the_origin() {
    assert!(close(theta_0(1.0, 0.0, 0.0, 0.0), 0.159_154_943_091_895_35, 1e-14));
    let b = std::f64::consts::SQRT_2 * 0.5;
    assert!(close(theta_1_exact(1.0, 0.0, 0.0, 0.0, b, 0.75).unwrap(), 0.073_136_672_079_263_66, 1e-12));
    assert!(close(theta_1_exact(1.0, 0.0, 0.0, 0.0, 0.5, 0.75).unwrap(), 0.036_568_336_039_631_83, 1e-12));
}

#[test]
fn two_walk_second_moments() {
    let p = EnvParams::calibrated(0.75, 10_000).unwrap();
    let cov = CovarianceModel::build(&p, 2 * 256 + 2).unwrap();
    let d = 256.0 * two_walk_second_moment(256, 0.5, &cov, TwoWalkTarget::PointToPoint { x: 0 }, PairWeight::Modified).unwrap() / 4.0;
    assert!(close(d, 0.206_987_533_265_320_6, 1e-9), "{d}");
    let free = two_walk_second_moment(64, 0.0, &cov, TwoWalkTarget::PointToLine, PairWeight::Modified).unwrap();
    assert!(close(free, 1.0, 1e-13));
}

#[test]
fn outputs_round_trip() {
    let mut c = ExperimentConfig::desk(Check::ExpansionIdentity);
    c.replicas = 3;
    c.threads = 2;
    let outcome = run_check(&c).unwrap();
    assert!(outcome.pass());
    let dir = tempfile::tempdir().unwrap();
    let hash = write_outputs(dir.path(), std::slice::from_ref(&c), std::slice::from_ref(&outcome)).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["content_hash"], hash.as_str());
    let back: ExperimentConfig = serde_json::from_value(manifest["configs"][0].clone()).unwrap();
    assert_eq!(back.seed, c.seed);
    assert_eq!(back.check, c.check);
    let again = write_outputs(&dir.path().join("again"), &[c], &[outcome]).unwrap();
    assert_eq!(hash, again);
}
