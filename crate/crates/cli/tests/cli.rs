use std::path::Path;
use std::process::{Command, Output};

fn polymer_limits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polymer-limits"))
        .args(args)
        .env_remove("POLYMER_LIMITS_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn identities_pass_and_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = polymer_limits(&["identities", "--seed", "7", "--replicas", "10", "--threads", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS expansion-identity"), "{stdout}");
    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["pass"], true);
    assert_eq!(manifest["configs"][0]["seed"], 7);
    assert!(read(&out, "results.csv").starts_with("experiment,n,beta,H,statistic"));
}

#[test]
fn identical_invocations_hash_identically() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = polymer_limits(&[
            "partition-limit", "--n", "32", "--replicas", "120", "--threads", threads, "--set", "cutoff=500",
            "--set", "theta_samples=5000", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
        let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
        m["content_hash"].as_str().unwrap().to_owned()
    };
    let a = hash("a", "1");
    assert_eq!(a, hash("b", "1"));
    assert_eq!(a, hash("c", "3"));
}

#[test]
fn bad_hurst_names_the_interval() {
    let o = polymer_limits(&["clt", "--hurst", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(1/2, 1)"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("desk.cfg");
    std::fs::write(&cfg, "seed = 3\n[identities]\n").unwrap();
    let o = polymer_limits(&["identities", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("desk.cfg:2:2: unknown section"), "{}", stderr(&o));

    std::fs::write(&cfg, "seed = 3\n[expansion-identity]\nreplicas 5\n").unwrap();
    let o = polymer_limits(&["identities", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("desk.cfg:3:1:"), "{}", stderr(&o));

    std::fs::write(&cfg, "seed = minus one\n").unwrap();
    let o = polymer_limits(&["identities", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("desk.cfg:1:8:"), "{}", stderr(&o));
}

#[test]
fn config_file_and_env_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("desk.json");
    std::fs::write(&cfg, r#"{"seed": 11, "expansion-identity": {"replicas": 3}}"#).unwrap();
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_polymer-limits"))
        .args(["identities", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("POLYMER_LIMITS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["configs"][0]["seed"], 11);
    assert_eq!(m["configs"][0]["replicas"], 3);
    assert_eq!(m["configs"][0]["threads"], 2);
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = polymer_limits(&[
        "env-check", "--set", "cutoff=2000", "--set", "threshold.tail_rel=1e-9", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL covariance-tail"));
}

#[test]
fn usage_errors() {
    assert_eq!(polymer_limits(&["bogus"]).status.code(), Some(2));
    assert_eq!(polymer_limits(&["identities", "--set", "nokey"]).status.code(), Some(2));
    let help = polymer_limits(&["tightness", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("--threads"));
}
