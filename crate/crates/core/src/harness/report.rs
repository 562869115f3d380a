use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    AtMost(f64),
    AtLeast(f64),
    Between(f64, f64),
    /// Reported for context; never fails.
    Info,
}

impl Threshold {
    pub fn admits(self, value: f64) -> bool {
        match self {
            Threshold::AtMost(t) => value <= t,
            Threshold::AtLeast(t) => value >= t,
            Threshold::Between(a, b) => value >= a && value <= b,
            Threshold::Info => true,
        }
    }
}

/// Shortest of plain and scientific notation.
fn compact(x: f64) -> String {
    let plain = format!("{x}");
    let sci = format!("{x:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::AtMost(t) => write!(f, "<={}", compact(*t)),
            Threshold::AtLeast(t) => write!(f, ">={}", compact(*t)),
            Threshold::Between(a, b) => write!(f, "[{};{}]", compact(*a), compact(*b)),
            Threshold::Info => write!(f, "info"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub experiment: String,
    pub n: Option<usize>,
    pub beta: f64,
    pub hurst: f64,
    pub statistic: String,
    pub value: f64,
    pub se: Option<f64>,
    pub threshold: Threshold,
    pub pass: bool,
    pub seed: u64,
    pub runtime_ms: u64,
}

impl TestReport {
    /// A row whose verdict is `threshold.admits(value)`.
    pub fn new(c: &ExperimentConfig, statistic: &str, value: f64, se: Option<f64>, threshold: Threshold) -> Self {
        TestReport {
            experiment: c.check.name().to_string(),
            n: None,
            beta: c.beta,
            hurst: c.hurst,
            statistic: statistic.to_string(),
            value,
            se,
            threshold,
            pass: threshold.admits(value),
            seed: c.seed,
            runtime_ms: 0,
        }
    }

    pub fn info(c: &ExperimentConfig, statistic: &str, value: f64, se: Option<f64>) -> Self {
        Self::new(c, statistic, value, se, Threshold::Info)
    }

    pub fn at_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn is_verdict(&self) -> bool {
        self.threshold != Threshold::Info
    }
}

/// A plot-ready numeric table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub reports: Vec<TestReport>,
    pub tables: Vec<Table>,
}

impl ExperimentOutcome {
    /// True iff every verdict row passes.
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn extend(&mut self, other: ExperimentOutcome) {
        self.reports.extend(other.reports);
        self.tables.extend(other.tables);
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Results CSV; `with_runtime = false` drops the timing column for hashing.
pub fn results_csv(reports: &[TestReport], with_runtime: bool) -> String {
    let mut s = String::from("experiment,n,beta,H,statistic,value,se,threshold,pass,seed");
    s.push_str(if with_runtime { ",runtime_ms\n" } else { "\n" });
    for r in reports {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            opt(r.n),
            r.beta,
            r.hurst,
            r.statistic,
            r.value,
            opt(r.se),
            r.threshold,
            r.pass,
            r.seed
        );
        if with_runtime {
            let _ = write!(s, ",{}", r.runtime_ms);
        }
        s.push('\n');
    }
    s
}

/// SHA-256 of everything written except timings.
pub fn content_hash(outcome: &ExperimentOutcome) -> String {
    let mut h = Sha256::new();
    h.update(results_csv(&outcome.reports, false).as_bytes());
    for t in &outcome.tables {
        h.update(t.name.as_bytes());
        h.update(t.to_csv().as_bytes());
    }
    hex::encode(h.finalize())
}

/// Write `results.csv`, `manifest.json` and one CSV per table into `dir`.
/// Returns the content hash of the combined outcome.
pub fn write_outputs(dir: &Path, configs: &[ExperimentConfig], outcomes: &[ExperimentOutcome]) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut all = ExperimentOutcome::default();
    for o in outcomes {
        all.extend(o.clone());
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write("results.csv", &results_csv(&all.reports, true))?;
    for (c, o) in configs.iter().zip(outcomes) {
        for t in &o.tables {
            write(&format!("{}-{}.csv", c.check.name(), t.name), &t.to_csv())?;
        }
    }
    let hash = content_hash(&all);
    let manifest = serde_json::json!({
        "configs": configs,
        "content_hash": hash,
        "pass": all.pass(),
    });
    write("manifest.json", &serde_json::to_string_pretty(&manifest).expect("serializable"))?;
    Ok(hash)
}
