use crate::error::{Error, Result};
use crate::rng::{derive_seed, keys};
use crate::stats::Moments;
use rayon::prelude::*;
use std::fs::OpenOptions;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaPlan {
    pub replicas: usize,
    pub seed: u64,
    /// Append finished replicas here and skip them on a rerun.
    pub checkpoint: Option<PathBuf>,
    /// Identifies the experiment; a checkpoint with another tag is discarded.
    pub tag: String,
}

impl ReplicaPlan {
    pub fn new(replicas: usize, seed: u64) -> Self {
        ReplicaPlan { replicas, seed, checkpoint: None, tag: String::new() }
    }

    pub fn replica_seed(&self, r: usize) -> u64 {
        derive_seed(derive_seed(self.seed, keys::REPLICA), r as u64)
    }
}

/// Per-replica result vectors in replica order; `None` marks a failed replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSet {
    pub values: Vec<Option<Vec<f64>>>,
    pub failed: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl ReplicaSet {
    /// Number of successful replicas.
    pub fn effective(&self) -> usize {
        self.values.len() - self.failed.len()
    }

    /// Component `j` of every successful replica, in replica order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().flatten().map(|v| v[j]).collect()
    }

    pub fn moments(&self, j: usize) -> Moments {
        Moments::of(&self.column(j))
    }
}

const CHUNK: usize = 256;

fn load_checkpoint(plan: &ReplicaPlan, values: &mut [Option<Vec<f64>>]) -> Result<()> {
    let Some(path) = &plan.checkpoint else { return Ok(()) };
    let Ok(text) = std::fs::read_to_string(path) else { return Ok(()) };
    let mut lines = text.lines();
    if lines.next() != Some(&format!("# {}", plan.tag)) {
        return Ok(());
    }
    for line in lines {
        // complete lines end with " ."
        let Some(body) = line.strip_suffix(" .") else { continue };
        let mut parts = body.split_whitespace();
        let parsed = (|| {
            let r: usize = parts.next()?.parse().ok()?;
            let v: Option<Vec<f64>> =
                parts.map(|h| u64::from_str_radix(h, 16).ok().map(f64::from_bits)).collect();
            Some((r, v?))
        })();
        match parsed {
            Some((r, v)) if r < values.len() => values[r] = Some(v),
            _ => continue,
        }
    }
    Ok(())
}

fn append_checkpoint(plan: &ReplicaPlan, fresh: bool, rows: &[(usize, Vec<f64>)]) -> Result<()> {
    let Some(path) = &plan.checkpoint else { return Ok(()) };
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(&format!("# {}\n", plan.tag));
    }
    for (r, v) in rows {
        text.push_str(&r.to_string());
        for x in v {
            text.push_str(&format!(" {:016x}", x.to_bits()));
        }
        text.push_str(" .\n");
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// `Err(())` when the work panicked.
type Attempt = std::result::Result<Result<Vec<f64>>, ()>;

/// Run `work(replica, seed)` for every replica on the current rayon pool.
///
/// Results are stored by replica index, so aggregates do not depend on the
/// schedule or thread count. A panicking replica is recorded as failed; an
/// `Err` aborts the run.
pub fn run_replicas<F>(plan: &ReplicaPlan, work: F) -> Result<ReplicaSet>
where
    F: Fn(usize, u64) -> Result<Vec<f64>> + Sync,
{
    let mut values: Vec<Option<Vec<f64>>> = vec![None; plan.replicas];
    load_checkpoint(plan, &mut values)?;
    let mut fresh = !values.iter().any(Option::is_some);
    let todo: Vec<usize> = (0..plan.replicas).filter(|&r| values[r].is_none()).collect();
    let mut failed = Vec::new();
    for chunk in todo.chunks(CHUNK) {
        let results: Vec<(usize, Attempt)> = chunk
            .par_iter()
            .map(|&r| {
                let seed = plan.replica_seed(r);
                (r, catch_unwind(AssertUnwindSafe(|| work(r, seed))).map_err(|_| ()))
            })
            .collect();
        let mut done = Vec::new();
        for (r, res) in results {
            match res {
                Ok(Ok(v)) => done.push((r, v)),
                Ok(Err(e)) => return Err(e),
                Err(()) => failed.push(r),
            }
        }
        append_checkpoint(plan, fresh, &done)?;
        fresh = false;
        for (r, v) in done {
            values[r] = Some(v);
        }
    }
    let seeds = (0..plan.replicas).map(|r| plan.replica_seed(r)).collect();
    Ok(ReplicaSet { values, failed, seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn work(_r: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = stream(seed, 0, 0);
        let x: f64 = rng.random();
        Ok(vec![x, x * x])
    }

    fn pool(n: usize) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
    }

    #[test]
    fn identical_across_thread_counts() {
        let plan = ReplicaPlan::new(600, 11);
        let a = pool(1).install(|| run_replicas(&plan, work)).unwrap();
        let b = pool(8).install(|| run_replicas(&plan, work)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.moments(0).mean.to_bits(), b.moments(0).mean.to_bits());
    }

    #[test]
    fn failed_replica_reduces_effective_count() {
        let plan = ReplicaPlan::new(8, 3);
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let s = run_replicas(&plan, |r, seed| {
            if r == 5 {
                panic!("boom");
            }
            work(r, seed)
        })
        .unwrap();
        std::panic::set_hook(prev);
        assert_eq!(s.failed, vec![5]);
        assert_eq!(s.effective(), 7);
        assert_eq!(s.column(0).len(), 7);
        assert!(run_replicas(&plan, |_, _| Err(Error::Numerical("x".into()))).is_err());
    }

    #[test]
    fn resume_reproduces_full_run() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("run.ckpt");
        let mut plan = ReplicaPlan::new(700, 5);
        plan.tag = "unit".into();
        let full = run_replicas(&ReplicaPlan::new(700, 5), work).unwrap();
        plan.checkpoint = Some(ck.clone());
        let first = run_replicas(&plan, work).unwrap();
        assert_eq!(first.values, full.values);
        // keep only the first chunk plus a torn line, then resume
        let text = std::fs::read_to_string(&ck).unwrap();
        let keep: Vec<&str> = text.lines().take(1 + CHUNK).collect();
        std::fs::write(&ck, format!("{}\n12 3ff", keep.join("\n"))).unwrap();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let resumed = run_replicas(&plan, |r, s| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            work(r, s)
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 700 - CHUNK);
        assert_eq!(resumed.values, full.values);
        // a foreign tag is ignored
        plan.tag = "other".into();
        let again = run_replicas(&plan, work).unwrap();
        assert_eq!(again.values, full.values);
    }
}
