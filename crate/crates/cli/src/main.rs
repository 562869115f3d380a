//! `polymer-limits`: run the limit-theorem checks and write their reports.

mod settings;

use clap::{Args, Parser, Subcommand};
use polymer_core::harness::{run_check, write_outputs, Command, ExperimentConfig, ExperimentOutcome};
use polymer_core::Error;
use settings::{ConfigError, ConfigFile};
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_VAR: &str = "POLYMER_LIMITS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "polymer-limits", version, about = "Directed polymers in a long-range correlated environment: desk-scale checks of the scaling limits")]
struct Cli {
    #[command(subcommand)]
    command: Experiment,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Experiment {
    /// Covariance tail of the calibrated environment.
    EnvCheck,
    /// Variance of the environment sum along the walk, against its limit and the i.i.d. control.
    VarianceAsymptotics,
    /// Gaussian limit of the rescaled environment sum, Gaussian and Rademacher innovations.
    Clt,
    /// Weighted U-statistics against multiple fractional integrals.
    UstatLimit,
    /// Second moments of the partition function against exact and continuum oracles.
    PartitionLimit,
    /// Product formula, isometry and chaos second moments for fractional noise.
    ChaosMoments,
    /// Hölder-type increment moments of the rescaled partition surface.
    Tightness,
    /// Exact chaos expansion of the partition function.
    Identities,
    /// Every check, including the thread-count determinism probe.
    All,
}

impl Experiment {
    fn command(self) -> Command {
        match self {
            Experiment::EnvCheck => Command::EnvCheck,
            Experiment::VarianceAsymptotics => Command::VarianceAsymptotics,
            Experiment::Clt => Command::Clt,
            Experiment::UstatLimit => Command::UstatLimit,
            Experiment::PartitionLimit => Command::PartitionLimit,
            Experiment::ChaosMoments => Command::ChaosMoments,
            Experiment::Tightness => Command::Tightness,
            Experiment::Identities => Command::Identities,
            Experiment::All => Command::All,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Key-value config file with optional `[check]` sections, or JSON.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to POLYMER_LIMITS_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory [default: results/<command>].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Walk lengths, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    hurst: Option<f64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Any config key, e.g. `--set cutoff=2000`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Resource { .. } | Error::Io { .. }) => 3,
            CliError::Config(ConfigError::Read { .. }) => 3,
            CliError::Core(Error::Numerical(_)) => 1,
            _ => 2,
        }
    }
}

fn configure(command: Command, o: &Overrides) -> Result<Vec<ExperimentConfig>, CliError> {
    let file = o.config.as_deref().map(ConfigFile::load).transpose()?;
    let env_threads = match std::env::var(THREADS_VAR) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("{THREADS_VAR}={v:?} is not a thread count")))?),
        Err(_) => None,
    };
    let mut configs = command.checks();
    for c in &mut configs {
        if let Some(f) = &file {
            f.apply(c)?;
        }
        for kv in &o.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.apply_setting(k.trim(), v.trim())?;
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(t) = o.threads.or(env_threads) {
            c.threads = t;
        }
        if let Some(n) = &o.n {
            c.n_grid = n.clone();
        }
        if let Some(b) = o.beta {
            c.beta = b;
        }
        if let Some(h) = o.hurst {
            c.hurst = h;
        }
        if let Some(r) = o.replicas {
            c.replicas = r;
        }
        if let Some(out) = &o.out {
            c.out = Some(out.clone());
        }
        c.validate()?;
    }
    Ok(configs)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let command = cli.command.command();
    let configs = configure(command, &cli.overrides)?;
    let out = configs
        .first()
        .and_then(|c| c.out.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(command.name()));
    let mut outcomes: Vec<ExperimentOutcome> = Vec::new();
    for c in &configs {
        eprintln!("running {} ({} threads)", c.check.name(), c.threads);
        let outcome = run_check(c)?;
        for r in outcome.reports.iter().filter(|r| r.is_verdict()) {
            let n = r.n.map_or(String::new(), |n| format!(" n={n}"));
            println!(
                "{} {}{} {} = {:.6e} ({})",
                if r.pass { "PASS" } else { "FAIL" },
                r.experiment,
                n,
                r.statistic,
                r.value,
                r.threshold
            );
        }
        outcomes.push(outcome);
    }
    let hash = write_outputs(&out, &configs, &outcomes)?;
    let pass = outcomes.iter().all(ExperimentOutcome::pass);
    println!("{} -> {} (content hash {hash})", if pass { "all checks passed" } else { "some checks failed" }, out.display());
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
