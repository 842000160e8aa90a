use clap::{Parser, Subcommand};
use perplab::harness::config::{self, ConfigError, ExperimentName};
use perplab::harness::runner::{self, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for discounted perpetuities over random walks.
#[derive(Parser)]
#[command(name = "perplab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML config file; CLI flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Output directory for report.csv, summary.txt and extras.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 = one per CPU. Falls back to $PERPLAB_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Pathwise law-of-large-numbers check for the scaled perpetuity.
    Slln(CommonArgs),
    /// One-dimensional central limit check at fixed discount.
    Clt(CommonArgs),
    /// Finite-dimensional central limit check over a grid of exponents.
    CltFidi(CommonArgs),
    /// Self-normalized truncated statistic check.
    CltTrunc(CommonArgs),
    /// Small-rate variance comparison of the two scaling candidates.
    Vervaat(CommonArgs),
    /// Law-of-iterated-logarithm scan along a discount schedule.
    Lil(CommonArgs),
    /// Covariance checks for the limiting Gaussian process.
    Limitproc(CommonArgs),
    /// Materialize a discount schedule and verify its class conditions.
    Schedule(CommonArgs),
}

impl Command {
    fn experiment(&self) -> ExperimentName {
        match self {
            Command::Slln(_) => ExperimentName::Slln,
            Command::Clt(_) => ExperimentName::Clt,
            Command::CltFidi(_) => ExperimentName::CltFidi,
            Command::CltTrunc(_) => ExperimentName::CltTrunc,
            Command::Vervaat(_) => ExperimentName::Vervaat,
            Command::Lil(_) => ExperimentName::Lil,
            Command::Limitproc(_) => ExperimentName::Limitproc,
            Command::Schedule(_) => ExperimentName::Schedule,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Slln(a)
            | Command::Clt(a)
            | Command::CltFidi(a)
            | Command::CltTrunc(a)
            | Command::Vervaat(a)
            | Command::Lil(a)
            | Command::Limitproc(a)
            | Command::Schedule(a) => a,
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

fn workers_from_env() -> Result<Option<usize>, ConfigError> {
    match std::env::var("PERPLAB_WORKERS") {
        Ok(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| invalid("workers", format!("PERPLAB_WORKERS must be an integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn build_config(cmd: &Command) -> Result<config::ResolvedConfig, RunError> {
    let args = cmd.args();
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| invalid("config", format!("cannot read {}: {e}", path.display())))?;
            config::parse_config_raw(&text)?
        }
        None => config::ExperimentConfig::default(),
    };
    let experiment = cmd.experiment();
    if let Some(from_file) = raw.experiment {
        if from_file != experiment {
            return Err(invalid(
                "experiment",
                format!("config file declares {from_file} but the {experiment} subcommand was invoked"),
            )
            .into());
        }
    }
    raw.experiment = Some(experiment);
    if args.seed.is_some() {
        raw.seed = args.seed;
    }
    if args.paths.is_some() {
        raw.paths = args.paths.clone();
    }
    if args.out.is_some() {
        raw.out = args.out.clone();
    }
    if let Some(w) = args.workers.or(workers_from_env()?) {
        raw.workers = Some(w);
    }
    Ok(config::resolve(raw)?)
}

fn run(cmd: &Command) -> Result<bool, RunError> {
    let cfg = build_config(cmd)?;
    let output = runner::run(&cfg)?;
    for stat in &output.report.statistics {
        let verdict = if stat.pass { "pass" } else { "FAIL" };
        println!("[{verdict}] {}: observed={}", stat.name, stat.observed);
    }
    for file in &output.files {
        println!("wrote {}", file.display());
    }
    Ok(output.report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
