use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sural_bench::campaign::{calibration_rows, oracle_values, theta};
use sural_bench::output::{write_calibration, write_oracle, write_sweep, write_theta, write_trials};
use sural_bench::plot::sweep_svg;
use sural_bench::{run_experiment, summarize, sweep, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "sural", version, about = "Surrogate-loss active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials and write one CSV row per trial.
    Run(Common),
    /// Search the smallest label budget reaching each target excess error.
    Sweep(Common),
    /// Disagreement coefficient curve of the configured class.
    Theta(Common),
    /// psi-transform of the configured loss on a 101-point grid.
    Calibration(Common),
    /// Exact brute-force quantities for small finite scenarios.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.path`; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.trials`.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Exit with status 3 if any trial failed.
    #[arg(long)]
    strict: bool,
}

enum Failure {
    Config(ConfigError),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<ConfigError>() {
            Ok(c) => Failure::Config(c),
            Err(e) => Failure::Other(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut config = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    if let Some(trials) = common.trials {
        config.set_trials(trials)?;
    }
    if let Some(out) = &common.out {
        config.set_output(out.clone());
    }
    Ok(config)
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Returns whether any trial failed.
fn execute(command: &Command, common: &Common) -> Result<bool, Failure> {
    let config = load(common)?;
    let mut out = sink(config.output.as_deref())?;
    let mut any_failed = false;
    match command {
        Command::Run(_) => {
            let rows = run_experiment(&config)?;
            write_trials(&mut out, &config, &rows).context("writing trials")?;
            for s in summarize(&rows) {
                eprintln!(
                    "{}: {} trials ({} failed), median labels {}, excess error median {:.4} [q10 {:.4}, q90 {:.4}]{}",
                    s.learner.name(),
                    s.trials,
                    s.failed,
                    s.median_labels,
                    s.median_excess,
                    s.q10_excess,
                    s.q90_excess,
                    s.success_rate.map(|r| format!(", success rate {r:.3}")).unwrap_or_default(),
                );
                any_failed |= s.failed > 0;
            }
        }
        Command::Sweep(_) => {
            let rows = sweep(&config)?;
            write_sweep(&mut out, &config, &rows).context("writing sweep")?;
            if let Some(svg) = &config.svg {
                std::fs::write(svg, sweep_svg(&rows)).with_context(|| format!("writing {}", svg.display()))?;
            }
            any_failed = rows.iter().any(|r| r.failed_trials > 0);
        }
        Command::Theta(_) => {
            let est = theta(&config)?;
            write_theta(&mut out, &config, est.theta, &est.curve).context("writing theta")?;
            match est.std_error {
                Some(se) => eprintln!("theta({}) = {:.4} (std error {se:.4})", config.theta_r0, est.theta),
                None => eprintln!("theta({}) = {:.4}", config.theta_r0, est.theta),
            }
        }
        Command::Calibration(_) => {
            let rows = calibration_rows(&config, 101)?;
            let gap = rows.iter().map(|r| (r[2] - r[3]).abs()).fold(0.0, f64::max);
            write_calibration(&mut out, &config, &rows).context("writing calibration")?;
            eprintln!("{}: max |psi - closed form| = {gap:.2e}", config.loss_kind);
        }
        Command::Oracle(_) => {
            let values = oracle_values(&config)?;
            write_oracle(&mut out, &config, &values).context("writing oracle values")?;
        }
    }
    out.flush().context("flushing output")?;
    Ok(any_failed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Sweep(c) | Command::Theta(c) | Command::Calibration(c) | Command::Oracle(c) => c,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = common.jobs {
        pool = pool.num_threads(jobs);
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::FAILURE;
    }
    match execute(&cli.command, common) {
        Ok(true) if common.strict => {
            eprintln!("error: some trials failed");
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
