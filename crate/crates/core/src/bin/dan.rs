//! Command-line driver. Exit status: 0 success, 1 invalid input, 2 runtime failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dan_core::forecast::{self, ForecastConfig, ForecastError};
use dan_core::scenario::{Scenario, ScenarioError};
use dan_core::sim::{self, RunError};

#[derive(Parser)]
#[command(name = "dan", version, about = "Decentralized autonomous nation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts to a directory.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Train a forecaster on a dataset directory, or on `synthetic`.
    Forecast {
        dataset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write loss.csv and model.ckpt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-check a tiny forecaster against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize the metrics of a finished run.
    Report { dir: PathBuf },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(s) => s.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<ForecastError> for Failure {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::Parse(_) | ForecastError::Invalid(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    let mut stdout = std::io::stdout().lock();
    match cmd {
        Command::Run { scenario, seed, out } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let output = sim::run(&sc)?;
            sim::export(&output, &out).map_err(runtime)?;
            write!(stdout, "{}", output.metrics.summary()).map_err(runtime)?;
            writeln!(stdout, "artifacts written to {}", out.display()).map_err(runtime)?;
        }
        Command::Validate { scenario } => {
            let sc = Scenario::load(&scenario)?;
            sc.validate()?;
            writeln!(stdout, "{}: ok ({} epochs of {} ticks)", sc.name, sc.epochs(), sc.epoch_length).map_err(runtime)?;
        }
        Command::Forecast { dataset, config, out } => {
            let cfg = match config {
                Some(p) => ForecastConfig::load(&p)?,
                None => ForecastConfig::default(),
            };
            let data = forecast::load_dataset(&dataset, &cfg)?;
            let started = std::time::Instant::now();
            let result = forecast::train_and_evaluate(&data, &cfg)?;
            writeln!(
                stdout,
                "trained on {} samples for {} steps in {:.1?}",
                result.train_samples,
                result.report.losses.len(),
                started.elapsed()
            )
            .map_err(runtime)?;
            if let Some(l) = result.report.final_loss() {
                writeln!(stdout, "final training loss  {l:.6e}").map_err(runtime)?;
            }
            writeln!(stdout, "test mse             {:.6e}", result.test_mse).map_err(runtime)?;
            writeln!(stdout, "persistence mse      {:.6e}", result.baseline_mse).map_err(runtime)?;
            writeln!(stdout, "ratio                {:.4}", result.ratio()).map_err(runtime)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(runtime)?;
                let mut f = std::fs::File::create(dir.join("loss.csv")).map_err(runtime)?;
                result.report.write_csv(&mut f).map_err(runtime)?;
                let mut f = std::fs::File::create(dir.join("model.ckpt")).map_err(runtime)?;
                result.model.write_checkpoint(&mut f).map_err(runtime)?;
            }
        }
        Command::Gradcheck { seed } => {
            let started = std::time::Instant::now();
            let report = forecast::tiny_gradient_check(seed)?;
            writeln!(
                stdout,
                "{} coordinates, max relative error {:.3e}, {:.1?}",
                report.coordinates_checked,
                report.max_relative_error,
                started.elapsed()
            )
            .map_err(runtime)?;
            if report.max_relative_error >= 1e-4 {
                return Err(Failure::Runtime("gradient check exceeded 1e-4".into()));
            }
        }
        Command::Report { dir } => {
            let report = sim::load_metrics(&dir).map_err(runtime)?;
            write!(stdout, "{}", report.summary()).map_err(runtime)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DAN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
