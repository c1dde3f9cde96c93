use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reeb_lab::{parse, run, ExperimentConfig, LabError, Task};

#[derive(Parser)]
#[command(
    name = "reeb-lab",
    version,
    about = "Geodesic and Reeb flow experiments"
)]
struct Cli {
    #[command(subcommand)]
    task: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative integrator tolerance; overrides the configuration.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Pullback, Reeb-field and conjugacy residuals.
    Identities,
    /// Integrate one geodesic or Reeb trajectory.
    Integrate,
    /// Find and analyse a closed geodesic.
    FindOrbit,
    /// Conley-Zehnder index of a closed orbit's Reeb lift.
    Cz,
    /// Return map of the annulus section over a closed geodesic.
    Birkhoff,
    /// Closed-orbit scan over a family of metrics.
    Scan,
}

impl From<Command> for Task {
    fn from(c: Command) -> Self {
        match c {
            Command::Identities => Task::Identities,
            Command::Integrate => Task::Integrate,
            Command::FindOrbit => Task::FindOrbit,
            Command::Cz => Task::Cz,
            Command::Birkhoff => Task::Birkhoff,
            Command::Scan => Task::Scan,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            parse(&text).map_err(|e| match e {
                LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(LabError::Config(format!(
                "--tol must be positive, got {tol}"
            )));
        }
        cfg.tol = cfg.tol.with_rtol(tol);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are validation errors; help and version are not errors.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let task = Task::from(cli.task);
    let result = load(&cli).and_then(|cfg| {
        let dir = cli
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        run(task, &cfg, &dir)
    });
    match result {
        Ok((outcome, files)) => {
            println!("{}: {}", task.name(), outcome.summary);
            for f in files {
                println!("  wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
