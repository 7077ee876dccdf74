//! Config-driven experiment runner for `nlsnet-core`.
//!
//! Each subcommand is one scenario. A run reads a JSON config (or the
//! defaults), applies `--set path=value` overrides, validates, executes and
//! writes CSV/JSON data plus a `manifest.json` into the output directory.

pub mod config;
pub mod formats;
pub mod run;

use clap::{Parser, Subcommand};
use config::{
    apply_override, parse_config, validate_config, ConfigError, ExperimentConfig, Scenario,
};
use serde_json::Value;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "nlsnet",
    version,
    about = "Fit NLSE coefficients with a split-step network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config file; unspecified fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one config leaf, e.g. `--set optimizer.learning_rate=0.01`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Write an (input, target) signal pair.
    Generate,
    /// Propagate a signal file (or generated input) through the fiber.
    Propagate,
    /// Evaluate the loss on a (beta, gamma) grid.
    Scan,
    /// Fit (beta, gamma) with the configured optimizer.
    Fit,
    /// Fit across values of one hyper-parameter.
    Sweep,
    /// Minimizer statistics over random symbol sequences.
    BiasVariance,
    /// Closed-form attenuation from input and output norms.
    EstimateAlpha,
    /// Compare analytic gradients with finite differences.
    GradCheck,
    /// Output distance under parameter perturbations.
    StabilityProbe,
}

impl Command {
    pub fn scenario(self) -> Scenario {
        match self {
            Command::Generate => Scenario::Generate,
            Command::Propagate => Scenario::Propagate,
            Command::Scan => Scenario::Scan,
            Command::Fit => Scenario::Fit,
            Command::Sweep => Scenario::Sweep,
            Command::BiasVariance => Scenario::BiasVariance,
            Command::EstimateAlpha => Scenario::EstimateAlpha,
            Command::GradCheck => Scenario::GradCheck,
            Command::StabilityProbe => Scenario::StabilityProbe,
        }
    }
}

/// Builds the validated config the command line asks for.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                ConfigError::new("", format!("cannot read {}: {e}", path.display()))
            })?;
            parse_config(&text)?
        }
        None => Value::Object(Default::default()),
    };
    let scenario = cli.command.scenario();
    if let Some(obj) = raw.as_object_mut() {
        match obj.get("scenario") {
            Some(v) if v != scenario.name() => {
                return Err(ConfigError::new(
                    "scenario",
                    format!(
                        "config says {v} but the subcommand is {}",
                        scenario.command()
                    ),
                ));
            }
            _ => {
                obj.insert("scenario".into(), scenario.name().into());
            }
        }
    }
    for o in &cli.overrides {
        apply_override(&mut raw, o)?;
    }
    if let Some(seed) = cli.seed {
        apply_override(&mut raw, &format!("seed={seed}"))?;
    }
    if let Some(out) = &cli.out {
        raw["output_dir"] = Value::String(out.to_string_lossy().into_owned());
    }
    if cli.threads == Some(0) {
        return Err(ConfigError::new("threads", "must be >= 1"));
    }
    validate_config(&raw)
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config at {e}");
            return 2;
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run::run(&config)),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return 1;
            }
        },
        None => run::run(&config),
    };
    match outcome {
        Ok(report) => {
            if let Some(text) = &report.stdout {
                let _ = std::io::stdout().write_all(text.as_bytes());
            }
            for p in &report.outputs {
                eprintln!("wrote {}", p.display());
            }
            eprintln!(
                "{} done in {:.2} s",
                config.scenario.command(),
                report.wall_clock_s
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
