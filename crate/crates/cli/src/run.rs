//! Scenario execution. Every data file is a pure function of the config;
//! only `manifest.json` carries wall-clock information.

use crate::config::{ConfigError, ExperimentConfig, Scenario};
use crate::formats::{self, FormatError, GradCheckRow};
use nlsnet_core::attenuation::estimate_alpha;
use nlsnet_core::estimator::fit;
use nlsnet_core::landscape::{
    bias_variance_experiment, find_global_min, hyperparameter_sweep, scan_grid, stability_probe,
};
use nlsnet_core::nlsnet::NlsNet;
use nlsnet_core::propagator::{propagate, SimGrid};
use nlsnet_core::signal::ComplexSignal;
use nlsnet_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Build identifier recorded in manifests.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(nlsnet_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
}

impl RunError {
    /// 2 for config errors, 3 for numerical failures, 1 for file problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io { .. } | RunError::Format { .. } => 1,
        }
    }
}

impl From<nlsnet_core::Error> for RunError {
    fn from(e: nlsnet_core::Error) -> Self {
        // Arguments the config check cannot see (e.g. a signal file that is
        // shorter than the grid) still count as configuration errors.
        match e {
            nlsnet_core::Error::InvalidParameter { name, reason } => {
                RunError::Config(ConfigError::new(name, reason))
            }
            nlsnet_core::Error::LengthMismatch { .. } => {
                RunError::Config(ConfigError::new("io", e.to_string()))
            }
            e => RunError::Numerical(e),
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Data files, in the order written; excludes the manifest.
    pub outputs: Vec<PathBuf>,
    /// Text meant for stdout (the attenuation JSON), if any.
    pub stdout: Option<String>,
    pub wall_clock_s: f64,
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    fn put_csv(
        &mut self,
        name: &str,
        text: std::result::Result<String, FormatError>,
    ) -> Result<()> {
        let text = text.map_err(|source| RunError::Format {
            path: self.dir.join(name),
            source,
        })?;
        self.put(name, &text)
    }
}

fn read_signal(path: &Path) -> Result<ComplexSignal> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    formats::read_signal_json(&text).map_err(|source| RunError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs the scenario of a validated config, writing into `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let clock = Instant::now();
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut w = Writer {
        dir,
        written: Vec::new(),
    };
    let stdout = execute(config, &mut w)?;
    let wall_clock_s = clock.elapsed().as_secs_f64();

    let manifest = serde_json::json!({
        "config": config,
        "build": BUILD_ID,
        "started_unix_s": started,
        "wall_clock_s": wall_clock_s,
        "outputs": w.written.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let outputs = std::mem::take(&mut w.written);
    w.put("manifest.json", &text)?;
    Ok(RunReport {
        outputs,
        stdout,
        wall_clock_s,
    })
}

fn execute(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Option<String>> {
    let spec = cfg.dataset_spec();
    let optimizer = cfg.optimizer_config();
    match cfg.scenario {
        Scenario::Generate => {
            let d = spec.build()?;
            w.put("input.json", &formats::write_signal_json(&d.input))?;
            w.put("target.json", &formats::write_signal_json(&d.target))?;
        }
        Scenario::Propagate => {
            let input = match &cfg.io.input_path {
                Some(p) => read_signal(p)?,
                None => spec.build()?.input,
            };
            let grid = SimGrid::for_signal(&input, cfg.grid.num_layers, cfg.fiber.length_km)?;
            let out = propagate(&input, &cfg.fiber_params(), &grid)?;
            w.put("output.json", &formats::write_signal_json(&out))?;
        }
        Scenario::EstimateAlpha => {
            let (input, output) = match (&cfg.io.input_path, &cfg.io.output_path) {
                (Some(a), Some(b)) => (read_signal(a)?, read_signal(b)?),
                (None, None) => {
                    let d = spec.build()?;
                    let factor = (-cfg.io.injected_alpha_per_km * cfg.fiber.length_km / 2.0).exp();
                    (d.input, d.target.scaled(C64::new(factor, 0.0)))
                }
                _ => {
                    return Err(ConfigError::new(
                        "io",
                        "set both input_path and output_path, or neither to use generated data",
                    )
                    .into())
                }
            };
            let est = estimate_alpha(&input, &output, cfg.fiber.length_km)?;
            let text = formats::write_alpha_json(&est);
            w.put("alpha.json", &text)?;
            return Ok(Some(text));
        }
        Scenario::Fit => {
            let d = spec.build()?;
            let out = fit(
                &d.input,
                &d.target,
                cfg.start(),
                &d.grid,
                &optimizer,
                Some(cfg.truth()),
            )?;
            w.put_csv("history.csv", formats::write_history_csv(&out.history))?;
            let summary = serde_json::json!({
                "beta": out.beta,
                "gamma": out.gamma,
                "loss": out.loss,
                "iterations": out.history.records.len().saturating_sub(1),
                "stop_reason": out.history.stop_reason.name(),
                "converged": out.history.converged,
            });
            w.put(
                "fit.json",
                &(serde_json::to_string_pretty(&summary).expect("serializes") + "\n"),
            )?;
        }
        Scenario::Scan => {
            let d = spec.build()?;
            let landscape = scan_grid(&d.input, &d.target, &d.grid, &cfg.scan_spec())?;
            w.put_csv("landscape.csv", formats::write_landscape_csv(&landscape))?;
            if cfg.scan.refine {
                let g = find_global_min(&landscape, &d.input, &d.target, &d.grid, &optimizer)?;
                w.put_csv("refine_history.csv", formats::write_history_csv(&g.history))?;
            }
        }
        Scenario::Sweep => {
            let rows = hyperparameter_sweep(
                cfg.sweep_axis(),
                &cfg.sweep.values,
                &spec,
                cfg.start(),
                &optimizer,
            )?;
            w.put_csv("sweep.csv", formats::write_sweep_csv(&rows))?;
        }
        Scenario::BiasVariance => {
            let seeds: Vec<u64> = (0..cfg.bias_variance.seeds_per_group as u64)
                .map(|k| cfg.seed.wrapping_add(k))
                .collect();
            let stats = bias_variance_experiment(
                &spec,
                &cfg.bias_variance.ns_values,
                &seeds,
                cfg.start(),
                &optimizer,
                &cfg.warm_optimizer_config(),
            )?;
            w.put("stats.json", &formats::write_stats_json(&stats))?;
        }
        Scenario::GradCheck => {
            let rows = grad_check_rows(cfg)?;
            w.put_csv("grad_check.csv", formats::write_grad_check_csv(&rows))?;
        }
        Scenario::StabilityProbe => {
            let d = spec.build()?;
            let deltas: Vec<(f64, f64)> = cfg.probe.deltas.iter().map(|d| (d[0], d[1])).collect();
            let rows = stability_probe(&d.input, &cfg.fiber_params(), &deltas, &d.grid)?;
            w.put_csv("stability.csv", formats::write_probe_csv(&rows))?;
        }
    }
    Ok(None)
}

/// Points are uniform in the configured box, drawn from `seed`.
fn grad_check_rows(cfg: &ExperimentConfig) -> Result<Vec<GradCheckRow>> {
    use rayon::prelude::*;
    let d = cfg.dataset_spec().build()?;
    let net = NlsNet::new(d.grid);
    let gc = &cfg.grad_check;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<(f64, f64)> = (0..gc.num_points)
        .map(|_| {
            let b = rng.random_range(gc.beta_range[0]..gc.beta_range[1]);
            let g = rng.random_range(gc.gamma_range[0]..gc.gamma_range[1]);
            (b, g)
        })
        .collect();
    points
        .par_iter()
        .map(|&(beta, gamma)| {
            let c = if gc.method == "central" {
                net.grad_check(beta, gamma, &d.input, &d.target, gc.rel_step)?
            } else {
                net.grad_check_extrapolated(beta, gamma, &d.input, &d.target, gc.rel_step)?
            };
            Ok(GradCheckRow {
                beta,
                gamma,
                analytic: c.analytic,
                finite_difference: c.finite_difference,
                rel_err: c.rel_err,
            })
        })
        .collect()
}
