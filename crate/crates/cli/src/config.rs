//! Experiment configuration: one JSON document, every leaf defaulted.
//!
//! [`validate_config`] applies defaults, resolves optional fields into
//! concrete values and checks every range, so the config echoed into a
//! manifest is the one that actually ran.

use nlsnet_core::dataset::DatasetSpec;
use nlsnet_core::estimator::{Algorithm, OptimizerConfig};
use nlsnet_core::landscape::{GridSpec, SweepAxis};
use nlsnet_core::propagator::FiberParams;
use nlsnet_core::signal::PulseSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;
use std::path::PathBuf;

/// A rejected config, with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Generate,
    Propagate,
    Scan,
    Fit,
    Sweep,
    BiasVariance,
    EstimateAlpha,
    GradCheck,
    StabilityProbe,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::Generate,
        Scenario::Propagate,
        Scenario::Scan,
        Scenario::Fit,
        Scenario::Sweep,
        Scenario::BiasVariance,
        Scenario::EstimateAlpha,
        Scenario::GradCheck,
        Scenario::StabilityProbe,
    ];

    /// The config spelling, e.g. `bias_variance`.
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Generate => "generate",
            Scenario::Propagate => "propagate",
            Scenario::Scan => "scan",
            Scenario::Fit => "fit",
            Scenario::Sweep => "sweep",
            Scenario::BiasVariance => "bias_variance",
            Scenario::EstimateAlpha => "estimate_alpha",
            Scenario::GradCheck => "grad_check",
            Scenario::StabilityProbe => "stability_probe",
        }
    }

    /// The subcommand spelling, e.g. `bias-variance`.
    pub fn command(&self) -> String {
        self.name().replace('_', "-")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub symbol_period_ps: f64,
    pub rolloff_rho: f64,
    pub samples_per_symbol: usize,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            symbol_period_ps: 10.0,
            rolloff_rho: 0.1,
            samples_per_symbol: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolsSection {
    pub num_symbols: usize,
    pub zero_pad_per_side: usize,
    pub launch_power_mw: f64,
}

impl Default for SymbolsSection {
    fn default() -> Self {
        Self {
            num_symbols: 200,
            zero_pad_per_side: 70,
            launch_power_mw: 1.0,
        }
    }
}

/// Ground truth used to generate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSection {
    pub beta: f64,
    pub gamma: f64,
    pub length_km: f64,
}

impl Default for FiberSection {
    fn default() -> Self {
        Self {
            beta: nlsnet_core::BETA_TRUE,
            gamma: nlsnet_core::GAMMA_TRUE,
            length_km: 80.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Layers of the fitted network.
    pub num_layers: usize,
    /// Layers of the data-generating solver; `null` means `num_layers`.
    pub oracle_layers: Option<usize>,
    pub layer_multiple: usize,
    pub oversample: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            num_layers: 100,
            oracle_layers: None,
            layer_multiple: 1,
            oversample: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    pub snr: f64,
    pub denoise: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            enabled: false,
            snr: 200.0,
            denoise: false,
        }
    }
}

/// `null` fields take the algorithm's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub algorithm: String,
    pub start: [f64; 2],
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub decay_rho: Option<f64>,
    pub epsilon_guard: Option<f64>,
    pub max_iters: Option<usize>,
    pub loss_tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub scale_beta: Option<f64>,
    pub scale_gamma: Option<f64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            algorithm: "adam".into(),
            start: [-23.0, 10.0],
            learning_rate: None,
            momentum: None,
            beta1: None,
            beta2: None,
            decay_rho: None,
            epsilon_guard: None,
            max_iters: None,
            loss_tol: None,
            grad_tol: None,
            scale_beta: None,
            scale_gamma: None,
        }
    }
}

/// Window `null` means ±20 % in beta and ±300 % in gamma around the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub beta_range: Option<[f64; 2]>,
    pub gamma_range: Option<[f64; 2]>,
    pub beta_points: usize,
    pub gamma_points: usize,
    /// Also refine the argmin cell with the configured optimizer.
    pub refine: bool,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            beta_range: None,
            gamma_range: None,
            beta_points: 101,
            gamma_points: 101,
            refine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub values: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: "num_layers".into(),
            values: vec![20, 40, 60, 80, 100],
        }
    }
}

/// Seeds of a group are `seed, seed + 1, ...`. The optimizer section drives
/// the pilot fit from `optimizer.start`; every other fit starts at the pilot
/// minimizer and runs heavy-ball descent with the `warm_` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasVarianceSection {
    pub ns_values: Vec<usize>,
    pub seeds_per_group: usize,
    pub warm_learning_rate: f64,
    pub warm_momentum: f64,
}

impl Default for BiasVarianceSection {
    fn default() -> Self {
        let w = OptimizerConfig::warm_start();
        Self {
            ns_values: vec![50, 100, 150, 200],
            seeds_per_group: 30,
            warm_learning_rate: w.learning_rate,
            warm_momentum: w.momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSection {
    pub num_points: usize,
    pub beta_range: [f64; 2],
    pub gamma_range: [f64; 2],
    /// `central` or `extrapolated`.
    pub method: String,
    pub rel_step: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            num_points: 100,
            beta_range: [-30.0, -10.0],
            gamma_range: [0.5, 5.0],
            method: "extrapolated".into(),
            rel_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    /// `(d_beta, d_gamma)` pairs around the fiber section.
    pub deltas: Vec<[f64; 2]>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            deltas: vec![
                [0.0, 0.0],
                [0.1, 0.0],
                [0.2, 0.0],
                [0.4, 0.0],
                [0.0, 0.1],
                [0.0, -0.1],
                [0.1, 0.1],
            ],
        }
    }
}

/// Signal files for `propagate` and `estimate_alpha`; generated data is
/// used where a path is `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    /// Loss applied to generated output before estimating it, in 1/km.
    pub injected_alpha_per_km: f64,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            input_path: None,
            output_path: None,
            injected_alpha_per_km: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub symbols: SymbolsSection,
    #[serde(default)]
    pub fiber: FiberSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bias_variance: BiasVarianceSection,
    #[serde(default)]
    pub grad_check: GradCheckSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub io: IoSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Parses, defaults, resolves and checks a raw config document.
pub fn validate_config(raw: &Value) -> Result<ExperimentConfig> {
    if !raw.is_object() {
        return Err(ConfigError::new("", "config must be a JSON object"));
    }
    if raw.get("scenario").is_none() {
        return Err(ConfigError::new("scenario", "missing required field"));
    }
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(raw).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Parses a config file's text.
pub fn parse_config(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))
}

/// Applies `path=value` to `raw`, creating intermediate objects. The value
/// is read as JSON when it parses and as a string otherwise.
pub fn apply_override(raw: &mut Value, assignment: &str) -> Result<()> {
    let (path, text) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new(assignment, "override must look like path=value"))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::new(path, "empty key in override path"));
    }
    let value = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()));
    let mut node = raw;
    for (depth, key) in keys.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(ConfigError::new(keys[..depth].join("."), "not an object"));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if depth + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("keys is non-empty")
}

fn check(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, message()))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    check(v.is_finite() && v > 0.0, path, || {
        format!("must be > 0, got {v}")
    })
}

fn unit(path: &str, v: f64) -> Result<()> {
    check((0.0..1.0).contains(&v), path, || {
        format!("must be in [0, 1), got {v}")
    })
}

fn at_least(path: &str, v: usize, min: usize) -> Result<()> {
    check(v >= min, path, || format!("must be >= {min}, got {v}"))
}

fn range(path: &str, r: [f64; 2]) -> Result<()> {
    check(
        r[0].is_finite() && r[1].is_finite() && r[0] < r[1],
        path,
        || format!("need finite lo < hi, got {r:?}"),
    )
}

impl ExperimentConfig {
    /// Fully defaulted config for `scenario`.
    pub fn defaults(scenario: Scenario) -> Self {
        let raw = serde_json::json!({ "scenario": scenario.name() });
        validate_config(&raw).expect("defaults are valid")
    }

    fn resolve(&mut self) -> Result<()> {
        let p = &self.pulse;
        positive("pulse.symbol_period_ps", p.symbol_period_ps)?;
        check(
            p.rolloff_rho > 0.0 && p.rolloff_rho <= 1.0,
            "pulse.rolloff_rho",
            || format!("must be in (0, 1], got {}", p.rolloff_rho),
        )?;
        at_least("pulse.samples_per_symbol", p.samples_per_symbol, 2)?;

        at_least("symbols.num_symbols", self.symbols.num_symbols, 1)?;
        let mw = self.symbols.launch_power_mw;
        check(
            mw.is_finite() && mw >= 0.0,
            "symbols.launch_power_mw",
            || format!("must be >= 0, got {mw}"),
        )?;

        let f = &self.fiber;
        check(f.beta.is_finite(), "fiber.beta", || {
            format!("must be finite, got {}", f.beta)
        })?;
        check(f.gamma.is_finite(), "fiber.gamma", || {
            format!("must be finite, got {}", f.gamma)
        })?;
        positive("fiber.length_km", f.length_km)?;

        let g = &mut self.grid;
        at_least("grid.num_layers", g.num_layers, 1)?;
        let oracle = *g.oracle_layers.get_or_insert(g.num_layers);
        at_least("grid.oracle_layers", oracle, 1)?;
        at_least("grid.layer_multiple", g.layer_multiple, 1)?;
        at_least("grid.oversample", g.oversample, 1)?;

        positive("noise.snr", self.noise.snr)?;

        self.resolve_optimizer()?;

        let truth = GridSpec::around(self.fiber.beta, self.fiber.gamma, 2)
            .map_err(|e| ConfigError::new("fiber", e.to_string()))?;
        let s = &mut self.scan;
        let br = *s
            .beta_range
            .get_or_insert([truth.beta_range.0, truth.beta_range.1]);
        let gr = *s
            .gamma_range
            .get_or_insert([truth.gamma_range.0, truth.gamma_range.1]);
        range("scan.beta_range", br)?;
        range("scan.gamma_range", gr)?;
        at_least("scan.beta_points", s.beta_points, 2)?;
        at_least("scan.gamma_points", s.gamma_points, 2)?;

        let axis = SweepAxis::from_name(&self.sweep.axis);
        check(axis.is_some(), "sweep.axis", || {
            format!(
                "unknown axis {:?}; expected num_layers, sampling_rate or num_symbols",
                self.sweep.axis
            )
        })?;
        check(!self.sweep.values.is_empty(), "sweep.values", || {
            "must be non-empty".into()
        })?;
        for (k, &v) in self.sweep.values.iter().enumerate() {
            at_least(&format!("sweep.values.{k}"), v, 1)?;
        }
        if axis == Some(SweepAxis::SamplingRate) {
            let data_sps = self.pulse.samples_per_symbol * self.grid.oversample;
            for (k, &v) in self.sweep.values.iter().enumerate() {
                check(
                    data_sps.is_multiple_of(v),
                    &format!("sweep.values.{k}"),
                    || format!("sampling rate {v} must divide the data rate {data_sps}"),
                )?;
            }
        }

        let bv = &self.bias_variance;
        check(!bv.ns_values.is_empty(), "bias_variance.ns_values", || {
            "must be non-empty".into()
        })?;
        for (k, &v) in bv.ns_values.iter().enumerate() {
            at_least(&format!("bias_variance.ns_values.{k}"), v, 1)?;
        }
        at_least("bias_variance.seeds_per_group", bv.seeds_per_group, 2)?;
        positive("bias_variance.warm_learning_rate", bv.warm_learning_rate)?;
        unit("bias_variance.warm_momentum", bv.warm_momentum)?;

        let gc = &self.grad_check;
        at_least("grad_check.num_points", gc.num_points, 1)?;
        range("grad_check.beta_range", gc.beta_range)?;
        range("grad_check.gamma_range", gc.gamma_range)?;
        check(
            matches!(gc.method.as_str(), "central" | "extrapolated"),
            "grad_check.method",
            || format!("expected central or extrapolated, got {:?}", gc.method),
        )?;
        positive("grad_check.rel_step", gc.rel_step)?;

        for (k, d) in self.probe.deltas.iter().enumerate() {
            check(
                d[0].is_finite() && d[1].is_finite(),
                &format!("probe.deltas.{k}"),
                || "must be finite".into(),
            )?;
        }
        check(!self.probe.deltas.is_empty(), "probe.deltas", || {
            "must be non-empty".into()
        })?;

        let a = self.io.injected_alpha_per_km;
        check(a.is_finite(), "io.injected_alpha_per_km", || {
            format!("must be finite, got {a}")
        })?;
        Ok(())
    }

    fn resolve_optimizer(&mut self) -> Result<()> {
        let noisy = self.noise.enabled;
        let o = &mut self.optimizer;
        let algorithm = Algorithm::from_name(&o.algorithm).ok_or_else(|| {
            ConfigError::new(
                "optimizer.algorithm",
                format!(
                    "unknown algorithm {:?}; expected gd_momentum, adam, adadelta or rmsprop",
                    o.algorithm
                ),
            )
        })?;
        let mut d = OptimizerConfig::for_algorithm(algorithm);
        if noisy {
            d = d.with_noisy_tolerances();
        }
        check(
            o.start.iter().all(|x| x.is_finite()),
            "optimizer.start",
            || "must be finite".into(),
        )?;
        let lr = *o.learning_rate.get_or_insert(d.learning_rate);
        let momentum = *o.momentum.get_or_insert(d.momentum);
        let beta1 = *o.beta1.get_or_insert(d.beta1);
        let beta2 = *o.beta2.get_or_insert(d.beta2);
        let rho = *o.decay_rho.get_or_insert(d.decay_rho);
        let eps = *o.epsilon_guard.get_or_insert(d.epsilon_guard);
        let max_iters = *o.max_iters.get_or_insert(d.max_iters);
        let loss_tol = *o.loss_tol.get_or_insert(d.loss_tol);
        let grad_tol = *o.grad_tol.get_or_insert(d.grad_tol);
        let sb = *o.scale_beta.get_or_insert(d.scale_beta);
        let sg = *o.scale_gamma.get_or_insert(d.scale_gamma);
        positive("optimizer.learning_rate", lr)?;
        unit("optimizer.momentum", momentum)?;
        unit("optimizer.beta1", beta1)?;
        unit("optimizer.beta2", beta2)?;
        unit("optimizer.decay_rho", rho)?;
        positive("optimizer.epsilon_guard", eps)?;
        at_least("optimizer.max_iters", max_iters, 1)?;
        check(loss_tol >= 0.0, "optimizer.loss_tol", || {
            format!("must be >= 0, got {loss_tol}")
        })?;
        check(grad_tol >= 0.0, "optimizer.grad_tol", || {
            format!("must be >= 0, got {grad_tol}")
        })?;
        positive("optimizer.scale_beta", sb)?;
        positive("optimizer.scale_gamma", sg)?;
        Ok(())
    }

    /// The resolved optimizer; only meaningful after validation.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        let algorithm = Algorithm::from_name(&o.algorithm).expect("validated");
        let d = OptimizerConfig::for_algorithm(algorithm);
        OptimizerConfig {
            algorithm,
            learning_rate: o.learning_rate.unwrap_or(d.learning_rate),
            momentum: o.momentum.unwrap_or(d.momentum),
            beta1: o.beta1.unwrap_or(d.beta1),
            beta2: o.beta2.unwrap_or(d.beta2),
            decay_rho: o.decay_rho.unwrap_or(d.decay_rho),
            epsilon_guard: o.epsilon_guard.unwrap_or(d.epsilon_guard),
            max_iters: o.max_iters.unwrap_or(d.max_iters),
            loss_tol: o.loss_tol.unwrap_or(d.loss_tol),
            grad_tol: o.grad_tol.unwrap_or(d.grad_tol),
            scale_beta: o.scale_beta.unwrap_or(d.scale_beta),
            scale_gamma: o.scale_gamma.unwrap_or(d.scale_gamma),
        }
    }

    pub fn warm_optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.bias_variance.warm_learning_rate,
            momentum: self.bias_variance.warm_momentum,
            ..OptimizerConfig::warm_start()
        }
    }

    pub fn start(&self) -> (f64, f64) {
        (self.optimizer.start[0], self.optimizer.start[1])
    }

    pub fn pulse_spec(&self) -> PulseSpec {
        let p = &self.pulse;
        PulseSpec::new(p.symbol_period_ps, p.rolloff_rho, p.samples_per_symbol).expect("validated")
    }

    pub fn fiber_params(&self) -> FiberParams {
        let f = &self.fiber;
        FiberParams::new(f.beta, f.gamma, f.length_km).expect("validated")
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            pulse: self.pulse_spec(),
            num_symbols: self.symbols.num_symbols,
            zero_pad_per_side: self.symbols.zero_pad_per_side,
            launch_power_mw: self.symbols.launch_power_mw,
            fiber: self.fiber_params(),
            model_layers: self.grid.num_layers,
            oracle_layers: self.grid.oracle_layers.unwrap_or(self.grid.num_layers),
            layer_multiple: self.grid.layer_multiple,
            oversample: self.grid.oversample,
            snr: if self.noise.enabled {
                self.noise.snr
            } else {
                f64::INFINITY
            },
            denoise: self.noise.denoise,
            seed: self.seed,
        }
    }

    pub fn scan_spec(&self) -> GridSpec {
        let s = &self.scan;
        let (b, g) = (
            s.beta_range.expect("resolved"),
            s.gamma_range.expect("resolved"),
        );
        GridSpec::new((b[0], b[1]), (g[0], g[1]), s.beta_points, s.gamma_points).expect("validated")
    }

    pub fn sweep_axis(&self) -> SweepAxis {
        SweepAxis::from_name(&self.sweep.axis).expect("validated")
    }

    pub fn truth(&self) -> (f64, f64) {
        (self.fiber.beta, self.fiber.gamma)
    }
}
