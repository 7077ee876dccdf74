//! Loss-landscape scans, global-minimum refinement, hyper-parameter sweeps,
//! bias-variance statistics and a parameter-sensitivity probe.
//!
//! Every parallel map here collects into index order, so results do not
//! depend on the number of threads.

use rayon::prelude::*;

use crate::dataset::DatasetSpec;
use crate::error::invalid;
use crate::estimator::{fit_with, FitOutcome, OptimizerConfig, TrainHistory};
use crate::nlsnet::NlsNet;
use crate::propagator::{propagate, FiberParams, SimGrid};
use crate::signal::{norm_sq, ComplexSignal};
use crate::{Error, Result};

/// Rectangular `(beta, gamma)` grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub beta_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub beta_points: usize,
    pub gamma_points: usize,
}

impl GridSpec {
    pub fn new(
        beta_range: (f64, f64),
        gamma_range: (f64, f64),
        beta_points: usize,
        gamma_points: usize,
    ) -> Result<Self> {
        let spec = Self {
            beta_range,
            gamma_range,
            beta_points,
            gamma_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `beta` within ±20 % and `gamma` within ±300 % of `(beta, gamma)`.
    pub fn around(beta: f64, gamma: f64, points: usize) -> Result<Self> {
        let db = 0.2 * beta.abs();
        let dg = 3.0 * gamma.abs();
        Self::new(
            (beta - db, beta + db),
            (gamma - dg, gamma + dg),
            points,
            points,
        )
    }

    /// 101 × 101 cells around the ground truth.
    pub fn desk_default() -> Self {
        Self::around(crate::BETA_TRUE, crate::GAMMA_TRUE, 101).expect("valid default window")
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &'static str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo < hi {
                Ok(())
            } else {
                Err(invalid(
                    name,
                    format!("need finite lo < hi, got ({lo}, {hi})"),
                ))
            }
        };
        range("beta_range", self.beta_range)?;
        range("gamma_range", self.gamma_range)?;
        if self.beta_points < 2 || self.gamma_points < 2 {
            return Err(invalid("points", "need at least 2 points per axis"));
        }
        Ok(())
    }

    pub fn beta_at(&self, i: usize) -> f64 {
        axis_value(self.beta_range, self.beta_points, i)
    }

    pub fn gamma_at(&self, j: usize) -> f64 {
        axis_value(self.gamma_range, self.gamma_points, j)
    }

    pub fn num_cells(&self) -> usize {
        self.beta_points * self.gamma_points
    }

    /// Index of the grid node nearest to `(beta, gamma)`.
    pub fn nearest(&self, beta: f64, gamma: f64) -> (usize, usize) {
        (
            nearest_index(self.beta_range, self.beta_points, beta),
            nearest_index(self.gamma_range, self.gamma_points, gamma),
        )
    }
}

fn axis_value((lo, hi): (f64, f64), points: usize, i: usize) -> f64 {
    if i + 1 == points {
        return hi;
    }
    lo + (hi - lo) * i as f64 / (points - 1) as f64
}

fn nearest_index((lo, hi): (f64, f64), points: usize, x: f64) -> usize {
    let pos = (x - lo) / (hi - lo) * (points - 1) as f64;
    pos.round().clamp(0.0, (points - 1) as f64) as usize
}

/// Loss values over a [`GridSpec`], row-major with `beta` as the slow index.
/// Cells whose forward pass blew up hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub spec: GridSpec,
    pub losses: Vec<f64>,
}

impl LandscapeGrid {
    pub fn new(spec: GridSpec, losses: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if losses.len() != spec.num_cells() {
            return Err(Error::LengthMismatch {
                expected: spec.num_cells(),
                found: losses.len(),
            });
        }
        if losses.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(invalid("losses", "must be >= 0 or +inf"));
        }
        Ok(Self { spec, losses })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.losses[i * self.spec.gamma_points + j]
    }

    /// `(i, j, loss)` of the smallest finite cell; ties go to the first in
    /// row-major order.
    pub fn argmin(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &l) in self.losses.iter().enumerate() {
            if l.is_finite() && best.is_none_or(|(_, b)| l < b) {
                best = Some((k, l));
            }
        }
        best.map(|(k, l)| (k / self.spec.gamma_points, k % self.spec.gamma_points, l))
    }

    /// Number of 4-connected components of cells with loss at most
    /// `factor` times the minimum.
    pub fn low_basin_count(&self, factor: f64) -> usize {
        let Some((_, _, min)) = self.argmin() else {
            return 0;
        };
        let level = min * factor;
        let (rows, cols) = (self.spec.beta_points, self.spec.gamma_points);
        let inside: Vec<bool> = self.losses.iter().map(|&l| l <= level).collect();
        let mut seen = vec![false; inside.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..inside.len() {
            if !inside[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = (k / cols, k % cols);
                let mut visit = |ni: usize, nj: usize| {
                    let nk = ni * cols + nj;
                    if inside[nk] && !seen[nk] {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < rows {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < cols {
                    visit(i, j + 1);
                }
            }
        }
        count
    }
}

/// Evaluates `J` on every cell of `spec`.
pub fn scan_grid(
    input: &ComplexSignal,
    target: &ComplexSignal,
    grid: &SimGrid,
    spec: &GridSpec,
) -> Result<LandscapeGrid> {
    spec.validate()?;
    grid.check_signal(input)?;
    grid.check_signal(target)?;
    if norm_sq(target.samples()) == 0.0 {
        return Err(Error::ZeroNorm("target"));
    }
    let net = NlsNet::new(*grid);
    let gp = spec.gamma_points;
    let losses = (0..spec.num_cells())
        .into_par_iter()
        .map(
            |k| match net.loss(spec.beta_at(k / gp), spec.gamma_at(k % gp), input, target) {
                Ok(l) if l.value.is_finite() => l.value,
                _ => f64::INFINITY,
            },
        )
        .collect();
    LandscapeGrid::new(*spec, losses)
}

/// A locally refined minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMin {
    pub beta: f64,
    pub gamma: f64,
    pub loss: f64,
    pub history: TrainHistory,
}

/// Starts a local fit from the argmin cell of `landscape`.
pub fn find_global_min(
    landscape: &LandscapeGrid,
    input: &ComplexSignal,
    target: &ComplexSignal,
    grid: &SimGrid,
    config: &OptimizerConfig,
) -> Result<GlobalMin> {
    let (i, j, _) = landscape.argmin().ok_or(Error::NoFiniteCell)?;
    let start = (landscape.spec.beta_at(i), landscape.spec.gamma_at(j));
    let out = fit_with(&NlsNet::new(*grid), input, target, start, config, None)?;
    Ok(GlobalMin {
        beta: out.beta,
        gamma: out.gamma,
        loss: out.loss,
        history: out.history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NumLayers,
    /// Samples per symbol of the model; the data-generating solver keeps
    /// the base sampling rate and is downsampled.
    SamplingRate,
    NumSymbols,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NumLayers => "num_layers",
            SweepAxis::SamplingRate => "sampling_rate",
            SweepAxis::NumSymbols => "num_symbols",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::NumLayers, Self::SamplingRate, Self::NumSymbols]
            .into_iter()
            .find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub loss: f64,
    pub beta: f64,
    pub gamma: f64,
    pub e_beta: f64,
    pub e_gamma: f64,
}

/// Regenerates the data for each `value` of `axis`, fits from `start` and
/// records the minimal loss and the estimation errors against
/// `base.fiber`. The data-generating solver is the one described by `base`
/// throughout; only the model side changes, except on the symbols axis where
/// the data length is the hyper-parameter.
pub fn hyperparameter_sweep(
    axis: SweepAxis,
    values: &[usize],
    base: &DatasetSpec,
    start: (f64, f64),
    config: &OptimizerConfig,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(invalid("values", "must be non-empty"));
    }
    let specs = values
        .iter()
        .map(|&v| sweep_spec(axis, v, base))
        .collect::<Result<Vec<_>>>()?;
    let truth = (base.fiber.beta, base.fiber.gamma);
    values
        .par_iter()
        .zip(specs.par_iter())
        .map(|(&value, spec)| {
            let data = spec.build()?;
            let out = fit_with(
                &NlsNet::new(data.grid),
                &data.input,
                &data.target,
                start,
                config,
                None,
            )?;
            Ok(SweepRow {
                value,
                loss: out.loss,
                beta: out.beta,
                gamma: out.gamma,
                e_beta: (out.beta - truth.0).abs(),
                e_gamma: (out.gamma - truth.1).abs(),
            })
        })
        .collect()
}

fn sweep_spec(axis: SweepAxis, value: usize, base: &DatasetSpec) -> Result<DatasetSpec> {
    let mut spec = *base;
    match axis {
        SweepAxis::NumLayers => {
            if value == 0 {
                return Err(invalid("values", "layer counts must be >= 1"));
            }
            spec.model_layers = value;
        }
        SweepAxis::SamplingRate => {
            let oracle_sps = base.pulse.samples_per_symbol() * base.oversample;
            if value == 0 || !oracle_sps.is_multiple_of(value) {
                return Err(invalid(
                    "values",
                    format!("sampling rate {value} must divide the data rate {oracle_sps} sps"),
                ));
            }
            spec.pulse = base.pulse.with_samples_per_symbol(value)?;
            spec.oversample = oracle_sps / value;
        }
        SweepAxis::NumSymbols => {
            if value == 0 {
                return Err(invalid("values", "symbol counts must be >= 1"));
            }
            spec.num_symbols = value;
        }
    }
    Ok(spec)
}

/// Empirical statistics of fitted minimizers over random symbol sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerStats {
    pub num_symbols: usize,
    pub group_size: usize,
    pub mean: [f64; 2],
    /// Unbiased sample covariance (divisor `n - 1`).
    pub cov: [[f64; 2]; 2],
    /// `|mean - truth|` per parameter.
    pub bias: [f64; 2],
    pub n_ok: usize,
    pub n_excluded: usize,
}

impl MinimizerStats {
    /// Statistics of `points`; `NaN` moments when fewer than two points.
    pub fn from_points(
        num_symbols: usize,
        group_size: usize,
        points: &[[f64; 2]],
        truth: (f64, f64),
    ) -> Self {
        let n = points.len();
        let mut mean = [f64::NAN; 2];
        let mut cov = [[f64::NAN; 2]; 2];
        if n >= 1 {
            // Shifted by the first point, so identical points give exactly
            // zero spread.
            let origin = points[0];
            let mut d = [0.0; 2];
            for p in points {
                d[0] += p[0] - origin[0];
                d[1] += p[1] - origin[1];
            }
            mean = [origin[0] + d[0] / n as f64, origin[1] + d[1] / n as f64];
            if n >= 2 {
                let off = [d[0] / n as f64, d[1] / n as f64];
                let mut c = [[0.0; 2]; 2];
                for p in points {
                    let x = [p[0] - origin[0] - off[0], p[1] - origin[1] - off[1]];
                    for a in 0..2 {
                        for b in 0..2 {
                            c[a][b] += x[a] * x[b];
                        }
                    }
                }
                let denom = (n - 1) as f64;
                let sym = 0.5 * (c[0][1] + c[1][0]) / denom;
                cov = [[c[0][0] / denom, sym], [sym, c[1][1] / denom]];
            }
        }
        Self {
            num_symbols,
            group_size,
            mean,
            cov,
            bias: [(mean[0] - truth.0).abs(), (mean[1] - truth.1).abs()],
            n_ok: n,
            n_excluded: group_size - n.min(group_size),
        }
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let [[a, b], [_, d]] = self.cov;
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let lo = half_tr - disc;
        // The other root via the determinant is exact when the roots differ
        // greatly in size.
        let hi = half_tr + disc;
        if hi > 0.0 {
            lo.max((a * d - b * b) / hi)
        } else {
            lo
        }
    }
}

/// One fit per seed and per `Ns`, with the symbol stream of each seed
/// shared across the `Ns` values (a longer sequence extends a shorter one).
///
/// A pilot fit with `pilot` on the first seed from `start` locates the
/// basin; every fit in the experiment then starts from the pilot minimizer
/// and runs `warm` (see [`OptimizerConfig::warm_start`]). Fits that error,
/// blow up or stop without converging are excluded and counted.
pub fn bias_variance_experiment(
    base: &DatasetSpec,
    ns_values: &[usize],
    seeds: &[u64],
    start: (f64, f64),
    pilot: &OptimizerConfig,
    warm: &OptimizerConfig,
) -> Result<Vec<MinimizerStats>> {
    if seeds.len() < 2 {
        return Err(invalid("seeds", "need at least 2 seeds per group"));
    }
    if ns_values.is_empty() || ns_values.contains(&0) {
        return Err(invalid("ns_values", "must be non-empty and >= 1"));
    }
    let truth = (base.fiber.beta, base.fiber.gamma);
    warm.validate()?;
    let run =
        |ns: usize, seed: u64, from: (f64, f64), config: &OptimizerConfig| -> Result<FitOutcome> {
            let data = DatasetSpec {
                num_symbols: ns,
                ..base.with_seed(seed)
            }
            .build()?;
            fit_with(
                &NlsNet::new(data.grid),
                &data.input,
                &data.target,
                from,
                config,
                Some(truth),
            )
        };
    let first = run(ns_values[0], seeds[0], start, pilot)?;
    let from = (first.beta, first.gamma);

    let jobs: Vec<(usize, u64)> = ns_values
        .iter()
        .flat_map(|&ns| seeds.iter().map(move |&s| (ns, s)))
        .collect();
    let results: Vec<Option<[f64; 2]>> = jobs
        .par_iter()
        .map(|&(ns, seed)| match run(ns, seed, from, warm) {
            Ok(out)
                if out.history.converged
                    && out.loss.is_finite()
                    && out.beta.is_finite()
                    && out.gamma.is_finite() =>
            {
                Some([out.beta, out.gamma])
            }
            _ => None,
        })
        .collect();

    Ok(ns_values
        .iter()
        .enumerate()
        .map(|(g, &ns)| {
            let group = &results[g * seeds.len()..(g + 1) * seeds.len()];
            let points: Vec<[f64; 2]> = group.iter().flatten().copied().collect();
            MinimizerStats::from_points(ns, seeds.len(), &points, truth)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub d_beta: f64,
    pub d_gamma: f64,
    /// `||A_out(beta + d_beta, gamma + d_gamma) - A_out(beta, gamma)||₂`.
    pub distance: f64,
}

/// Output sensitivity to parameter perturbations around `base`.
pub fn stability_probe(
    input: &ComplexSignal,
    base: &FiberParams,
    deltas: &[(f64, f64)],
    grid: &SimGrid,
) -> Result<Vec<ProbeRow>> {
    if deltas.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(invalid("deltas", "must be finite"));
    }
    let reference = propagate(input, base, grid)?;
    deltas
        .par_iter()
        .map(|&(d_beta, d_gamma)| {
            let params = base.with_coefficients(base.beta + d_beta, base.gamma + d_gamma);
            let out = propagate(input, &params, grid)?;
            let diff: Vec<_> = out
                .samples()
                .iter()
                .zip(reference.samples())
                .map(|(a, b)| a - b)
                .collect();
            Ok(ProbeRow {
                d_beta,
                d_gamma,
                distance: norm_sq(&diff).sqrt(),
            })
        })
        .collect()
}
