//! Strang-split forward solver for
//! `dA/dz = -(i beta / 2) d²A/dt² + i gamma |A|² A`.
//!
//! Dispersion steps are exact on the periodic grid: the signal spectrum is
//! multiplied by `exp(i beta dz omega² / 2)`. Kerr steps are the pointwise
//! map `w -> w exp(i gamma dz |w|²)`. Adjacent half dispersion steps are fused,
//! so an `M`-layer propagation costs `M + 1` FFT pairs.

use crate::error::invalid;
use crate::signal::{modulate, ComplexSignal, PulseSpec, SymbolSequence};
use crate::spectral::{angular_frequencies, Spectral};
use crate::{Error, Result, C64};

/// Physical coefficients of the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberParams {
    /// Dispersion, ps²/km.
    pub beta: f64,
    /// Kerr nonlinearity, 1/(W·km).
    pub gamma: f64,
    /// Link length, km.
    pub length: f64,
}

impl FiberParams {
    pub fn new(beta: f64, gamma: f64, length: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(invalid("beta", format!("must be finite, got {beta}")));
        }
        if !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be finite, got {gamma}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("length", format!("must be > 0, got {length}")));
        }
        Ok(Self {
            beta,
            gamma,
            length,
        })
    }

    /// `(beta, gamma) = (-21.6, 1.6)` over 80 km.
    pub fn full_scale() -> Self {
        Self {
            beta: crate::BETA_TRUE,
            gamma: crate::GAMMA_TRUE,
            length: 80.0,
        }
    }

    pub fn with_coefficients(&self, beta: f64, gamma: f64) -> Self {
        Self {
            beta,
            gamma,
            length: self.length,
        }
    }
}

/// Discretization: `M` layers of length `Z / M`, `N` samples spaced `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    num_layers: usize,
    num_samples: usize,
    length: f64,
    tau: f64,
}

impl SimGrid {
    pub fn new(num_layers: usize, num_samples: usize, length: f64, tau: f64) -> Result<Self> {
        if num_layers == 0 {
            return Err(invalid("num_layers", "must be >= 1"));
        }
        if num_samples == 0 {
            return Err(invalid("num_samples", "must be >= 1"));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("length", format!("must be > 0, got {length}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid("tau", format!("must be > 0, got {tau}")));
        }
        Ok(Self {
            num_layers,
            num_samples,
            length,
            tau,
        })
    }

    /// Grid matching `signal` with `num_layers` steps over `length`.
    pub fn for_signal(signal: &ComplexSignal, num_layers: usize, length: f64) -> Result<Self> {
        Self::new(num_layers, signal.len(), length, signal.tau())
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Layer thickness `zeta = Z / M`.
    pub fn step(&self) -> f64 {
        self.length / self.num_layers as f64
    }

    /// Window length `T = N tau`.
    pub fn duration(&self) -> f64 {
        self.num_samples as f64 * self.tau
    }

    pub fn with_layers(&self, num_layers: usize) -> Result<Self> {
        Self::new(num_layers, self.num_samples, self.length, self.tau)
    }

    pub(crate) fn check_signal(&self, signal: &ComplexSignal) -> Result<()> {
        if signal.len() != self.num_samples {
            return Err(Error::LengthMismatch {
                expected: self.num_samples,
                found: signal.len(),
            });
        }
        Ok(())
    }
}

/// Spectral multiplier of a dispersion step over `distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    pub multiplier: Vec<C64>,
    pub distance: f64,
}

/// `multiplier[k] = exp(i beta distance omega_k² / 2)` for the grid's
/// discrete angular frequencies.
pub fn dispersion_multiplier(beta: f64, distance: f64, grid: &SimGrid) -> LinearStep {
    let multiplier = angular_frequencies(grid.num_samples, grid.tau)
        .into_iter()
        .map(|w| C64::from_polar(1.0, 0.5 * beta * distance * w * w))
        .collect();
    LinearStep {
        multiplier,
        distance,
    }
}

/// Applies a dispersion step as `ifft(multiplier * fft(signal))`.
pub fn linear_step(signal: &ComplexSignal, step: &LinearStep) -> Result<ComplexSignal> {
    if step.multiplier.len() != signal.len() {
        return Err(Error::LengthMismatch {
            expected: step.multiplier.len(),
            found: signal.len(),
        });
    }
    let spectral = Spectral::new(signal.len(), signal.tau());
    let mut scratch = spectral.scratch();
    let mut buf = signal.samples().to_vec();
    spectral.forward(&mut buf, &mut scratch);
    for (x, m) in buf.iter_mut().zip(&step.multiplier) {
        *x *= m;
    }
    spectral.inverse(&mut buf, &mut scratch);
    Ok(ComplexSignal::from_parts(buf, signal.tau()))
}

/// `w -> w exp(i gamma distance |w|²)` applied pointwise.
pub fn nonlinear_step(signal: &ComplexSignal, gamma: f64, distance: f64) -> ComplexSignal {
    let mut samples = signal.samples().to_vec();
    kerr_in_place(&mut samples, gamma * distance);
    ComplexSignal::from_parts(samples, signal.tau())
}

#[inline]
pub(crate) fn kerr_in_place(buf: &mut [C64], eta: f64) {
    for w in buf.iter_mut() {
        *w *= C64::from_polar(1.0, eta * w.norm_sqr());
    }
}

/// Time-domain Fresnel kernel `tau * sqrt(i / (2 pi eta)) exp(-i (k tau)² / (2 eta))`
/// for `k` in `-ceil(N/2) ..= ceil(N/2)`; index `0` holds `k = -ceil(N/2)`.
///
/// The sampled chirp is only free of aliasing for `|k tau| < pi |eta| / tau`;
/// beyond that it repeats with period `2 pi |eta| / tau`, so the kernel agrees
/// with the spectral step only when `|eta| >= N tau² / (2 pi)` or when the
/// signal and its dispersed image stay well inside the unaliased span.
pub fn build_fresnel_kernel(eta: f64, grid: &SimGrid) -> Result<Vec<C64>> {
    if eta == 0.0 || !eta.is_finite() {
        return Err(invalid("eta", "kernel is singular at zero distance"));
    }
    let half = grid.num_samples.div_ceil(2) as i64;
    let tau = grid.tau;
    let amp = C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI * eta)).sqrt() * tau;
    Ok((-half..=half)
        .map(|k| {
            let t = k as f64 * tau;
            amp * C64::from_polar(1.0, -t * t / (2.0 * eta))
        })
        .collect())
}

/// Whether the sampled Fresnel kernel for `eta` is alias-free on `grid`.
pub fn fresnel_alias_free(eta: f64, grid: &SimGrid) -> bool {
    eta.abs() >= grid.duration() * grid.tau / (2.0 * std::f64::consts::PI)
}

/// Non-circular convolution `out[n] = sum_l K[n - l] A[l]` with the kernel
/// treated as zero outside its index range.
pub fn fresnel_convolve(signal: &ComplexSignal, kernel: &[C64]) -> Result<ComplexSignal> {
    let n = signal.len();
    if kernel.len().is_multiple_of(2) {
        return Err(invalid("kernel", "must have odd length (centred)"));
    }
    let half = kernel.len() / 2;
    let len = (n + kernel.len() - 1).next_power_of_two();
    let spectral = Spectral::new(len, signal.tau());
    let mut scratch = spectral.scratch();
    let zero = C64::new(0.0, 0.0);
    let mut a = vec![zero; len];
    a[..n].copy_from_slice(signal.samples());
    let mut k = vec![zero; len];
    k[..kernel.len()].copy_from_slice(kernel);
    spectral.forward(&mut a, &mut scratch);
    spectral.forward(&mut k, &mut scratch);
    for (x, y) in a.iter_mut().zip(&k) {
        *x *= y;
    }
    spectral.inverse(&mut a, &mut scratch);
    Ok(ComplexSignal::from_parts(
        a[half..half + n].to_vec(),
        signal.tau(),
    ))
}

/// Which discretization of the dispersion step a propagation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearBackend {
    /// Exact spectral multiplier on the periodic grid.
    #[default]
    Spectral,
    /// Trapezoidal quadrature of the Fresnel integral (time-domain kernel).
    Fresnel,
}

/// Prepared split-step operator for one `(beta, gamma, grid)`.
///
/// Shared by [`propagate`] and the network forward pass so the two agree bit
/// for bit.
pub(crate) struct SplitStep {
    pub(crate) spectral: Spectral,
    pub(crate) half: Vec<C64>,
    pub(crate) full: Vec<C64>,
    pub(crate) kerr: f64,
    pub(crate) layers: usize,
}

/// Activations recorded during a taped forward pass.
#[derive(Default)]
pub(crate) struct Recording {
    /// Pre-nonlinearity activations `u_m`, `m = 1..=M`.
    pub(crate) activations: Vec<Vec<C64>>,
    /// `fft(u_m)`.
    pub(crate) spectra: Vec<Vec<C64>>,
    /// `fft(output)`.
    pub(crate) output_spectrum: Vec<C64>,
}

impl SplitStep {
    pub(crate) fn new(spectral: Spectral, beta: f64, gamma: f64, grid: &SimGrid) -> Self {
        let zeta = grid.step();
        let half = spectral.dispersion(0.5 * beta * zeta);
        let full = spectral.dispersion(beta * zeta);
        Self {
            spectral,
            half,
            full,
            kerr: gamma * zeta,
            layers: grid.num_layers,
        }
    }

    pub(crate) fn run(&self, input: &[C64], mut rec: Option<&mut Recording>) -> Result<Vec<C64>> {
        let mut scratch = self.spectral.scratch();
        let mut buf = input.to_vec();
        self.spectral.forward(&mut buf, &mut scratch);
        mul_in_place(&mut buf, &self.half);
        for layer in 1..=self.layers {
            if let Some(r) = rec.as_deref_mut() {
                r.spectra.push(buf.clone());
            }
            self.spectral.inverse(&mut buf, &mut scratch);
            if buf.iter().any(|z| !z.is_finite()) {
                return Err(Error::BlowUp { layer });
            }
            if let Some(r) = rec.as_deref_mut() {
                r.activations.push(buf.clone());
            }
            kerr_in_place(&mut buf, self.kerr);
            self.spectral.forward(&mut buf, &mut scratch);
            let mult = if layer == self.layers {
                &self.half
            } else {
                &self.full
            };
            mul_in_place(&mut buf, mult);
        }
        if let Some(r) = rec {
            r.output_spectrum = buf.clone();
        }
        self.spectral.inverse(&mut buf, &mut scratch);
        if buf.iter().any(|z| !z.is_finite()) {
            return Err(Error::BlowUp {
                layer: self.layers + 1,
            });
        }
        Ok(buf)
    }
}

pub(crate) fn mul_in_place(buf: &mut [C64], mult: &[C64]) {
    for (x, m) in buf.iter_mut().zip(mult) {
        *x *= m;
    }
}

/// `M` Strang steps `D(zeta/2) ∘ K(zeta) ∘ D(zeta/2)` with spectral
/// dispersion (fused form).
pub fn propagate(
    signal: &ComplexSignal,
    params: &FiberParams,
    grid: &SimGrid,
) -> Result<ComplexSignal> {
    propagate_with(signal, params, grid, LinearBackend::Spectral)
}

/// [`propagate`] with a choice of dispersion backend. The Fresnel backend
/// runs the literal (unfused) half-step composition.
pub fn propagate_with(
    signal: &ComplexSignal,
    params: &FiberParams,
    grid: &SimGrid,
    backend: LinearBackend,
) -> Result<ComplexSignal> {
    grid.check_signal(signal)?;
    check_grid_length(params, grid)?;
    match backend {
        LinearBackend::Spectral => {
            let spectral = Spectral::new(grid.num_samples, grid.tau);
            let op = SplitStep::new(spectral, params.beta, params.gamma, grid);
            let out = op.run(signal.samples(), None)?;
            Ok(ComplexSignal::from_parts(out, signal.tau()))
        }
        LinearBackend::Fresnel => {
            let zeta = grid.step();
            let eta = 0.5 * params.beta * zeta;
            if eta == 0.0 {
                return Ok(nonlinear_step(signal, params.gamma, params.length));
            }
            let kernel = build_fresnel_kernel(eta, grid)?;
            let mut a = signal.clone();
            for layer in 1..=grid.num_layers {
                a = fresnel_convolve(&a, &kernel)?;
                a = nonlinear_step(&a, params.gamma, zeta);
                a = fresnel_convolve(&a, &kernel)?;
                if a.samples().iter().any(|z| !z.is_finite()) {
                    return Err(Error::BlowUp { layer });
                }
            }
            Ok(a)
        }
    }
}

/// The unfused composition: every layer runs its own pair of half
/// dispersion steps. Slower than [`propagate`]; kept as a reference.
pub fn propagate_unfused(
    signal: &ComplexSignal,
    params: &FiberParams,
    grid: &SimGrid,
) -> Result<ComplexSignal> {
    grid.check_signal(signal)?;
    check_grid_length(params, grid)?;
    let zeta = grid.step();
    let half = dispersion_multiplier(params.beta, 0.5 * zeta, grid);
    let mut a = signal.clone();
    for layer in 1..=grid.num_layers {
        a = linear_step(&a, &half)?;
        a = nonlinear_step(&a, params.gamma, zeta);
        a = linear_step(&a, &half)?;
        if a.samples().iter().any(|z| !z.is_finite()) {
            return Err(Error::BlowUp { layer });
        }
    }
    Ok(a)
}

fn check_grid_length(params: &FiberParams, grid: &SimGrid) -> Result<()> {
    if params.length != grid.length {
        return Err(invalid(
            "grid",
            format!(
                "grid length {} km differs from fiber length {} km",
                grid.length, params.length
            ),
        ));
    }
    Ok(())
}

/// Generates `(input, output)` for `symbols` through a fiber with `params`.
///
/// The propagation runs on a grid refined by `oversample` in time and by
/// `layer_multiple` in depth relative to `num_layers`, then both signals are
/// downsampled back to the experiment's `tau`. With both factors 1 the data
/// come from exactly the model that will be fitted.
pub fn generate_ground_truth(
    symbols: &SymbolSequence,
    pulse: &PulseSpec,
    params: &FiberParams,
    num_layers: usize,
    oversample: usize,
    layer_multiple: usize,
) -> Result<(ComplexSignal, ComplexSignal)> {
    if oversample == 0 {
        return Err(invalid("oversample", "must be >= 1"));
    }
    if layer_multiple == 0 {
        return Err(invalid("layer_multiple", "must be >= 1"));
    }
    let fine_pulse = pulse.with_samples_per_symbol(pulse.samples_per_symbol() * oversample)?;
    let fine_in = modulate(symbols, &fine_pulse)?;
    let grid = SimGrid::for_signal(&fine_in, num_layers * layer_multiple, params.length)?;
    let fine_out = propagate(&fine_in, params, &grid)?;
    if oversample == 1 {
        return Ok((fine_in, fine_out));
    }
    Ok((
        fine_in.downsample(oversample)?,
        fine_out.downsample(oversample)?,
    ))
}
