//! Synthetic fiber-communication signals: root-raised-cosine pulses, QAM
//! symbol sequences, modulation, additive white Gaussian noise and
//! matched-filter denoising.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::invalid;
use crate::spectral::Spectral;
use crate::{Error, Result, C64};

/// Root-raised-cosine pulse and its sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    symbol_period: f64,
    rolloff: f64,
    samples_per_symbol: usize,
}

impl PulseSpec {
    pub fn new(symbol_period: f64, rolloff: f64, samples_per_symbol: usize) -> Result<Self> {
        if !(symbol_period.is_finite() && symbol_period > 0.0) {
            return Err(invalid(
                "symbol_period",
                format!("must be > 0, got {symbol_period}"),
            ));
        }
        if !(rolloff > 0.0 && rolloff <= 1.0) {
            return Err(invalid(
                "rolloff",
                format!("must be in (0, 1], got {rolloff}"),
            ));
        }
        if samples_per_symbol < 2 {
            return Err(invalid(
                "samples_per_symbol",
                format!("must be >= 2, got {samples_per_symbol}"),
            ));
        }
        Ok(Self {
            symbol_period,
            rolloff,
            samples_per_symbol,
        })
    }

    /// 100 GBaud (10 ps symbols), roll-off 0.1, 64 samples per symbol.
    pub fn full_scale() -> Self {
        Self {
            symbol_period: 10.0,
            rolloff: 0.1,
            samples_per_symbol: 64,
        }
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn rolloff(&self) -> f64 {
        self.rolloff
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.samples_per_symbol
    }

    /// Sample period `tau = Ts / sps`.
    pub fn sample_period(&self) -> f64 {
        self.symbol_period / self.samples_per_symbol as f64
    }

    pub fn with_samples_per_symbol(&self, samples_per_symbol: usize) -> Result<Self> {
        Self::new(self.symbol_period, self.rolloff, samples_per_symbol)
    }
}

/// Frequency response of the RRC pulse (unit passband, zero stopband).
pub fn rrc_frequency_response(f: f64, pulse: &PulseSpec) -> f64 {
    let ts = pulse.symbol_period;
    let rho = pulse.rolloff;
    let f = f.abs();
    let lower = (1.0 - rho) / (2.0 * ts);
    let upper = (1.0 + rho) / (2.0 * ts);
    if f <= lower {
        1.0
    } else if f <= upper {
        (PI * ts / (2.0 * rho) * (f - lower)).cos()
    } else {
        0.0
    }
}

/// Time-domain RRC pulse: the inverse Fourier transform of
/// [`rrc_frequency_response`], so that `h(0) = (1 - rho + 4 rho / pi) / Ts`.
pub fn rrc_impulse_response(t: f64, pulse: &PulseSpec) -> f64 {
    let ts = pulse.symbol_period;
    let rho = pulse.rolloff;
    let x = t / ts;
    if x.abs() < 1e-12 {
        return (1.0 - rho + 4.0 * rho / PI) / ts;
    }
    let q = 4.0 * rho * x;
    let denom = PI * x * (1.0 - q * q);
    if (1.0 - q * q).abs() < 1e-9 {
        let a = PI / (4.0 * rho);
        return rho / ts
            * FRAC_1_SQRT_2
            * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * x * (1.0 - rho)).sin() + q * (PI * x * (1.0 + rho)).cos()) / denom / ts
}

/// A finite symbol alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
}

impl Constellation {
    pub fn new(points: Vec<C64>) -> Self {
        Self { points }
    }

    /// `{±(2m+1) ± i(2n+1)}` for `m, n ∈ {0, 1}`.
    pub fn qam16() -> Self {
        let levels = [-3.0, -1.0, 1.0, 3.0];
        let points = levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| C64::new(re, im)))
            .collect();
        Self { points }
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn contains(&self, z: C64) -> bool {
        self.points.contains(&z)
    }

    /// Mean `|a|²` over equiprobable points; 10 for 16-QAM.
    pub fn mean_energy(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        norm_sq(&self.points) / self.points.len() as f64
    }
}

/// Symbol power factor `P` for an average launch power given in mW.
///
/// The pulse taps carry units of 1/ps, so the factor absorbs `Ts²` and the
/// constellation energy: `P = p_mw * 1e-3 * Ts² / E_s`.
pub fn power_factor_for_launch_mw(
    launch_power_mw: f64,
    pulse: &PulseSpec,
    constellation: &Constellation,
) -> Result<f64> {
    if !(launch_power_mw.is_finite() && launch_power_mw >= 0.0) {
        return Err(invalid(
            "launch_power_mw",
            format!("must be >= 0, got {launch_power_mw}"),
        ));
    }
    let es = constellation.mean_energy();
    if es <= 0.0 {
        return Err(invalid("constellation", "mean energy must be > 0"));
    }
    let ts = pulse.symbol_period();
    Ok(launch_power_mw * 1e-3 * ts * ts / es)
}

/// Data symbols plus their power scaling and zero guard symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    symbols: Vec<C64>,
    power: f64,
    zero_pad_per_side: usize,
    seed: u64,
}

impl SymbolSequence {
    /// Explicit symbols with `P = 1`, no padding.
    pub fn from_symbols(symbols: Vec<C64>) -> Self {
        Self {
            symbols,
            power: 1.0,
            zero_pad_per_side: 0,
            seed: 0,
        }
    }

    pub fn with_power(mut self, power: f64) -> Result<Self> {
        if !(power.is_finite() && power >= 0.0) {
            return Err(invalid("power", format!("must be >= 0, got {power}")));
        }
        self.power = power;
        Ok(self)
    }

    pub fn with_zero_padding(mut self, per_side: usize) -> Self {
        self.zero_pad_per_side = per_side;
        self
    }

    /// The non-pad symbols.
    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn zero_pad_per_side(&self) -> usize {
        self.zero_pad_per_side
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Symbol count including the zero guards on both sides.
    pub fn total_len(&self) -> usize {
        self.symbols.len() + 2 * self.zero_pad_per_side
    }

    /// All symbols including the zero guards.
    pub fn padded(&self) -> Vec<C64> {
        let zero = C64::new(0.0, 0.0);
        let pad = std::iter::repeat_n(zero, self.zero_pad_per_side);
        pad.clone()
            .chain(self.symbols.iter().copied())
            .chain(pad)
            .collect()
    }
}

/// Draws `count` symbols i.i.d. uniformly from `constellation`.
///
/// Sequences with the same seed share prefixes: the first `k` symbols of a
/// longer draw equal a draw of length `k`.
pub fn generate_symbols(
    count: usize,
    constellation: &Constellation,
    seed: u64,
) -> Result<SymbolSequence> {
    if constellation.points.is_empty() {
        return Err(Error::EmptyConstellation);
    }
    if count == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = constellation.points.len();
    let symbols = (0..count)
        .map(|_| constellation.points[rng.random_range(0..n)])
        .collect();
    Ok(SymbolSequence {
        symbols,
        power: 1.0,
        zero_pad_per_side: 0,
        seed,
    })
}

/// A uniformly sampled complex waveform; `|A|²` is power in W.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<C64>,
    tau: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<C64>, tau: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("samples", "signal must have at least one sample"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid("tau", format!("must be > 0, got {tau}")));
        }
        if let Some(i) = samples.iter().position(|z| !z.is_finite()) {
            return Err(invalid(
                "samples",
                format!("non-finite sample at index {i}"),
            ));
        }
        Ok(Self { samples, tau })
    }

    /// Skips the finiteness scan; callers guarantee the invariants.
    pub(crate) fn from_parts(samples: Vec<C64>, tau: f64) -> Self {
        debug_assert!(!samples.is_empty() && tau > 0.0);
        Self { samples, tau }
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Window length `N * tau`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.tau
    }

    /// Plain Euclidean norm of the sample vector.
    pub fn norm(&self) -> f64 {
        norm_sq(&self.samples).sqrt()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::from_parts(self.samples.iter().map(|z| z * factor).collect(), self.tau)
    }

    /// Keeps every `factor`-th sample, starting with the first.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("factor", "must be >= 1"));
        }
        let samples = self.samples.iter().step_by(factor).copied().collect();
        Ok(Self::from_parts(samples, self.tau * factor as f64))
    }
}

pub(crate) fn norm_sq(samples: &[C64]) -> f64 {
    crate::sum::pairwise_map(samples.len(), &|i| samples[i].norm_sqr())
}

/// `sqrt(P) * sum_k a_k h(n tau - k Ts)` over the padded sequence, with the
/// symbol index `k` starting at 1.
///
/// When the sequence carries zero guards, each pulse is truncated to
/// `±zero_pad_per_side` symbol periods; without guards pulses are not
/// truncated.
pub fn modulate(symbols: &SymbolSequence, pulse: &PulseSpec) -> Result<ComplexSignal> {
    let padded = symbols.padded();
    if padded.is_empty() {
        return Err(invalid("symbols", "sequence is empty"));
    }
    let sps = pulse.samples_per_symbol;
    let tau = pulse.sample_period();
    let n = padded.len() * sps;
    let half_span = if symbols.zero_pad_per_side > 0 {
        symbols.zero_pad_per_side * sps
    } else {
        n + sps
    };
    let taps: Vec<f64> = (0..=2 * half_span)
        .map(|j| rrc_impulse_response((j as f64 - half_span as f64) * tau, pulse))
        .collect();

    let amp = symbols.power.sqrt();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (idx, &a) in padded.iter().enumerate() {
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        let a = a * amp;
        let centre = (idx + 1) * sps;
        let lo = centre.saturating_sub(half_span);
        let hi = (centre + half_span).min(n - 1);
        for (i, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *slot += a * taps[i + half_span - centre];
        }
    }
    ComplexSignal::new(out, tau)
}

/// Noise level as a ratio of Euclidean norms `||signal|| / ||noise||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            snr: f64::INFINITY,
            seed: 0,
        }
    }

    /// Power SNR in dB for this norm ratio.
    pub fn snr_db(&self) -> f64 {
        20.0 * self.snr.log10()
    }
}

/// Adds circular complex white Gaussian noise rescaled so that
/// `||noise|| = ||signal|| / snr` exactly. Infinite SNR returns the input.
pub fn add_awgn(signal: &ComplexSignal, noise: &NoiseSpec) -> Result<ComplexSignal> {
    if noise.snr.is_nan() || noise.snr <= 0.0 {
        return Err(invalid("snr", format!("must be > 0, got {}", noise.snr)));
    }
    if noise.snr.is_infinite() {
        return Ok(signal.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let raw: Vec<C64> = (0..signal.len())
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let raw_norm = norm_sq(&raw).sqrt();
    let target = signal.norm() / noise.snr;
    let scale = if raw_norm > 0.0 {
        target / raw_norm
    } else {
        0.0
    };
    let samples = signal
        .samples
        .iter()
        .zip(&raw)
        .map(|(s, e)| s + e * scale)
        .collect();
    ComplexSignal::new(samples, signal.tau)
}

/// Circular convolution with the sampled RRC pulse, normalized to unit DC
/// gain. Taps cover the whole periodic window at the signal's own `tau`.
pub fn matched_filter_denoise(signal: &ComplexSignal, pulse: &PulseSpec) -> Result<ComplexSignal> {
    let n = signal.len();
    let tau = signal.tau;
    let mut taps: Vec<C64> = (0..n)
        .map(|j| {
            let k = if 2 * j < n {
                j as f64
            } else {
                j as f64 - n as f64
            };
            C64::new(rrc_impulse_response(k * tau, pulse), 0.0)
        })
        .collect();
    let gain: f64 = crate::sum::pairwise_map(n, &|j| taps[j].re);
    if gain == 0.0 {
        return Err(invalid("pulse", "sampled filter has zero DC gain"));
    }
    let spectral = Spectral::new(n, tau);
    let mut scratch = spectral.scratch();
    let mut buf = signal.samples.clone();
    spectral.forward(&mut taps, &mut scratch);
    spectral.forward(&mut buf, &mut scratch);
    for (x, h) in buf.iter_mut().zip(&taps) {
        *x *= h / gain;
    }
    spectral.inverse(&mut buf, &mut scratch);
    ComplexSignal::new(buf, tau)
}
