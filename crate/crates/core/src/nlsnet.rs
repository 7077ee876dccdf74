//! The split-step solver viewed as an `M`-layer complex-valued convolutional
//! network whose kernels are frozen functions of `(beta, gamma)`.
//!
//! Layer `m` maps `v_{m-1}` to `u_m = D(eta_m) v_{m-1}` (a dispersion
//! convolution, `eta_1 = beta zeta / 2`, otherwise `beta zeta`) and then to
//! `v_m = kappa(u_m; gamma zeta)`; the output is `D(beta zeta / 2) v_M`.
//!
//! Gradients are computed by a hand-written reverse pass. Adjoints are
//! carried as `dJ/dRe z + i dJ/dIm z`, so for any real perturbation
//! `dJ = sum Re(conj(adj) dz)`:
//!
//! - a dispersion step is unitary, its adjoint is the conjugate multiplier;
//!   its `eta`-sensitivity is `Re <adj, D'(eta) v>`, evaluated in the
//!   Fourier domain as `(1/N) sum (omega²/2) Re(i conj(fft adj) fft u)`;
//! - for `v = u exp(i phi)`, `phi = eta |u|²`, the input adjoint is
//!   `conj-rotated adj - 2 eta Im(conj(adj) v) u` (the `|u|²` term is not
//!   holomorphic, so both Wirtinger components contribute) and the
//!   `eta`-sensitivity is `-sum |u|² Im(conj(adj) v)`.

use crate::error::invalid;
use crate::propagator::{kerr_in_place, mul_in_place, Recording, SimGrid, SplitStep};
use crate::signal::{norm_sq, ComplexSignal};
use crate::spectral::Spectral;
use crate::sum::{pairwise, pairwise_map};
use crate::{Error, Result, C64};

/// Trainable `(beta, gamma)` plus the frozen grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsNetParams {
    pub beta: f64,
    pub gamma: f64,
    pub grid: SimGrid,
}

impl NlsNetParams {
    pub fn new(beta: f64, gamma: f64, grid: SimGrid) -> Result<Self> {
        if !beta.is_finite() || !gamma.is_finite() {
            return Err(invalid("params", format!("non-finite ({beta}, {gamma})")));
        }
        Ok(Self { beta, gamma, grid })
    }
}

/// Everything the reverse pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    beta: f64,
    gamma: f64,
    layer_inputs: Vec<Vec<C64>>,
    spectra: Vec<Vec<C64>>,
    output_spectrum: Vec<C64>,
}

impl ForwardTape {
    /// Pre-nonlinearity activations, one per layer.
    pub fn layer_inputs(&self) -> &[Vec<C64>] {
        &self.layer_inputs
    }
}

/// Normalized squared error and the residual it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Model output minus target.
    pub residual: Vec<C64>,
    /// `||target||²`.
    pub target_norm_sq: f64,
}

/// Reusable evaluator for one grid: holds the FFT plans so that repeated
/// loss and gradient evaluations (fits, scans) do not replan.
#[derive(Clone)]
pub struct NlsNet {
    grid: SimGrid,
    spectral: Spectral,
}

impl NlsNet {
    pub fn new(grid: SimGrid) -> Self {
        Self {
            spectral: Spectral::new(grid.num_samples(), grid.tau()),
            grid,
        }
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    fn op(&self, beta: f64, gamma: f64) -> SplitStep {
        SplitStep::new(self.spectral.clone(), beta, gamma, &self.grid)
    }

    /// Forward pass without recording.
    pub fn output(&self, beta: f64, gamma: f64, input: &ComplexSignal) -> Result<ComplexSignal> {
        self.grid.check_signal(input)?;
        let out = self.op(beta, gamma).run(input.samples(), None)?;
        Ok(ComplexSignal::from_parts(out, input.tau()))
    }

    pub fn forward(
        &self,
        beta: f64,
        gamma: f64,
        input: &ComplexSignal,
    ) -> Result<(ComplexSignal, ForwardTape)> {
        self.grid.check_signal(input)?;
        let mut rec = Recording::default();
        let out = self.op(beta, gamma).run(input.samples(), Some(&mut rec))?;
        let tape = ForwardTape {
            beta,
            gamma,
            layer_inputs: rec.activations,
            spectra: rec.spectra,
            output_spectrum: rec.output_spectrum,
        };
        Ok((ComplexSignal::from_parts(out, input.tau()), tape))
    }

    pub fn loss(
        &self,
        beta: f64,
        gamma: f64,
        input: &ComplexSignal,
        target: &ComplexSignal,
    ) -> Result<LossValue> {
        let target_norm_sq = self.target_norm_sq(target)?;
        let out = self.output(beta, gamma, input)?;
        Ok(residual_loss(out.samples(), target, target_norm_sq))
    }

    /// `J` and `(dJ/dbeta, dJ/dgamma)` from one forward and one reverse pass.
    pub fn loss_and_grad(
        &self,
        beta: f64,
        gamma: f64,
        input: &ComplexSignal,
        target: &ComplexSignal,
    ) -> Result<(f64, [f64; 2])> {
        let target_norm_sq = self.target_norm_sq(target)?;
        let (out, tape) = self.forward(beta, gamma, input)?;
        let loss = residual_loss(out.samples(), target, target_norm_sq);
        let grad = self.backward(&tape, beta, gamma, &loss.residual, target_norm_sq)?;
        Ok((loss.value, grad))
    }

    fn target_norm_sq(&self, target: &ComplexSignal) -> Result<f64> {
        self.grid.check_signal(target)?;
        let t = norm_sq(target.samples());
        if t == 0.0 {
            return Err(Error::ZeroNorm("target"));
        }
        Ok(t)
    }

    pub fn backward(
        &self,
        tape: &ForwardTape,
        beta: f64,
        gamma: f64,
        residual: &[C64],
        target_norm_sq: f64,
    ) -> Result<[f64; 2]> {
        let m_layers = self.grid.num_layers();
        let n = self.grid.num_samples();
        if tape.beta != beta || tape.gamma != gamma {
            return Err(Error::TapeMismatch(format!(
                "tape recorded at ({}, {}), asked for ({beta}, {gamma})",
                tape.beta, tape.gamma
            )));
        }
        if tape.layer_inputs.len() != m_layers || tape.spectra.len() != m_layers {
            return Err(Error::TapeMismatch(format!(
                "tape has {} layers, grid has {m_layers}",
                tape.layer_inputs.len()
            )));
        }
        if residual.len() != n || tape.output_spectrum.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: residual.len(),
            });
        }
        if !(target_norm_sq > 0.0) {
            return Err(Error::ZeroNorm("target"));
        }

        let zeta = self.grid.step();
        let op = self.op(beta, gamma);
        let kerr = op.kerr;
        let w2 = self.spectral.omega_sq();
        let inv_n = 1.0 / n as f64;
        // Re(i conj(a) b) = -Im(conj(a) b)
        let eta_sens = |adj_hat: &[C64], u_hat: &[C64]| -> f64 {
            -inv_n * pairwise_map(n, &|k| 0.5 * w2[k] * (adj_hat[k].conj() * u_hat[k]).im)
        };

        let mut scratch = self.spectral.scratch();
        let mut d_eta = Vec::with_capacity(m_layers + 1);
        let mut d_kerr = Vec::with_capacity(m_layers);

        let scale = 2.0 / target_norm_sq;
        let mut adj: Vec<C64> = residual.iter().map(|r| r * scale).collect();
        self.spectral.forward(&mut adj, &mut scratch);
        d_eta.push(0.5 * eta_sens(&adj, &tape.output_spectrum));
        conj_mul_in_place(&mut adj, &op.half);
        self.spectral.inverse(&mut adj, &mut scratch);

        let mut v = vec![C64::new(0.0, 0.0); n];
        for m in (1..=m_layers).rev() {
            let u = &tape.layer_inputs[m - 1];
            v.copy_from_slice(u);
            kerr_in_place(&mut v, kerr);
            d_kerr.push(-pairwise_map(n, &|i| {
                u[i].norm_sqr() * (adj[i].conj() * v[i]).im
            }));
            for i in 0..n {
                let cross = (adj[i].conj() * v[i]).im;
                let rot = C64::from_polar(1.0, -kerr * u[i].norm_sqr());
                adj[i] = adj[i] * rot - u[i] * (2.0 * kerr * cross);
            }
            self.spectral.forward(&mut adj, &mut scratch);
            let weight = if m == 1 { 0.5 } else { 1.0 };
            d_eta.push(weight * eta_sens(&adj, &tape.spectra[m - 1]));
            if m > 1 {
                conj_mul_in_place(&mut adj, &op.full);
                self.spectral.inverse(&mut adj, &mut scratch);
            }
        }

        let d_beta = zeta * pairwise(&d_eta);
        let d_gamma = zeta * pairwise(&d_kerr);
        if !d_beta.is_finite() {
            return Err(Error::NonFiniteGradient("beta"));
        }
        if !d_gamma.is_finite() {
            return Err(Error::NonFiniteGradient("gamma"));
        }
        Ok([d_beta, d_gamma])
    }

    /// Central finite-difference check of the analytic gradient; returns
    /// `|analytic - fd| / max(|analytic|, |fd|, 1e-30)` per parameter.
    pub fn grad_check(
        &self,
        beta: f64,
        gamma: f64,
        input: &ComplexSignal,
        target: &ComplexSignal,
        rel_step: f64,
    ) -> Result<GradCheck> {
        if !(rel_step > 0.0) {
            return Err(invalid("rel_step", format!("must be > 0, got {rel_step}")));
        }
        let (_, analytic) = self.loss_and_grad(beta, gamma, input, target)?;
        let step = |x: f64| rel_step * if x == 0.0 { 1.0 } else { x.abs() };
        let hb = step(beta);
        let hg = step(gamma);
        let j = |b: f64, g: f64| self.loss(b, g, input, target).map(|l| l.value);
        let fd_beta = (j(beta + hb, gamma)? - j(beta - hb, gamma)?) / (2.0 * hb);
        let fd_gamma = (j(beta, gamma + hg)? - j(beta, gamma - hg)?) / (2.0 * hg);
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-30);
        Ok(GradCheck {
            analytic,
            finite_difference: [fd_beta, fd_gamma],
            rel_err: [rel(analytic[0], fd_beta), rel(analytic[1], fd_gamma)],
        })
    }

    /// Like [`NlsNet::grad_check`], but the reference derivative is Ridders'
    /// polynomial extrapolation of central differences, starting at
    /// `rel_step` and shrinking by 1.4 per stage. Far more accurate where `J`
    /// oscillates quickly (large `gamma`), where no single step balances
    /// truncation against rounding.
    pub fn grad_check_extrapolated(
        &self,
        beta: f64,
        gamma: f64,
        input: &ComplexSignal,
        target: &ComplexSignal,
        rel_step: f64,
    ) -> Result<GradCheck> {
        if !(rel_step > 0.0) {
            return Err(invalid("rel_step", format!("must be > 0, got {rel_step}")));
        }
        let (_, analytic) = self.loss_and_grad(beta, gamma, input, target)?;
        let step = |x: f64| rel_step * if x == 0.0 { 1.0 } else { x.abs() };
        let j = |b: f64, g: f64| self.loss(b, g, input, target).map(|l| l.value);
        let fd_beta = ridders(
            |h| Ok((j(beta + h, gamma)? - j(beta - h, gamma)?) / (2.0 * h)),
            step(beta),
        )?;
        let fd_gamma = ridders(
            |h| Ok((j(beta, gamma + h)? - j(beta, gamma - h)?) / (2.0 * h)),
            step(gamma),
        )?;
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-30);
        Ok(GradCheck {
            analytic,
            finite_difference: [fd_beta, fd_gamma],
            rel_err: [rel(analytic[0], fd_beta), rel(analytic[1], fd_gamma)],
        })
    }
}

/// Ridders' extrapolation of `central(h)` to `h -> 0`.
fn ridders(central: impl Fn(f64) -> Result<f64>, h0: f64) -> Result<f64> {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 10;
    const SAFE: f64 = 2.0;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = central(h)?;
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        a[0][i] = central(h)?;
        let mut fac = CON2;
        for jj in 1..=i {
            a[jj][i] = (a[jj - 1][i] * fac - a[jj - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[jj][i] - a[jj - 1][i])
                .abs()
                .max((a[jj][i] - a[jj - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[jj][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok(best)
}

/// Outcome of [`NlsNet::grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub analytic: [f64; 2],
    pub finite_difference: [f64; 2],
    pub rel_err: [f64; 2],
}

fn conj_mul_in_place(buf: &mut [C64], mult: &[C64]) {
    for (x, m) in buf.iter_mut().zip(mult) {
        *x *= m.conj();
    }
}

fn residual_loss(output: &[C64], target: &ComplexSignal, target_norm_sq: f64) -> LossValue {
    let residual: Vec<C64> = output
        .iter()
        .zip(target.samples())
        .map(|(y, t)| y - t)
        .collect();
    LossValue {
        value: norm_sq(&residual) / target_norm_sq,
        residual,
        target_norm_sq,
    }
}

/// Forward pass; the output equals [`crate::propagator::propagate`] bit for
/// bit.
pub fn forward(
    params: &NlsNetParams,
    input: &ComplexSignal,
) -> Result<(ComplexSignal, ForwardTape)> {
    NlsNet::new(params.grid).forward(params.beta, params.gamma, input)
}

/// `J = ||H(beta, gamma) input - target||² / ||target||²`.
pub fn loss(
    params: &NlsNetParams,
    input: &ComplexSignal,
    target: &ComplexSignal,
) -> Result<LossValue> {
    NlsNet::new(params.grid).loss(params.beta, params.gamma, input, target)
}

/// Exact `(dJ/dbeta, dJ/dgamma)` for a recorded forward pass.
pub fn backward(
    tape: &ForwardTape,
    params: &NlsNetParams,
    residual: &[C64],
    target_norm_sq: f64,
) -> Result<(f64, f64)> {
    let [b, g] = NlsNet::new(params.grid).backward(
        tape,
        params.beta,
        params.gamma,
        residual,
        target_norm_sq,
    )?;
    Ok((b, g))
}

/// Relative errors of the analytic gradient against central differences.
pub fn grad_check(
    params: &NlsNetParams,
    input: &ComplexSignal,
    target: &ComplexSignal,
    rel_step: f64,
) -> Result<(f64, f64)> {
    let c =
        NlsNet::new(params.grid).grad_check(params.beta, params.gamma, input, target, rel_step)?;
    Ok((c.rel_err[0], c.rel_err[1]))
}

/// The layer-by-layer form with an explicit `sqrt(gamma zeta)` scale on the
/// first kernel, its inverse on the last and the fixed activation
/// `sigma(w) = w exp(i |w|²)` in between. Uses the principal complex square
/// root; only reproduces the solver for `gamma zeta > 0`.
pub fn forward_scaled_form(params: &NlsNetParams, input: &ComplexSignal) -> Result<ComplexSignal> {
    let grid = params.grid;
    grid.check_signal(input)?;
    let zeta = grid.step();
    let s = C64::new(params.gamma * zeta, 0.0).sqrt();
    if s.norm() == 0.0 {
        return Err(invalid("gamma", "scaled form needs gamma * zeta != 0"));
    }
    let spectral = Spectral::new(grid.num_samples(), grid.tau());
    let mut scratch = spectral.scratch();
    let half = spectral.dispersion(0.5 * params.beta * zeta);
    let full = spectral.dispersion(params.beta * zeta);
    let mut buf: Vec<C64> = input.samples().iter().map(|z| z * s).collect();
    spectral.forward(&mut buf, &mut scratch);
    mul_in_place(&mut buf, &half);
    for m in 1..=grid.num_layers() {
        spectral.inverse(&mut buf, &mut scratch);
        kerr_in_place(&mut buf, 1.0);
        spectral.forward(&mut buf, &mut scratch);
        mul_in_place(&mut buf, if m == grid.num_layers() { &half } else { &full });
    }
    spectral.inverse(&mut buf, &mut scratch);
    let inv = s.inv();
    Ok(ComplexSignal::from_parts(
        buf.into_iter().map(|z| z * inv).collect(),
        input.tau(),
    ))
}
