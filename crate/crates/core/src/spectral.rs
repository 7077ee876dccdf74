use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// FFT plans and squared angular frequencies for one periodic grid.
///
/// Forward transforms are unnormalized; inverse transforms carry the `1/N`.
#[derive(Clone)]
pub(crate) struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    omega_sq: Vec<f64>,
    scratch_len: usize,
}

impl Spectral {
    pub(crate) fn new(n: usize, tau: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let omega_sq = angular_frequencies(n, tau).iter().map(|w| w * w).collect();
        Self {
            fwd,
            inv,
            omega_sq,
            scratch_len,
        }
    }

    pub(crate) fn omega_sq(&self) -> &[f64] {
        &self.omega_sq
    }

    pub(crate) fn scratch(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.scratch_len]
    }

    pub(crate) fn forward(&self, buf: &mut [C64], scratch: &mut [C64]) {
        self.fwd.process_with_scratch(buf, scratch);
    }

    pub(crate) fn inverse(&self, buf: &mut [C64], scratch: &mut [C64]) {
        self.inv.process_with_scratch(buf, scratch);
        let scale = 1.0 / buf.len() as f64;
        for x in buf.iter_mut() {
            *x *= scale;
        }
    }

    /// `exp(i * eta * omega^2 / 2)` on this grid.
    pub(crate) fn dispersion(&self, eta: f64) -> Vec<C64> {
        self.omega_sq
            .iter()
            .map(|&w2| C64::from_polar(1.0, 0.5 * eta * w2))
            .collect()
    }
}

/// Discrete angular frequencies `2*pi*k/(N*tau)` in FFT order; the Nyquist
/// bin of an even-length grid is assigned the negative frequency.
pub(crate) fn angular_frequencies(n: usize, tau: f64) -> Vec<f64> {
    let df = 2.0 * std::f64::consts::PI / (n as f64 * tau);
    (0..n)
        .map(|k| {
            let k = if 2 * k < n {
                k as f64
            } else {
                k as f64 - n as f64
            };
            k * df
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_follow_fft_order() {
        let w = angular_frequencies(4, 0.5);
        let df = std::f64::consts::PI;
        assert_eq!(w, vec![0.0, df, -2.0 * df, -df]);
        let w = angular_frequencies(5, 1.0);
        assert!(w[2] > 0.0 && w[3] < 0.0);
    }

    #[test]
    fn roundtrip_is_identity() {
        let s = Spectral::new(30, 0.1);
        let orig: Vec<C64> = (0..30)
            .map(|i| C64::new(i as f64, -(i as f64).sqrt()))
            .collect();
        let mut buf = orig.clone();
        let mut scratch = s.scratch();
        s.forward(&mut buf, &mut scratch);
        s.inverse(&mut buf, &mut scratch);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
