//! Closed-form attenuation estimate.
//!
//! With loss `-(alpha / 2) A` added to the propagation equation, dispersion
//! and Kerr terms conserve `||A||²` while attenuation scales it by
//! `exp(-alpha Z)`, so `alpha = (2 / Z) ln(||A_in|| / ||A_out||)`.

use crate::error::invalid;
use crate::signal::{norm_sq, ComplexSignal};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationEstimate {
    /// 1/km.
    pub alpha: f64,
    /// `sqrt(tau * sum |A_in|²)`.
    pub norm_in: f64,
    pub norm_out: f64,
    pub length: f64,
}

/// L² norm with uniform quadrature weight `tau`.
pub fn weighted_norm(signal: &ComplexSignal) -> f64 {
    (signal.tau() * norm_sq(signal.samples())).sqrt()
}

pub fn estimate_alpha(
    input: &ComplexSignal,
    output: &ComplexSignal,
    length: f64,
) -> Result<AttenuationEstimate> {
    if !(length.is_finite() && length > 0.0) {
        return Err(invalid("length", format!("must be > 0, got {length}")));
    }
    let norm_in = weighted_norm(input);
    let norm_out = weighted_norm(output);
    if norm_in == 0.0 {
        return Err(Error::ZeroNorm("input"));
    }
    if norm_out == 0.0 {
        return Err(Error::ZeroNorm("output"));
    }
    Ok(AttenuationEstimate {
        alpha: 2.0 / length * (norm_in / norm_out).ln(),
        norm_in,
        norm_out,
        length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn sig(scale: f64) -> ComplexSignal {
        let s = (0..50)
            .map(|i| C64::new((i as f64 * 0.3).sin(), (i as f64 * 0.7).cos()) * scale)
            .collect();
        ComplexSignal::new(s, 0.25).unwrap()
    }

    #[test]
    fn identical_signals_give_zero() {
        assert_eq!(
            estimate_alpha(&sig(1.0), &sig(1.0), 80.0).unwrap().alpha,
            0.0
        );
    }

    #[test]
    fn ratio_e_over_80_km() {
        let e = std::f64::consts::E;
        let est = estimate_alpha(&sig(e), &sig(1.0), 80.0).unwrap();
        assert!((est.alpha - 0.025).abs() < 1e-15);
    }

    #[test]
    fn exact_inversion() {
        let alpha: f64 = 0.046;
        let out = sig((-alpha * 80.0 / 2.0).exp());
        let est = estimate_alpha(&sig(1.0), &out, 80.0).unwrap();
        assert!((est.alpha - alpha).abs() < 1e-12);
    }

    #[test]
    fn sign_and_scale_invariance() {
        let a = estimate_alpha(&sig(1.0), &sig(0.5), 10.0).unwrap().alpha;
        assert!(a > 0.0);
        assert!(estimate_alpha(&sig(0.5), &sig(1.0), 10.0).unwrap().alpha < 0.0);
        let b = estimate_alpha(&sig(7.0), &sig(3.5), 10.0).unwrap().alpha;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn zero_norms_and_bad_length() {
        assert_eq!(
            estimate_alpha(&sig(0.0), &sig(1.0), 1.0),
            Err(Error::ZeroNorm("input"))
        );
        assert_eq!(
            estimate_alpha(&sig(1.0), &sig(0.0), 1.0),
            Err(Error::ZeroNorm("output"))
        );
        assert!(estimate_alpha(&sig(1.0), &sig(1.0), 0.0).is_err());
    }
}
