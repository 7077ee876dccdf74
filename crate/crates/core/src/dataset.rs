//! Reproducible `(input, target)` pairs for fitting.

use crate::error::invalid;
use crate::propagator::{generate_ground_truth, FiberParams, SimGrid};
use crate::signal::{
    add_awgn, generate_symbols, matched_filter_denoise, power_factor_for_launch_mw, ComplexSignal,
    Constellation, NoiseSpec, PulseSpec,
};
use crate::Result;

/// Everything needed to regenerate one dataset bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub pulse: PulseSpec,
    pub num_symbols: usize,
    pub zero_pad_per_side: usize,
    /// Average launch power in mW.
    pub launch_power_mw: f64,
    /// Ground truth `(beta, gamma)` and link length.
    pub fiber: FiberParams,
    /// Layers of the network that will be fitted.
    pub model_layers: usize,
    /// Layers of the data-generating solver before `layer_multiple`.
    pub oracle_layers: usize,
    pub layer_multiple: usize,
    /// Time refinement of the data-generating solver.
    pub oversample: usize,
    /// `INFINITY` for noiseless data.
    pub snr: f64,
    pub denoise: bool,
    pub seed: u64,
}

impl DatasetSpec {
    /// 200 symbols at 64 sps, 70 guard symbols per side, 100 layers, 80 km,
    /// noiseless inverse-crime data.
    pub fn full_scale() -> Self {
        Self {
            pulse: PulseSpec::full_scale(),
            num_symbols: 200,
            zero_pad_per_side: 70,
            launch_power_mw: 1.0,
            fiber: FiberParams::full_scale(),
            model_layers: 100,
            oracle_layers: 100,
            layer_multiple: 1,
            oversample: 1,
            snr: f64::INFINITY,
            denoise: false,
            seed: 0,
        }
    }

    /// Reduced scale used by tests: 50 symbols at 16 sps, 20 layers.
    pub fn desk() -> Self {
        Self {
            pulse: PulseSpec::full_scale()
                .with_samples_per_symbol(16)
                .expect("16 sps is valid"),
            num_symbols: 50,
            model_layers: 20,
            oracle_layers: 20,
            ..Self::full_scale()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, snr: f64, denoise: bool) -> Self {
        self.snr = snr;
        self.denoise = denoise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_symbols == 0 {
            return Err(invalid("num_symbols", "must be >= 1"));
        }
        for (name, v) in [
            ("model_layers", self.model_layers),
            ("oracle_layers", self.oracle_layers),
            ("layer_multiple", self.layer_multiple),
            ("oversample", self.oversample),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be >= 1"));
            }
        }
        if self.snr.is_nan() || self.snr <= 0.0 {
            return Err(invalid("snr", format!("must be > 0, got {}", self.snr)));
        }
        FiberParams::new(self.fiber.beta, self.fiber.gamma, self.fiber.length)?;
        Ok(())
    }

    /// Input and output noise seeds; distinct from each other and from the
    /// symbol seed stream.
    fn noise_seeds(&self) -> (u64, u64) {
        let base = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        (base ^ 0x1, base ^ 0x2)
    }

    pub fn build(&self) -> Result<Dataset> {
        self.validate()?;
        let constellation = Constellation::qam16();
        let power = power_factor_for_launch_mw(self.launch_power_mw, &self.pulse, &constellation)?;
        let symbols = generate_symbols(self.num_symbols, &constellation, self.seed)?
            .with_power(power)?
            .with_zero_padding(self.zero_pad_per_side);
        let (clean_in, clean_out) = generate_ground_truth(
            &symbols,
            &self.pulse,
            &self.fiber,
            self.oracle_layers,
            self.oversample,
            self.layer_multiple,
        )?;
        let (seed_in, seed_out) = self.noise_seeds();
        let mut input = add_awgn(
            &clean_in,
            &NoiseSpec {
                snr: self.snr,
                seed: seed_in,
            },
        )?;
        let mut target = add_awgn(
            &clean_out,
            &NoiseSpec {
                snr: self.snr,
                seed: seed_out,
            },
        )?;
        if self.denoise {
            input = matched_filter_denoise(&input, &self.pulse)?;
            target = matched_filter_denoise(&target, &self.pulse)?;
        }
        let grid = SimGrid::for_signal(&input, self.model_layers, self.fiber.length)?;
        Ok(Dataset {
            input,
            target,
            clean_input: clean_in,
            clean_target: clean_out,
            grid,
        })
    }
}

/// A generated pair plus the network grid it should be fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input: ComplexSignal,
    pub target: ComplexSignal,
    pub clean_input: ComplexSignal,
    pub clean_target: ComplexSignal,
    pub grid: SimGrid,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_sizes() {
        let d = DatasetSpec::desk().build().unwrap();
        assert_eq!(d.input.len(), (50 + 140) * 16);
        assert_eq!(d.grid.num_layers(), 20);
        assert_eq!(d.input, d.clean_input);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = DatasetSpec::desk().with_seed(9).with_noise(200.0, false);
        let a = spec.build().unwrap();
        let b = spec.build().unwrap();
        assert_eq!(a, b);
        assert_ne!(a.input, a.clean_input);
        let c = spec.with_seed(10).build().unwrap();
        assert_ne!(a.input, c.input);
    }

    #[test]
    fn one_mw_is_a_hundredth_at_10_ps() {
        let p =
            power_factor_for_launch_mw(1.0, &DatasetSpec::desk().pulse, &Constellation::qam16());
        assert!((p.unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_counts() {
        let spec = DatasetSpec {
            layer_multiple: 0,
            ..DatasetSpec::desk()
        };
        assert!(spec.build().is_err());
    }
}
