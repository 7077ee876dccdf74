use nlsnet_core::dataset::DatasetSpec;
use nlsnet_core::propagator::{
    build_fresnel_kernel, dispersion_multiplier, fresnel_alias_free, fresnel_convolve,
    generate_ground_truth, linear_step, nonlinear_step, propagate, propagate_unfused,
    propagate_with, FiberParams, LinearBackend, SimGrid,
};
use nlsnet_core::signal::{generate_symbols, modulate, ComplexSignal, Constellation, PulseSpec};
use nlsnet_core::{Error, C64};
use proptest::prelude::*;

fn rel_dist(a: &ComplexSignal, b: &ComplexSignal) -> f64 {
    let num: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    (num / b.samples().iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

fn gaussian(n: usize, tau: f64, t0: f64, amp: f64) -> ComplexSignal {
    let centre = n as f64 * tau / 2.0;
    let s = (0..n)
        .map(|k| {
            let t = k as f64 * tau - centre;
            C64::new(amp * (-t * t / (2.0 * t0 * t0)).exp(), 0.0)
        })
        .collect();
    ComplexSignal::new(s, tau).unwrap()
}

/// `T0 / sqrt(T0² - i beta z) * exp(-t² / (2 (T0² - i beta z)))`.
fn dispersed_gaussian(n: usize, tau: f64, t0: f64, beta_z: f64) -> ComplexSignal {
    let centre = n as f64 * tau / 2.0;
    let q = C64::new(t0 * t0, -beta_z);
    let s = (0..n)
        .map(|k| {
            let t = k as f64 * tau - centre;
            t0 / q.sqrt() * (-(t * t) / (2.0 * q)).exp()
        })
        .collect();
    ComplexSignal::new(s, tau).unwrap()
}

#[test]
fn dispersion_matches_closed_form_gaussian() {
    let (n, tau, t0) = (8192, 0.25, 20.0);
    let input = gaussian(n, tau, t0, 1.0);
    let fiber = FiberParams::new(-21.6, 0.0, 80.0).unwrap();
    let grid = SimGrid::for_signal(&input, 100, 80.0).unwrap();
    let out = propagate(&input, &fiber, &grid).unwrap();
    let exact = dispersed_gaussian(n, tau, t0, -21.6 * 80.0);
    assert!(rel_dist(&out, &exact) < 1e-6, "{}", rel_dist(&out, &exact));
    // The opposite sign convention would give the conjugate chirp.
    let wrong = dispersed_gaussian(n, tau, t0, 21.6 * 80.0);
    assert!(rel_dist(&out, &wrong) > 1e-1);
}

#[test]
fn pure_kerr_matches_closed_form() {
    let p = PulseSpec::new(10.0, 0.1, 8).unwrap();
    let seq = generate_symbols(30, &Constellation::qam16(), 4)
        .unwrap()
        .with_zero_padding(5);
    let input = modulate(&seq, &p).unwrap();
    let fiber = FiberParams::new(0.0, 1.6, 80.0).unwrap();
    let grid = SimGrid::for_signal(&input, 100, 80.0).unwrap();
    let out = propagate(&input, &fiber, &grid).unwrap();
    let exact: Vec<C64> = input
        .samples()
        .iter()
        .map(|a| a * C64::from_polar(1.0, 1.6 * 80.0 * a.norm_sqr()))
        .collect();
    let exact = ComplexSignal::new(exact, input.tau()).unwrap();
    assert!(rel_dist(&out, &exact) < 1e-12);
    assert!(rel_dist(&out, &nonlinear_step(&input, 1.6, 80.0)) < 1e-12);
}

#[test]
fn linear_only_equals_single_step() {
    let input = gaussian(512, 0.5, 8.0, 0.7);
    let fiber = FiberParams::new(-21.6, 0.0, 80.0).unwrap();
    let grid = SimGrid::for_signal(&input, 17, 80.0).unwrap();
    let out = propagate(&input, &fiber, &grid).unwrap();
    let one = linear_step(&input, &dispersion_multiplier(-21.6, 80.0, &grid)).unwrap();
    assert!(rel_dist(&out, &one) < 1e-12);
}

#[test]
fn tiny_step_returns_input() {
    // Both steps move the signal by O(z): the Kerr phase is gamma z |A|² = 1.6e-6.
    let input = gaussian(256, 0.5, 6.0, 1.0);
    let fiber = FiberParams::new(-21.6, 1.6, 1e-6).unwrap();
    let grid = SimGrid::for_signal(&input, 1, 1e-6).unwrap();
    let d = rel_dist(&propagate(&input, &fiber, &grid).unwrap(), &input);
    assert!(d < 2e-6 && d > 0.0, "{d}");
}

#[test]
fn fresnel_step_matches_spectral_step_where_kernel_spans_all_lags() {
    let (n, tau) = (2048, 0.5);
    let input = gaussian(n, tau, 20.0, 0.5);
    let fiber = FiberParams::new(-21.6, 1.6, 80.0).unwrap();
    let grid = SimGrid::for_signal(&input, 4, 80.0).unwrap();
    let eta = 0.5 * fiber.beta * grid.step();
    assert!(fresnel_alias_free(eta, &grid));
    let kernel = build_fresnel_kernel(eta, &grid).unwrap();
    for k in 0..kernel.len() {
        assert_eq!(kernel[k], kernel[kernel.len() - 1 - k]);
    }
    let conv = fresnel_convolve(&input, &kernel).unwrap();
    let mult = linear_step(
        &input,
        &dispersion_multiplier(fiber.beta, 0.5 * grid.step(), &grid),
    )
    .unwrap();

    // The kernel stops at half a window of lag. Outputs in the central half
    // only need lags the kernel has, and there the two agree to rounding.
    let q = n / 4;
    let mid = |s: &ComplexSignal| ComplexSignal::new(s.samples()[q..3 * q].to_vec(), tau).unwrap();
    assert!(
        rel_dist(&mid(&conv), &mid(&mult)) < 1e-12,
        "{}",
        rel_dist(&mid(&conv), &mid(&mult))
    );

    // Near the edges the cut-off chirp leaves an endpoint term of relative
    // size sqrt(|eta| / 2pi) / half-window.
    let endpoint = (eta.abs() / (2.0 * std::f64::consts::PI)).sqrt() / (n as f64 * tau / 2.0);
    let whole = rel_dist(&conv, &mult);
    assert!(
        whole > 0.5 * endpoint && whole < 2.0 * endpoint,
        "{whole} vs {endpoint}"
    );

    let fresnel = propagate_with(&input, &fiber, &grid, LinearBackend::Fresnel).unwrap();
    assert!(fresnel.samples().iter().all(|z| z.is_finite()));
}

#[test]
fn fresnel_kernel_rejects_zero_eta() {
    let grid = SimGrid::new(1, 16, 1.0, 0.5).unwrap();
    assert!(matches!(
        build_fresnel_kernel(0.0, &grid),
        Err(Error::InvalidParameter { .. })
    ));
}

/// Gaussian with a few radians of nonlinear phase; smooth enough that the
/// splitting error is in its asymptotic regime from about 20 layers.
#[test]
fn strang_error_is_second_order() {
    let input = gaussian(1024, 0.5, 15.0, 0.15);
    let fiber = FiberParams::new(-21.6, 1.6, 80.0).unwrap();
    let run = |m: usize| {
        propagate(
            &input,
            &fiber,
            &SimGrid::for_signal(&input, m, 80.0).unwrap(),
        )
        .unwrap()
    };
    let reference = run(2560);
    let errs: Vec<f64> = [20, 40, 80, 160]
        .iter()
        .map(|&m| rel_dist(&run(m), &reference))
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.4..=4.6).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn refinement_ratio_of_ground_truth() {
    let spec = DatasetSpec::desk();
    let symbols = generate_symbols(spec.num_symbols, &Constellation::qam16(), 0)
        .unwrap()
        .with_power(0.01)
        .unwrap()
        .with_zero_padding(spec.zero_pad_per_side);
    let out = |mult: usize| {
        generate_ground_truth(&symbols, &spec.pulse, &spec.fiber, 20, 1, mult)
            .unwrap()
            .1
    };
    let (o2, o4, o8) = (out(10), out(20), out(40));
    let d1 = rel_dist(&o2, &o8);
    let d2 = rel_dist(&o4, &o8);
    // Richardson: e(2h)/e(h) with the limit approximated by the finest run.
    let ratio = (d1 - d2) / d2;
    assert!((3.0..=5.0).contains(&ratio), "{d1} {d2} {ratio}");
}

#[test]
fn ground_truth_factors() {
    let spec = DatasetSpec::desk();
    let symbols = generate_symbols(10, &Constellation::qam16(), 0)
        .unwrap()
        .with_power(0.01)
        .unwrap()
        .with_zero_padding(8);
    let (a_in, a_out) = generate_ground_truth(&symbols, &spec.pulse, &spec.fiber, 5, 1, 1).unwrap();
    assert_eq!(a_in, modulate(&symbols, &spec.pulse).unwrap());
    let grid = SimGrid::for_signal(&a_in, 5, 80.0).unwrap();
    assert_eq!(a_out, propagate(&a_in, &spec.fiber, &grid).unwrap());
    let (b_in, b_out) = generate_ground_truth(&symbols, &spec.pulse, &spec.fiber, 5, 2, 1).unwrap();
    assert_eq!(b_in.len(), a_in.len());
    assert!(rel_dist(&b_in, &a_in) < 1e-12);
    // Pulse taps end at the guard interval; the cut leaks a little energy
    // above the coarse Nyquist rate, which more guard symbols suppress.
    let coarse = rel_dist(&b_out, &a_out);
    let padded = generate_symbols(10, &Constellation::qam16(), 0)
        .unwrap()
        .with_power(0.01)
        .unwrap()
        .with_zero_padding(40);
    let wide = |os: usize| {
        generate_ground_truth(&padded, &spec.pulse, &spec.fiber, 5, os, 1)
            .unwrap()
            .1
    };
    let fine = rel_dist(&wide(2), &wide(1));
    assert!(coarse < 1e-2 && fine < coarse / 10.0, "{coarse} {fine}");
    assert!(generate_ground_truth(&symbols, &spec.pulse, &spec.fiber, 5, 0, 1).is_err());
}

fn read_golden() -> Vec<(usize, C64)> {
    include_str!("data/golden_default.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let idx = it.next().unwrap().parse().unwrap();
            let re = it.next().unwrap().parse().unwrap();
            let im = it.next().unwrap().parse().unwrap();
            (idx, C64::new(re, im))
        })
        .collect()
}

#[test]
fn default_setting_regression() {
    let data = DatasetSpec::full_scale().build().unwrap();
    let out = propagate(&data.input, &FiberParams::full_scale(), &data.grid).unwrap();
    assert_eq!(out, data.target);
    let golden = read_golden();
    assert!(golden.len() > 100);
    let scale = golden.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max);
    for (idx, z) in golden {
        assert!(
            (out.samples()[idx] - z).norm() <= 1e-12 * scale,
            "sample {idx}"
        );
    }
    let fine = propagate(
        &data.input,
        &FiberParams::full_scale(),
        &data.grid.with_layers(1000).unwrap(),
    )
    .unwrap();
    assert!(rel_dist(&out, &fine) < 1e-3, "{}", rel_dist(&out, &fine));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_conserved(
        seed in any::<u64>(),
        beta in -40.0f64..40.0,
        gamma in -5.0f64..5.0,
        layers in 1usize..12,
    ) {
        let p = PulseSpec::new(10.0, 0.1, 4).unwrap();
        let seq = generate_symbols(12, &Constellation::qam16(), seed)
            .unwrap()
            .with_power(0.01)
            .unwrap()
            .with_zero_padding(6);
        let input = modulate(&seq, &p).unwrap();
        let fiber = FiberParams::new(beta, gamma, 80.0).unwrap();
        let grid = SimGrid::for_signal(&input, layers, 80.0).unwrap();
        let out = propagate(&input, &fiber, &grid).unwrap();
        prop_assert!((out.norm() / input.norm() - 1.0).abs() < 1e-9);
        let slow = propagate_unfused(&input, &fiber, &grid).unwrap();
        prop_assert!(rel_dist(&out, &slow) < 1e-12);
    }

    #[test]
    fn steps_preserve_modulus_and_norm(
        re in prop::collection::vec(-2.0f64..2.0, 8..64),
        eta in -3.0f64..3.0,
        beta in -30.0f64..30.0,
    ) {
        let s: Vec<C64> = re.iter().enumerate().map(|(i, r)| C64::new(*r, (i as f64).sin())).collect();
        let sig = ComplexSignal::new(s, 0.5).unwrap();
        let out = nonlinear_step(&sig, eta, 1.0);
        for (a, b) in sig.samples().iter().zip(out.samples()) {
            prop_assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
        let grid = SimGrid::for_signal(&sig, 1, 1.0).unwrap();
        let lin = linear_step(&sig, &dispersion_multiplier(beta, 0.7, &grid)).unwrap();
        prop_assert!((lin.norm() / sig.norm() - 1.0).abs() < 1e-12);
    }
}
