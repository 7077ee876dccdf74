use nlsnet_core::attenuation::{estimate_alpha, weighted_norm};
use nlsnet_core::dataset::DatasetSpec;
use nlsnet_core::propagator::{propagate, FiberParams};
use nlsnet_core::C64;
use proptest::prelude::*;

#[test]
fn recovers_injected_loss_after_propagation() {
    let d = DatasetSpec::desk().build().unwrap();
    let out = propagate(&d.input, &FiberParams::full_scale(), &d.grid).unwrap();
    assert!(estimate_alpha(&d.input, &out, 80.0).unwrap().alpha.abs() < 1e-9);
    for alpha in [0.01, 0.046, 0.2] {
        let lossy = out.scaled(C64::new((-alpha * 80.0 / 2.0_f64).exp(), 0.0));
        let est = estimate_alpha(&d.input, &lossy, 80.0).unwrap();
        assert!((est.alpha - alpha).abs() < 1e-9, "{alpha}: {}", est.alpha);
        assert_eq!(est.norm_in, weighted_norm(&d.input));
        assert_eq!(est.length, 80.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sign_follows_norm_ratio(scale in 0.01f64..100.0, common in 0.001f64..1000.0) {
        let d = DatasetSpec { num_symbols: 8, zero_pad_per_side: 4, ..DatasetSpec::desk() }
            .build()
            .unwrap();
        let out = d.input.scaled(C64::new(scale, 0.0));
        let a = estimate_alpha(&d.input, &out, 80.0).unwrap().alpha;
        prop_assert_eq!(a > 0.0, scale < 1.0);
        let c = C64::new(0.0, common);
        let b = estimate_alpha(&d.input.scaled(c), &out.scaled(c), 80.0).unwrap().alpha;
        prop_assert!((a - b).abs() < 1e-14);
    }
}
