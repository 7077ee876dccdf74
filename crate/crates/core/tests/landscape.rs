use nlsnet_core::dataset::{Dataset, DatasetSpec};
use nlsnet_core::estimator::OptimizerConfig;
use nlsnet_core::landscape::{
    bias_variance_experiment, find_global_min, hyperparameter_sweep, scan_grid, stability_probe,
    GridSpec, LandscapeGrid, MinimizerStats, SweepAxis,
};
use nlsnet_core::propagator::{FiberParams, SimGrid};
use nlsnet_core::signal::{ComplexSignal, PulseSpec};
use nlsnet_core::{Error, C64};
use proptest::prelude::*;
use std::sync::OnceLock;

fn desk() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| DatasetSpec::desk().build().unwrap())
}

/// 20 symbols at 8 sps; small enough for many fits.
fn tiny() -> DatasetSpec {
    DatasetSpec {
        pulse: PulseSpec::new(10.0, 0.1, 8).unwrap(),
        num_symbols: 20,
        zero_pad_per_side: 20,
        model_layers: 10,
        oracle_layers: 10,
        ..DatasetSpec::desk()
    }
}

#[test]
fn truth_node_has_zero_loss() {
    let d = desk();
    let spec = GridSpec::new((-21.6, -21.0), (1.6, 2.0), 2, 2).unwrap();
    let l = scan_grid(&d.input, &d.target, &d.grid, &spec).unwrap();
    assert!(l.at(0, 0) < 1e-12);
    assert_eq!(l.argmin().map(|(i, j, _)| (i, j)), Some((0, 0)));
}

#[test]
fn three_by_three_centre_is_minimal() {
    let d = desk();
    let spec = GridSpec::new((-21.7, -21.5), (1.5, 1.7), 3, 3).unwrap();
    let l = scan_grid(&d.input, &d.target, &d.grid, &spec).unwrap();
    assert_eq!(l.losses.len(), 9);
    assert_eq!(l.argmin().map(|(i, j, _)| (i, j)), Some((1, 1)));
}

#[test]
fn refinement_never_raises_the_minimum() {
    let d = desk();
    let coarse = GridSpec::new((-23.0, -20.0), (0.5, 3.5), 5, 5).unwrap();
    let fine = GridSpec::new((-23.0, -20.0), (0.5, 3.5), 9, 9).unwrap();
    let a = scan_grid(&d.input, &d.target, &d.grid, &coarse)
        .unwrap()
        .argmin()
        .unwrap()
        .2;
    let b = scan_grid(&d.input, &d.target, &d.grid, &fine)
        .unwrap()
        .argmin()
        .unwrap()
        .2;
    assert!(b <= a + 1e-14, "{b} > {a}");
}

#[test]
fn scan_is_thread_count_invariant() {
    let d = desk();
    let spec = GridSpec::around(-21.6, 1.6, 7).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scan_grid(&d.input, &d.target, &d.grid, &spec).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn coarse_window_has_one_low_basin() {
    let d = desk();
    let spec = GridSpec::around(-21.6, 1.6, 21).unwrap();
    let l = scan_grid(&d.input, &d.target, &d.grid, &spec).unwrap();
    assert_eq!(l.low_basin_count(2.0), 1);
    let (i, j, _) = l.argmin().unwrap();
    assert_eq!((i, j), spec.nearest(-21.6, 1.6));
}

#[test]
fn blow_up_cells_become_sentinels() {
    let d = desk();
    // Kerr and dispersion steps are pure phases, so only a phase argument
    // that overflows to infinity can produce a non-finite sample.
    let spec = GridSpec::new((-1e308, -21.6), (1.6, 2.0), 2, 2).unwrap();
    let l = scan_grid(&d.input, &d.target, &d.grid, &spec).unwrap();
    assert!(l.at(0, 0).is_infinite() && l.at(0, 1).is_infinite());
    assert!(l.at(1, 0) < 1e-12);
    assert_eq!(l.argmin().map(|(i, j, _)| (i, j)), Some((1, 0)));
    let all_inf = LandscapeGrid::new(spec, vec![f64::INFINITY; 4]).unwrap();
    assert_eq!(
        find_global_min(
            &all_inf,
            &d.input,
            &d.target,
            &d.grid,
            &OptimizerConfig::adam()
        )
        .map(|g| g.loss),
        Err(Error::NoFiniteCell)
    );
}

#[test]
fn global_min_on_inverse_crime_data() {
    let d = desk();
    let spec = GridSpec::around(-21.6, 1.6, 11).unwrap();
    let l = scan_grid(&d.input, &d.target, &d.grid, &spec).unwrap();
    let g = find_global_min(&l, &d.input, &d.target, &d.grid, &OptimizerConfig::adam()).unwrap();
    assert!((g.beta + 21.6).abs() < 1e-4 * 21.6, "{g:?}");
    assert!((g.gamma - 1.6).abs() < 1e-4 * 1.6, "{g:?}");
}

#[test]
fn global_min_on_mismatched_data_is_biased() {
    let spec = DatasetSpec {
        layer_multiple: 4,
        ..tiny()
    };
    let d = spec.build().unwrap();
    let grid = GridSpec::around(-21.6, 1.6, 5).unwrap();
    let l = scan_grid(&d.input, &d.target, &d.grid, &grid).unwrap();
    let g = find_global_min(&l, &d.input, &d.target, &d.grid, &OptimizerConfig::adam()).unwrap();
    assert!(g.loss > 0.0);
    assert!(g.beta != -21.6 || g.gamma != 1.6);
    // The refined point beats the truth, which is not a zero of the loss.
    let net = nlsnet_core::nlsnet::NlsNet::new(d.grid);
    let at_truth = net.loss(-21.6, 1.6, &d.input, &d.target).unwrap().value;
    assert!(at_truth > 0.0 && g.loss <= at_truth);
}

#[test]
fn deeper_models_fit_better() {
    let base = DatasetSpec {
        oracle_layers: 20,
        layer_multiple: 4,
        ..tiny()
    };
    let rows = hyperparameter_sweep(
        SweepAxis::NumLayers,
        &[5, 10, 20],
        &base,
        (-21.6, 1.6),
        &OptimizerConfig::adam(),
    )
    .unwrap();
    assert_eq!(
        rows.iter().map(|r| r.value).collect::<Vec<_>>(),
        vec![5, 10, 20]
    );
    for w in rows.windows(2) {
        assert!(w[1].loss <= w[0].loss, "{rows:?}");
    }
}

#[test]
fn sweep_arguments_are_checked() {
    let cfg = OptimizerConfig::adam();
    assert!(hyperparameter_sweep(SweepAxis::NumLayers, &[], &tiny(), (-21.6, 1.6), &cfg).is_err());
    assert!(
        hyperparameter_sweep(SweepAxis::SamplingRate, &[3], &tiny(), (-21.6, 1.6), &cfg).is_err()
    );
    assert_eq!(
        SweepAxis::from_name("sampling_rate"),
        Some(SweepAxis::SamplingRate)
    );
    assert_eq!(SweepAxis::from_name("depth"), None);
}

#[test]
fn identical_seeds_give_zero_covariance() {
    let stats = bias_variance_experiment(
        &tiny(),
        &[10, 20],
        &[3, 3, 3],
        (-21.6, 1.6),
        &OptimizerConfig::adam(),
        &OptimizerConfig::warm_start(),
    )
    .unwrap();
    for s in &stats {
        assert_eq!(s.cov, [[0.0, 0.0], [0.0, 0.0]]);
        assert_eq!((s.n_ok, s.n_excluded, s.group_size), (3, 0, 3));
    }
    let (adam, warm) = (OptimizerConfig::adam(), OptimizerConfig::warm_start());
    assert!(bias_variance_experiment(&tiny(), &[10], &[1], (-21.6, 1.6), &adam, &warm).is_err());
}

#[test]
fn mismatched_bias_variance_statistics_are_psd() {
    let base = DatasetSpec {
        layer_multiple: 4,
        ..tiny()
    };
    let stats = bias_variance_experiment(
        &base,
        &[10, 20],
        &[0, 1, 2, 3],
        (-21.6, 1.6),
        &OptimizerConfig::adam(),
        &OptimizerConfig::warm_start(),
    )
    .unwrap();
    for s in &stats {
        assert_eq!(s.cov[0][1], s.cov[1][0]);
        assert!(s.min_eigenvalue() >= -1e-18);
        assert!(s.cov[1][1] > 0.0);
        assert_eq!(s.n_excluded, 0);
        assert!(s.bias[0] > 0.0 || s.bias[1] > 0.0);
    }
}

#[test]
fn probe_distances() {
    let d = desk();
    let fiber = FiberParams::full_scale();
    let rows = stability_probe(
        &d.input,
        &fiber,
        &[(0.0, 0.0), (0.1, 0.0), (0.2, 0.0), (0.4, 0.0)],
        &d.grid,
    )
    .unwrap();
    assert_eq!(rows[0].distance, 0.0);
    for w in rows.windows(2) {
        assert!(w[1].distance > w[0].distance, "{rows:?}");
    }
    assert!(stability_probe(&d.input, &fiber, &[(f64::NAN, 0.0)], &d.grid).is_err());
}

#[test]
fn probe_is_even_in_gamma_for_constant_modulus() {
    let n = 256;
    let tau = 0.5;
    let input: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(0.4, 2.0 * std::f64::consts::PI * 5.0 * k as f64 / n as f64))
        .collect();
    let input = ComplexSignal::new(input, tau).unwrap();
    let grid = SimGrid::for_signal(&input, 10, 80.0).unwrap();
    let fiber = FiberParams::full_scale();
    let rows = stability_probe(
        &input,
        &fiber,
        &[(0.0, 0.3), (0.0, -0.3), (0.0, 1.1), (0.0, -1.1)],
        &grid,
    )
    .unwrap();
    for pair in rows.chunks(2) {
        let (a, b) = (pair[0].distance, pair[1].distance);
        assert!((a - b).abs() < 1e-12 * a.max(1.0), "{a} vs {b}");
        assert!(a > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_covariance_is_psd(
        pts in prop::collection::vec((-30.0f64..-10.0, 0.5f64..5.0), 2..40),
    ) {
        let points: Vec<[f64; 2]> = pts.iter().map(|&(b, g)| [b, g]).collect();
        let s = MinimizerStats::from_points(50, points.len(), &points, (-21.6, 1.6));
        prop_assert_eq!(s.cov[0][1], s.cov[1][0]);
        prop_assert!(s.min_eigenvalue() >= -1e-18 * (1.0 + s.cov[0][0].abs() + s.cov[1][1].abs()));
    }

    #[test]
    fn grid_nodes_stay_in_range(lo in -40.0f64..0.0, width in 0.1f64..20.0, n in 2usize..200) {
        let spec = GridSpec::new((lo, lo + width), (0.0, 1.0), n, 2).unwrap();
        prop_assert_eq!(spec.beta_at(0), lo);
        prop_assert_eq!(spec.beta_at(n - 1), lo + width);
        for i in 1..n {
            prop_assert!(spec.beta_at(i) > spec.beta_at(i - 1));
        }
    }
}
