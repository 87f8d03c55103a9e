use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use randsum_core::index::IndexKind;
use randsum_core::montecarlo::{
    cf_identity_check, clt_sweep, dkw_band, kolmogorov_distance, ks_p_value, simulate, simulate_with_seeds,
    sup_distance_sorted, EmpiricalSample, DEFAULT_CONFIDENCE,
};
use randsum_core::rng::SimulationSeeds;
use randsum_core::{RandomIndexModel, SummandFamily};

fn check_moments(s: &EmpiricalSample) {
    let m = s.trials as f64;
    assert!(s.mean.abs() <= 5.0 / m.sqrt(), "mean {} at {} trials", s.mean, s.trials);
    assert!((s.variance - 1.0).abs() <= 10.0 / m.sqrt(), "variance {} at {} trials", s.variance, s.trials);
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn dkw_band_value() {
    let oracle = ((2.0f64 / 0.001).ln() / 200_000.0).sqrt();
    assert_eq!(dkw_band(100_000, 0.999), oracle);
    assert!((oracle - 0.006_165).abs() < 1e-6);
}

#[test]
fn normal_summands_are_exactly_normal() {
    for f in [SummandFamily::normal(), SummandFamily::geonormal()] {
        for kind in IndexKind::ALL {
            let s = simulate(&f, &kind.model(20).unwrap(), 100_000, 3).unwrap();
            let est = kolmogorov_distance(&s, DEFAULT_CONFIDENCE).unwrap();
            assert!(est.d_hat <= est.dkw_band, "{f} {kind:?}: {est:?}");
            assert!(ks_p_value(est.d_hat, s.trials) > 1e-3, "{f} {kind:?}: {est:?}");
            check_moments(&s);
        }
    }
}

#[test]
fn normal_meta_test_over_seeds() {
    let f = SummandFamily::normal();
    let model = RandomIndexModel::shifted_poisson(5).unwrap();
    let inside = (0..100u64)
        .filter(|&seed| {
            let s = simulate(&f, &model, 10_000, seed).unwrap();
            let est = kolmogorov_distance(&s, DEFAULT_CONFIDENCE).unwrap();
            est.d_hat <= est.dkw_band
        })
        .count();
    // At least 99.9% of 100 runs means all of them.
    assert_eq!(inside, 100);
}

#[test]
fn single_rademacher_trial_is_a_sign() {
    let s = simulate(&SummandFamily::rademacher(), &RandomIndexModel::deterministic(1).unwrap(), 1, 0).unwrap();
    assert_eq!(s.values.len(), 1);
    assert!(s.values[0] == 1.0 || s.values[0] == -1.0);
}

#[test]
fn zero_trials_is_rejected() {
    assert!(simulate(&SummandFamily::normal(), &RandomIndexModel::deterministic(3).unwrap(), 0, 0).is_err());
}

#[test]
fn samples_are_sorted_with_complete_histograms() {
    let s = simulate(&SummandFamily::exponential(), &RandomIndexModel::shifted_geometric(30).unwrap(), 20_000, 9)
        .unwrap();
    assert_eq!(s.values.len(), 20_000);
    assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(s.index_histogram.values().sum::<u64>(), 20_000);
    check_moments(&s);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let f = SummandFamily::twopoint();
    let model = RandomIndexModel::uniform(40).unwrap();
    let run = || simulate(&f, &model, 30_000, 17).unwrap();
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), four.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(one.index_histogram, four.index_histogram);
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
    assert_eq!(one.variance.to_bits(), four.variance.to_bits());
}

#[test]
fn index_lane_is_independent_of_summand_lane() {
    let f = SummandFamily::uniform();
    let model = RandomIndexModel::shifted_poisson(25).unwrap();
    let base = SimulationSeeds::from_seed(5);
    let other = SimulationSeeds { summand: base.summand ^ 0xdead_beef, ..base };
    let a = simulate_with_seeds(&f, &model, 10_000, base).unwrap();
    let b = simulate_with_seeds(&f, &model, 10_000, other).unwrap();
    assert_eq!(a.index_histogram, b.index_histogram);
    assert_ne!(a.values, b.values);
    let c = simulate(&f, &model, 10_000, 6).unwrap();
    assert_ne!(a.index_histogram, c.index_histogram);
}

#[test]
fn kolmogorov_distance_of_a_point_mass() {
    assert_eq!(sup_distance_sorted(&[0.0; 64]), 0.5);
}

#[test]
fn kolmogorov_distance_ignores_draw_order() {
    let s = simulate(&SummandFamily::rademacher(), &RandomIndexModel::deterministic(9).unwrap(), 5_000, 1).unwrap();
    let mut shuffled = s.values.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    shuffled.sort_by(f64::total_cmp);
    assert_eq!(sup_distance_sorted(&shuffled), kolmogorov_distance(&s, 0.999).unwrap().d_hat);
}

#[test]
fn cf_identity_examples() {
    let grid = [0.0, 0.5, 1.0, 2.0, 4.0];
    for f in SummandFamily::builtins() {
        let det = cf_identity_check(&f, &RandomIndexModel::deterministic(5).unwrap(), &grid).unwrap();
        assert_eq!(det.max_deviation, 0.0, "{f}");
        let p = cf_identity_check(&f, &RandomIndexModel::shifted_poisson(5).unwrap(), &grid).unwrap();
        assert!(p.max_deviation <= p.truncation_tail_mass.max(1e-15) && p.truncation_tail_mass <= 1e-12, "{f}: {p:?}");
        assert!((p.rows[0].mixture - 1.0).abs() <= 1e-12 && p.rows[0].target == 1.0);
    }
}

#[test]
fn sweep_points_behave() {
    let normal = clt_sweep(&SummandFamily::normal(), &IndexKind::ShiftedGeometric.into(), &[10, 100], 50_000, 2).unwrap();
    assert!(normal.iter().all(|p| p.d_hat <= p.dkw_band), "{normal:?}");
    let det = clt_sweep(&SummandFamily::rademacher(), &IndexKind::Deterministic.into(), &[16], 20_000, 4).unwrap();
    let direct = simulate(&SummandFamily::rademacher(), &RandomIndexModel::deterministic(16).unwrap(), 20_000, 4).unwrap();
    assert_eq!(det[0].d_hat, kolmogorov_distance(&direct, DEFAULT_CONFIDENCE).unwrap().d_hat);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_is_bit_identical(seed in any::<u64>(), n in 1usize..50, kind in prop::sample::select(IndexKind::ALL.to_vec())) {
        let f = SummandFamily::exponential();
        let model = kind.model(n).unwrap();
        let a = simulate(&f, &model, 2_000, seed).unwrap();
        let b = simulate(&f, &model, 2_000, seed).unwrap();
        prop_assert_eq!(a.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
