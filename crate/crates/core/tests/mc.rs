use chernoff_core::chain::{exact_means, ObservableSequence, PathSampler};
use chernoff_core::linalg::{expm_scaled, frobenius_norm, ComplexMatrix};
use chernoff_core::mc::{
    dominance_table, empirical_tail, exact_an, exact_tail, simulate_tails, verify_renewal, DominanceConfig, TailSetup,
};
use chernoff_core::models::{random_chain, random_lazy_chain, random_observable};
use chernoff_core::{Exec, HermitianMatrix, StreamKey};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn exact_trace_functional_matches_sampling() {
    let key = StreamKey::root(77);
    let model = random_lazy_chain(3, key).unwrap();
    let obs = random_observable(3, 2, 3, 0.8, &mut key.child(5).rng());
    let (s, phi, n) = (0.6, 0.7, 4);
    let exact = exact_an(&model, &obs, s, phi, n).unwrap();
    let means = exact_means(&model, &obs, n).unwrap();
    let z = Complex64::from_polar(0.5 * s, phi);
    let sampler = PathSampler::new(&model, n).unwrap();
    let reps = 40_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..reps {
        let mut prod = ComplexMatrix::identity(2, 2);
        sampler.walk(key.child(100).child(i), |t, x| {
            prod = &prod * expm_scaled(&obs.eval(t, x).sub(&means[t - 1]), z).unwrap();
        });
        let v = frobenius_norm(&prod).powi(2);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / reps as f64;
    let se = ((sum_sq / reps as f64 - mean * mean) / reps as f64).sqrt();
    assert!((mean - exact.a[n]).abs() <= 5.0 * se, "mc {mean} ± {se} vs exact {}", exact.a[n]);
}

#[test]
fn empirical_tail_covers_exact_tail() {
    let key = StreamKey::root(3);
    let model = random_chain(3, 6, key).unwrap();
    let obs = random_observable(3, 2, 2, 1.0, &mut key.child(1).rng());
    let grid: Vec<f64> = (1..=8).map(|k| 0.1 * k as f64).collect();
    let exact = exact_tail(&model, &obs, 6, &grid).unwrap();
    let est = empirical_tail(&model, &obs, 6, &grid, 20_000, 9, &Exec::sequential()).unwrap();
    for (k, p) in exact.iter().enumerate() {
        assert!(est.ci_lower[k] <= *p && *p <= est.ci_upper[k], "eps {} exact {} ci [{}, {}]", grid[k], p, est.ci_lower[k], est.ci_upper[k]);
    }
}

#[test]
fn tails_identical_across_thread_counts() {
    let key = StreamKey::root(8);
    let model = random_lazy_chain(4, key).unwrap();
    let obs = random_observable(4, 2, 5, 1.0, &mut key.child(1).rng());
    let setup = TailSetup::new(&model, &obs, 50).unwrap();
    let grid = [0.01, 0.05, 0.1];
    let a = simulate_tails(&setup, &grid, 5000, key, &Exec::sequential()).unwrap();
    let b = simulate_tails(&setup, &grid, 5000, key, &Exec::with_threads(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn constant_observable_never_deviates() {
    let model = random_chain(3, 10, StreamKey::root(4)).unwrap();
    let obs = ObservableSequence::constant(HermitianMatrix::from_real_diagonal(&[1.0, -2.0]));
    let est = empirical_tail(&model, &obs, 10, &[1e-6, 0.1, 1.0], 1000, 1, &Exec::sequential()).unwrap();
    assert!(est.counts.iter().all(|&c| c == 0));
}

#[test]
fn small_dominance_run_is_clean() {
    let key = StreamKey::root(21);
    let model = random_lazy_chain(3, key).unwrap();
    let obs = random_observable(3, 2, 4, 1.0, &mut key.child(1).rng());
    let cfg = DominanceConfig { n: 200, reps: 5000, grid_points: 10, seed: 5, eps_grid: None };
    let table = dominance_table(&model, &obs, &cfg, &Exec::sequential()).unwrap();
    assert_eq!(table.rows.len(), 10);
    assert!(table.dominated(), "{:?}", table.violations);
    for row in &table.rows {
        assert!(row.ci_lo <= row.p_hat && row.p_hat <= row.ci_hi);
        for b in [row.bound_curv, row.bound_spec, row.bound_olv_pt, row.bound_olv_avg, row.bound_curv_diam].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&b));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn renewal_inequality_on_random_instances(
        seed in any::<u64>(),
        size in 2usize..5,
        n in 1usize..6,
        m in 1usize..3,
        s in 0.0f64..0.1,
        phi_k in 0usize..9,
    ) {
        let key = StreamKey::root(seed);
        let model = random_chain(size, n, key).unwrap();
        let obs = random_observable(size, m, n, 1.0, &mut key.child(1).rng());
        let phi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * phi_k as f64 / 8.0;
        let r = verify_renewal(&model, &obs, s, phi, n).unwrap();
        prop_assert!(r.holds, "a_n = {} > {}", r.lhs, r.rhs);
        prop_assert!(r.close_holds);
    }
}
