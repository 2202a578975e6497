use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_galerkin::lattice::Lattice;
use torus_galerkin::linear_ops::*;
use torus_galerkin::par::Execution;
use torus_galerkin::spectral_space::{random_field, SpectralField};
use torus_galerkin::stats::loglog_slope;

#[test]
fn eigenvalue_examples() {
    assert_eq!(eigenvalue(&[0], &EllipticOperatorSpec::new(vec![1.0], 1.0)), 1.0);
    assert_eq!(eigenvalue(&[-1], &EllipticOperatorSpec::new(vec![1.0], 1.0)), 0.0);
    let s = EllipticOperatorSpec::new(vec![1.0, 2f64.sqrt()], 3.0);
    assert!(eigenvalue(&[1, 1], &s).abs() < 1e-14);
    let e = EvolutionOperatorSpec::new(vec![1.5], vec![1.0, 1.2], 2.0);
    let direct = -(1.5f64 * 2.0).powi(2) - 1.0 - 1.44 * 4.0 + 2.0;
    assert!((evolution_eigenvalue(&[2], &[1, -2], &e) - direct).abs() < 1e-14);
}

#[test]
fn resonant_kernel_is_the_sign_orbit() {
    let s = EllipticOperatorSpec::new(vec![1.0, 2f64.sqrt()], 3.0);
    let r = resonance_scan(&s, 0.0, 6);
    let mut k = r.kernel_modes.clone();
    k.sort();
    assert_eq!(k, vec![vec![-1, -1], vec![-1, 1], vec![1, -1], vec![1, 1]]);
    assert_eq!(r.classification, Classification::Resonant);
    assert!(r.to_kv().contains("kernel_size = 4"));
}

#[test]
fn nonresonant_margin_matches_direct_minimum() {
    let s = EllipticOperatorSpec::new(vec![1.3, 1.7], 2.2);
    let r = resonance_scan(&s, 0.0, 5);
    let mut direct = f64::INFINITY;
    for a in -5i64..=5 {
        for b in -5i64..=5 {
            direct = direct.min((2.2 - 1.69 * (a * a) as f64 - 2.89 * (b * b) as f64).abs());
        }
    }
    assert!(matches!(r.classification, Classification::Nonresonant(m) if (m - direct).abs() < 1e-14));
    assert!((r.margin - direct).abs() < 1e-14);
}

#[test]
fn inverse_undoes_operator() {
    let s = EllipticOperatorSpec::new(vec![1.3], 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_field(&SpectralField::zeros(1, 10), &mut rng, 1.0, 0.0, true);
    let back = apply_inverse(&s, &apply(&s, &u).unwrap(), false).unwrap();
    assert!(back.max_abs_diff(&u).unwrap() < 1e-13);
    let res = EllipticOperatorSpec::new(vec![1.0], 1.0);
    assert!(apply_inverse(&res, &u, false).is_err());
}

#[test]
fn operator_norms_by_direct_maximum() {
    let s = EllipticOperatorSpec::new(vec![1.3], 1.0);
    let lat = Lattice::cube(1, 8);
    let by_hand_inv = (-8i64..=8).map(|k| 1.0 / (1.0 - 1.69 * (k * k) as f64).abs()).fold(0.0, f64::max);
    let by_hand_op = (-8i64..=8).map(|k| (1.0 - 1.69 * (k * k) as f64).abs()).fold(0.0, f64::max);
    assert!((inverse_norm(&s, &lat) - by_hand_inv).abs() < 1e-14);
    assert!((operator_norm(&s, &lat) - by_hand_op).abs() < 1e-12);
}

#[test]
fn evolution_classification() {
    let h1 = EvolutionOperatorSpec::new(vec![1.37], vec![1.0], -1.0);
    assert_eq!(evolution_resonance_scan(&h1, 0.0, 4, 4).classification, Classification::EvolutionH1);
    let h2 = EvolutionOperatorSpec::new(vec![1.37], vec![1.0], 0.5);
    assert_eq!(evolution_resonance_scan(&h2, 0.0, 4, 4).classification, Classification::EvolutionH2);
    let c = EvolutionOperatorSpec::new(vec![1.0], vec![1.0], 2.0);
    let r = evolution_resonance_scan(&c, 0.0, 4, 4);
    assert_eq!(r.classification, Classification::EvolutionCenter);
    assert!(r.kernel_modes.contains(&vec![1, 1]));
}

#[test]
fn excluded_measure_scales_linearly() {
    for d in [1, 2] {
        let deltas = [1e-1, 3e-2, 1e-2];
        let est: Vec<MeasureEstimate> =
            deltas.iter().map(|&dl| excluded_measure_estimate(d, 5.0, dl, 8, 100_000, 7)).collect();
        for e in &est {
            assert!(e.monte_carlo <= e.analytic_bound + 3.0 * e.stderr, "d={d}: {e:?}");
        }
        let slope = loglog_slope(&deltas, &est.iter().map(|e| e.monte_carlo).collect::<Vec<_>>());
        assert!((0.9..=1.1).contains(&slope), "d={d} slope {slope}");
    }
}

#[test]
fn measure_estimate_independent_of_execution() {
    let a = excluded_measure_estimate_with(2, 5.0, 0.05, 8, 20_000, 3, Execution::Auto);
    let b = excluded_measure_estimate_with(2, 5.0, 0.05, 8, 20_000, 3, Execution::Sequential);
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_closed_under_sign_flips(n1 in 1.0f64..2.0, n2 in 1.0f64..2.0, a in 0i64..4, b in 0i64..4) {
        // put (a,b) on the kernel by construction
        let m = n1 * n1 * (a * a) as f64 + n2 * n2 * (b * b) as f64;
        let r = resonance_scan(&EllipticOperatorSpec::new(vec![n1, n2], m), 0.0, 5);
        for k in &r.kernel_modes {
            for flip in [[-1, 1], [1, -1], [-1, -1]] {
                let f = vec![k[0] * flip[0], k[1] * flip[1]];
                prop_assert!(r.kernel_modes.contains(&f));
            }
        }
        prop_assert!(r.kernel_modes.contains(&vec![a, b]));
    }

    #[test]
    fn inverse_is_left_inverse_off_kernel(nu in 1.0f64..2.0, m in -3.0f64..3.0, seed in 0u64..500) {
        let s = EllipticOperatorSpec::new(vec![nu], m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&SpectralField::zeros(1, 6), &mut rng, 1.0, 0.0, true);
        let lu = apply(&s, &u).unwrap();
        let back = apply_inverse(&s, &lu, true).unwrap();
        for i in 0..u.len() {
            let k = u.wave(i).to_vec();
            let ups = eigenvalue(&k, &s);
            if ups.abs() > kernel_tolerance(0.0, &k) {
                prop_assert!((back.get(&k) - u.get(&k)).norm() <= 1e-12 * (1.0 + u.get(&k).norm()));
            } else {
                prop_assert_eq!(back.get(&k), C64::new(0.0, 0.0));
            }
        }
    }
}
