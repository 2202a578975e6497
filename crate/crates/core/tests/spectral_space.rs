use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_galerkin::par::Execution;
use torus_galerkin::spectral_space::*;
use torus_galerkin::stats::loglog_slope;
use torus_galerkin::ScalarFunctionSpec;

fn sp(rho: f64, r: f64) -> SpaceParams {
    SpaceParams::new(rho, r).unwrap()
}

fn rand_field(dim: usize, k: usize, seed: u64, real: bool) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_field(&SpectralField::zeros(dim, k), &mut rng, 2.0, 0.0, real)
}

#[test]
fn norm_of_zero_and_single_mode() {
    assert_eq!(norm(&SpectralField::zeros(2, 4), sp(0.3, 2.0)), 0.0);
    let u = SpectralField::mode(2, 4, &[1, -2], C64::new(1.0, 0.0));
    // |k| = 3 in the ℓ¹ length
    assert!((norm(&u, sp(0.0, 1.5)) - 10f64.powf(0.75)).abs() < 1e-12);
}

#[test]
fn three_term_norm_by_hand() {
    let mut u = SpectralField::zeros(1, 3);
    u.set(&[0], C64::new(1.0, 0.0));
    u.set(&[1], C64::new(0.5, 0.0));
    u.set(&[-1], C64::new(0.5, 0.0));
    let by_hand = (1.0 + 2.0 * 0.25 * (0.2f64).exp() * 4.0).sqrt();
    assert!((norm(&u, sp(0.1, 2.0)) - by_hand).abs() < 1e-14);
}

#[test]
fn parseval_against_grid() {
    for dim in [1, 2] {
        let u = rand_field(dim, 6, 3, true);
        let vals = grid_values(&u, 2 * 13);
        let mean = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() / vals.len() as f64;
        let n = norm(&u, sp(0.0, 0.0));
        assert!((n * n - mean).abs() <= 1e-10 * mean);
    }
}

#[test]
fn constant_is_identity_for_products() {
    let v = rand_field(2, 5, 9, true);
    let one = SpectralField::constant(2, 5, 1.0);
    assert!(multiply(&one, &v).unwrap().max_abs_diff(&v).unwrap() < 1e-14);
}

#[test]
fn wide_product_is_exact_convolution() {
    let u = rand_field(1, 4, 1, false);
    let v = rand_field(1, 4, 2, false);
    let w = multiply_wide(&u, &v).unwrap();
    for k in -8i64..=8 {
        let mut direct = C64::new(0.0, 0.0);
        for a in -4i64..=4 {
            let b = k - a;
            if b.abs() <= 4 {
                direct += u.get(&[a]) * v.get(&[b]);
            }
        }
        assert!((w.get(&[k]) - direct).norm() < 1e-13);
    }
}

#[test]
fn second_derivative_of_exponential() {
    let u = SpectralField::mode(1, 5, &[3], C64::new(1.0, 0.0));
    let d = derivative(&u, 1, 2).unwrap();
    assert!((d.get(&[3]) - C64::new(-9.0, 0.0)).norm() < 1e-15);
    assert_eq!(derivative(&SpectralField::constant(1, 5, 2.0), 1, 1).unwrap().max_abs(), 0.0);
}

#[test]
fn sup_bound_dominates_grid_maximum() {
    for (dim, seed) in [(1, 1u64), (1, 2), (2, 3), (2, 4)] {
        let u = rand_field(dim, 8, seed, true);
        let b = sup_bound(&u, sp(0.0, dim as f64 / 2.0 + 0.5)).unwrap();
        let gmax = grid_values(&u, 64).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(b.bound >= gmax, "{} < {gmax}", b.bound);
        assert!(b.constant > 1.0);
    }
    let c = SpectralField::constant(1, 4, -2.5);
    assert_eq!(sup_bound(&c, sp(0.0, 1.0)).unwrap().bound, 2.5);
    assert!(sup_bound(&c, sp(0.0, 0.5)).is_err());
}

#[test]
fn algebra_constant_stable_under_refinement() {
    for dim in [1, 2] {
        for rho in [0.0, 0.2] {
            let p = sp(rho, dim as f64 / 2.0 + 0.6);
            let c16 = algebra_constant(dim, 16, p, 100, 5, Execution::Auto).unwrap();
            let c32 = algebra_constant(dim, 32, p, 100, 5, Execution::Auto).unwrap();
            assert!(c32.is_finite() && c32 <= 1.1 * c16, "d={dim} rho={rho}: {c16} -> {c32}");
        }
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let p = sp(0.1, 1.1);
    let a = algebra_constant(1, 8, p, 16, 1, Execution::Auto).unwrap();
    let b = algebra_constant(1, 8, p, 16, 1, Execution::Sequential).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn composition_remainder_is_quadratic() {
    let f = ScalarFunctionSpec::parse("sin(u)").unwrap();
    let u = rand_field(1, 8, 11, true).scale(0.1);
    let v = rand_field(1, 8, 12, true).scale(0.1);
    let ts = [0.1, 0.05, 0.025, 0.0125];
    let rem = taylor_remainders(&f, &u, &v, &ts, sp(0.0, 1.0)).unwrap();
    let slope = loglog_slope(&ts, &rem);
    assert!((1.9..=2.1).contains(&slope), "slope {slope}");
}

#[test]
fn nonlinearity_matches_product_and_identity() {
    let u = SpectralField::cos_mode(1, 6, &[1], 1.0);
    let sq = apply_nonlinearity(&ScalarFunctionSpec::parse("u^2").unwrap(), &u).unwrap();
    assert!(sq.max_abs_diff(&multiply(&u, &u).unwrap()).unwrap() < 1e-15);
    let w = rand_field(2, 4, 2, true);
    let id = apply_nonlinearity(&ScalarFunctionSpec::parse("u").unwrap(), &w).unwrap();
    assert!(id.max_abs_diff(&w).unwrap() < 1e-14);
}

#[test]
fn evolution_norms_are_equivalent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_field(&SpectralField::zeros_evolution(1, 6, 1, 6), &mut rng, 1.0, 0.0, true);
    let p = sp(0.1, 1.5);
    let (a, b) = (norm(&u, p), norm_combined(&u, p));
    // (1+|l|²+|k|²) ≤ (1+|l|²)(1+|k|²) ≤ (1+|l|²+|k|²)²
    assert!(b <= a * (1.0 + 1e-12));
    assert!(a <= norm_combined(&u, sp(0.1, 3.0)) * (1.0 + 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn products_of_real_fields_are_real(seed in 0u64..1000, dim in 1usize..3, k in 0usize..6) {
        let u = rand_field(dim, k, seed, true);
        let v = rand_field(dim, k, seed + 7, true);
        let w = multiply(&u, &v).unwrap();
        prop_assert!(w.is_real());
        prop_assert!(w.reality_defect() <= 1e-12 * (1.0 + w.max_abs()));
        let f = ScalarFunctionSpec::parse("exp(u)*cos(x)").unwrap();
        let g = apply_nonlinearity(&f, &u.scale(0.2)).unwrap();
        prop_assert!(g.reality_defect() <= 1e-12 * (1.0 + g.max_abs()));
    }

    #[test]
    fn product_is_commutative(seed in 0u64..1000, k in 0usize..8) {
        let u = rand_field(1, k, seed, false);
        let v = rand_field(1, k, seed + 1, false);
        let a = multiply(&u, &v).unwrap();
        let b = multiply(&v, &u).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-13 * (1.0 + a.max_abs()));
    }

    #[test]
    fn norm_is_homogeneous(seed in 0u64..1000, s in -5.0f64..5.0, rho in 0.0f64..0.5, r in 0.0f64..3.0) {
        let u = rand_field(2, 3, seed, true);
        let p = sp(rho, r);
        prop_assert!((norm(&u.scale(s), p) - s.abs() * norm(&u, p)).abs() <= 1e-12 * (1.0 + norm(&u, p)));
    }

    #[test]
    fn sup_bound_is_sound(seed in 0u64..1000, dim in 1usize..3) {
        let u = rand_field(dim, 5, seed, true);
        let b = sup_bound(&u, sp(0.0, dim as f64)).unwrap().bound;
        let gmax = grid_values(&u, 33).iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!(b >= gmax);
    }

    #[test]
    fn nested_fields_extend_consistently(seed in 0u64..1000, k in 1usize..6) {
        let small = nested_random_field(&SpectralField::zeros(2, k), seed, 3, 2.0, 0.1);
        let big = nested_random_field(&SpectralField::zeros(2, k + 2), seed, 3, 2.0, 0.1);
        prop_assert_eq!(big.with_cutoff(k), small.clone());
        prop_assert!(small.reality_defect() == 0.0);
    }

    #[test]
    fn text_roundtrip_is_exact(seed in 0u64..1000, dim in 1usize..3, rho in 0.0f64..1.0) {
        let u = rand_field(dim, 3, seed, seed % 2 == 0);
        let mut buf = Vec::new();
        write_field(&mut buf, &u, sp(rho, 2.0)).unwrap();
        let (v, p) = read_field(&buf[..]).unwrap();
        prop_assert_eq!(&u, &v);
        prop_assert_eq!(p.rho.to_bits(), rho.to_bits());
    }
}
