use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torus_galerkin::bifurcation::*;
use torus_galerkin::Error;

fn basis2() -> KernelBasis {
    kernel_basis(&[1.0, 2f64.sqrt()], 3.0, 6).unwrap()
}

#[test]
fn kernel_orbit_order() {
    let b = basis2();
    assert_eq!(b.modes, vec![vec![1, 1], vec![1, -1], vec![-1, 1], vec![-1, -1]]);
    for j in 0..4 {
        let neg: Vec<i64> = b.modes[j].iter().map(|x| -x).collect();
        assert_eq!(b.modes[3 - j], neg);
    }
}

#[test]
fn coefficients_exact() {
    let data = bifurcation_coefficients(&basis2()).unwrap();
    assert!((data.a - 10.0 / 9.0).abs() < 1e-12);
    assert!((data.b + 52.0 / 15.0).abs() < 1e-12);
    assert_eq!(data.sigma, -1.0);
}

#[test]
fn branch_amplitude_matches_leading_order() {
    let b = basis2();
    let data = bifurcation_coefficients(&b).unwrap();
    let cfg = BranchConfig::default();
    for eps_m in [-1e-3, -3e-4, -1e-4] {
        let r = branch_solve(&b, eps_m, &[0.3, -1.1], &cfg).unwrap();
        assert!(r.residual <= 1e-12);
        for z in &r.z {
            let ratio = z / eps_m * (data.a + data.b);
            assert!((ratio - 1.0).abs() < 0.05, "eps_m={eps_m} ratio={ratio}");
        }
    }
}

#[test]
fn opposite_sign_runs_collapse() {
    let b = basis2();
    let data = bifurcation_coefficients(&b).unwrap();
    let flipped = BifurcationData { a: -data.a, b: -data.b, sigma: -data.sigma, ..data.clone() };
    let eps_m = 1e-3;
    assert!(matches!(leading_amplitudes(&b, &data, eps_m, &[0.0, 0.0]), Err(Error::WrongSign { .. })));
    let cfg = BranchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut collapsed = 0;
    for _ in 0..10 {
        let phase = [rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)];
        let alpha = leading_amplitudes(&b, &flipped, eps_m, &phase).unwrap();
        let seed = seed_from_alpha(&b, &alpha, eps_m, &cfg).unwrap();
        if matches!(newton_refine(&b, eps_m, seed, &cfg), Err(Error::Collapse(_))) {
            collapsed += 1;
        }
    }
    assert_eq!(collapsed, 10);
}

#[test]
fn residual_invariant_under_translation() {
    let b = basis2();
    let r = branch_solve(&b, -1e-3, &[0.0, 0.0], &BranchConfig::default()).unwrap();
    let base = residual_norm(&b, -1e-3, &r.v).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let shift = [rng.random_range(0.0..6.3), rng.random_range(0.0..6.3)];
        let moved = residual_norm(&b, -1e-3, &r.v.translate(&shift)).unwrap();
        assert!((moved - base).abs() <= 1e-12);
    }
}

#[test]
fn one_dimensional_constant_is_flagged() {
    let b = kernel_basis(&[1.0], 1.0, 8).unwrap();
    let rep = branch_verify(&b, 4).unwrap();
    // M = 2/Υ(2) + 4/Υ(0) = 2/(−3) + 4 = 10/3
    assert!((rep.extracted_a - 10.0 / 3.0).abs() < 1e-12);
    assert!((rep.closed_form.a - 10.0 / 3.0).abs() < 1e-12);
    assert_eq!(rep.printed_m, Some(5.0 / 3.0));
    assert!(rep.discrepancy_flag);
    assert!(rep.text.contains("M_discrepancy = FLAGGED"));
}

#[test]
fn expansion_structure_to_degree_four() {
    let rep = branch_verify(&basis2(), 4).unwrap();
    assert!(rep.even_max < 1e-12);
    assert!(rep.factorization_holds);
    assert!((rep.extracted_a - 10.0 / 9.0).abs() < 1e-12);
    assert!((rep.extracted_b + 52.0 / 15.0).abs() < 1e-12);
}

#[test]
fn rejects_dimension_three_and_nonresonant() {
    assert!(matches!(kernel_basis(&[1.0, 1.0, 1.0], 3.0, 4), Err(Error::Invalid(_))));
    assert!(matches!(kernel_basis(&[1.0], 3.0, 8), Err(Error::KernelAssumption(_))));
}

#[test]
fn range_solve_rejects_large_amplitude() {
    let b = basis2();
    let alpha = vec![num_complex::Complex64::new(10.0, 0.0); 4];
    assert!(matches!(solve_range(&b, &alpha, -1e-3, 1e-14, 16), Err(Error::AlphaTooLarge(_))));
}
