use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_galerkin::center_manifold::*;
use torus_galerkin::linear_ops::{EllipticOperatorSpec, EvolutionOperatorSpec};
use torus_galerkin::spectral_space::{random_field, SpectralField};
use torus_galerkin::stats::loglog_slope;
use torus_galerkin::{Error, ScalarFunctionSpec, SpaceParams};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn system() -> FirstOrderSystem {
    assemble_system(&EllipticOperatorSpec::new(vec![1.0], 2.0), 4)
}

fn problem(f: &str, m: f64, eps: f64, cutoff: usize, quad: QuadratureConfig) -> torus_galerkin::Result<ManifoldProblem> {
    let spec = EvolutionOperatorSpec::new(vec![1.37], vec![1.0], m);
    let f = ScalarFunctionSpec::parse(f).unwrap();
    ManifoldProblem::new(&spec, &f, eps, cutoff, SplitPolicy::default(), quad, prepare_cutoff(3, 4.0).unwrap())
}

fn random_state(seed: u64) -> FirstOrderState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = SpectralField::zeros(1, 4);
    FirstOrderState::new(random_field(&t, &mut rng, 1.0, 0.0, true), random_field(&t, &mut rng, 1.0, 0.0, true)).unwrap()
}

#[test]
fn eigenvalues_and_eigenvectors() {
    let s = system();
    let i1 = s.lattice().index(&[1]).unwrap();
    let i2 = s.lattice().index(&[2]).unwrap();
    assert!((s.eigenvalue(i1, 1) - C64::new(0.0, 1.0)).norm() < 1e-15);
    assert!((s.eigenvalue(i1, -1) - C64::new(0.0, -1.0)).norm() < 1e-15);
    assert!((s.eigenvalue(i2, 1).re - SQRT2).abs() < 1e-15);
    assert!((s.eigenvalue(i2, -1).re + SQRT2).abs() < 1e-15);
    for idx in [i1, i2] {
        for sign in [1i8, -1] {
            let [a, b] = s.eigenvector(idx, sign);
            let blk = s.block(idx);
            let lam = s.eigenvalue(idx, sign);
            let av = [a * blk[0][0] + b * blk[0][1], a * blk[1][0] + b * blk[1][1]];
            assert!((av[0] - lam * a).norm() < 1e-14 && (av[1] - lam * b).norm() < 1e-14);
        }
    }
    assert_eq!(s.rotation_form(i1), Some([[0.0, 1.0], [-1.0, 0.0]]));
    assert_eq!(s.rotation_form(i2), None);
}

#[test]
fn splitting_covers_the_box() {
    let s = system();
    let sp = split_spectrum(&s, SplitPolicy::default()).unwrap();
    let total = sp.center_modes.len() + sp.stable_modes.len() + sp.unstable_modes.len();
    assert_eq!(total, 2 * s.lattice().len());
    let mut center: Vec<i64> = sp.center_modes.iter().map(|(k, _)| k[0]).collect();
    center.dedup();
    assert_eq!(center, vec![-1, 0, 1]);
    assert_eq!(sp.center_dim(), 6);
    assert!((sp.beta1 - SQRT2).abs() < 1e-15 && (sp.beta2 - SQRT2).abs() < 1e-15);
    let z = random_state(3);
    let mut sum = sp.project(Block::Stable, &z);
    for b in [Block::Center, Block::Unstable] {
        let p = sp.project(b, &z);
        sum = FirstOrderState::new(sum.u.add(&p.u).unwrap(), sum.v.add(&p.v).unwrap()).unwrap();
    }
    assert!(sum.sub(&z).unwrap().u.max_abs() < 1e-14 && sum.sub(&z).unwrap().v.max_abs() < 1e-14);
}

#[test]
fn semigroup_rate_inequalities() {
    let sp = split_spectrum(&system(), SplitPolicy::default()).unwrap();
    let space = SpaceParams::new(0.0, 3.0).unwrap();
    for seed in 0..5 {
        let z = random_state(seed);
        for i in 0..=40 {
            let t = 0.1 * i as f64;
            let zs = sp.project(Block::Stable, &z);
            let s = sp.x_norm(&semigroup_apply(&sp, Block::Stable, t, &z).unwrap(), space);
            assert!(s <= (-sp.beta1 * t).exp() * sp.x_norm(&zs, space) * (1.0 + 1e-12));
            let zu = sp.project(Block::Unstable, &z);
            let u = sp.x_norm(&semigroup_apply(&sp, Block::Unstable, -t, &z).unwrap(), space);
            assert!(u <= (-sp.beta2 * t).exp() * sp.x_norm(&zu, space) * (1.0 + 1e-12));
            let zc = sp.project(Block::Center, &z);
            for tc in [t, -t] {
                let c = sp.x_norm(&semigroup_apply(&sp, Block::Center, tc, &z).unwrap(), space);
                assert!(c <= (sp.beta3_minus.max(sp.beta3_plus) * t).exp() * sp.x_norm(&zc, space) * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn stable_mode_decays_at_its_rate() {
    let sp = split_spectrum(&system(), SplitPolicy::default()).unwrap();
    let idx = sp.system.lattice().index(&[2]).unwrap();
    let uv = sp.from_coords(idx, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let mut z = FirstOrderState::zeros(1, 4);
    z.u.set(&[2], uv[0]);
    z.v.set(&[2], uv[1]);
    z.u.mark_complex();
    z.v.mark_complex();
    let out = semigroup_apply(&sp, Block::Stable, 1.0, &z).unwrap();
    assert!((out.u.get(&[2]).norm() - (-SQRT2).exp()).abs() < 1e-14);
    assert!(matches!(semigroup_apply(&sp, Block::Stable, -0.5, &z), Err(Error::WrongTimeSign(_))));
    assert!(matches!(semigroup_apply(&sp, Block::Unstable, 0.5, &z), Err(Error::WrongTimeSign(_))));
}

#[test]
fn cutoff_plateaus_and_is_smooth() {
    let phi = prepare_cutoff(3, 2.0).unwrap();
    assert_eq!(phi.eval(0.0), 1.0);
    assert_eq!(phi.eval(1.0), 1.0);
    assert_eq!(phi.eval(2.0), 0.0);
    assert_eq!(phi.eval(5.0), 0.0);
    let mut prev = 1.0;
    for i in 0..=100 {
        let v = phi.eval(1.0 + 0.01 * i as f64);
        assert!(v <= prev + 1e-15);
        prev = v;
    }
    // third-order contact: φ(1+h) − 1 = O(h⁴)
    let h = 1e-2;
    assert!((1.0 - phi.eval(1.0 + h)) < 100.0 * h.powi(4));
    assert!(phi.eval(2.0 - h) < 100.0 * h.powi(4));
    assert!(prepare_cutoff(3, 0.0).is_err());
}

#[test]
fn zero_epsilon_gives_zero_jet() {
    let p = problem("u^2 + cos(theta)*cos(x)", 2.0, 0.0, 3, QuadratureConfig::default()).unwrap();
    let sol = solve_manifold(&p, 1e-13, 10).unwrap();
    assert!(sol.jet.is_zero());
    // the reduced flow is then linear: each center coordinate rotates
    let zc: Vec<C64> = (0..p.center_dim()).map(|i| C64::new(0.01 * (i + 1) as f64, 0.0)).collect();
    let rhs = reduced_ode_rhs(&p, &sol.jet, &[0.3], &zc);
    let back = p.center_coords(&p.center_physical(&zc));
    assert!(back.iter().zip(&zc).all(|(a, b)| (a - b).norm() < 1e-15));
    // |λ| is 1 for k = ±1 and √2 for k = 0
    for (r, z) in rhs.iter().zip(&zc) {
        let rate = r.norm() / z.norm();
        assert!((rate - 1.0).abs() < 1e-12 || (rate - SQRT2).abs() < 1e-12, "{rate}");
    }
    let traj = reduced_trajectory(&p, &sol.jet, &[0.0], &zc, 0.01, 100);
    let n0: f64 = zc.iter().map(|c| c.norm_sqr()).sum();
    let n1: f64 = traj.last().unwrap().2.iter().map(|c| c.norm_sqr()).sum();
    assert!((n0 - n1).abs() < 1e-12);
}

#[test]
fn forced_response_matches_closed_form() {
    let eps = 1e-3;
    let p = problem("cos(theta)*cos(x)", 0.5, eps, 3, QuadratureConfig::default()).unwrap();
    let sol = solve_manifold(&p, 1e-13, 10).unwrap();
    // (l,k) = (1,1): û = −ε ĝ/(ω² + q) with ĝ = 1/4, q = k² − m
    let (q, s, w) = (0.5f64, 0.5f64.sqrt(), 1.37);
    let c = -eps * 0.25 / (w * w + q);
    let v = C64::new(0.0, w) * c;
    let xp = (v + s * c) / (2.0 * s);
    let xm = (C64::new(s, 0.0) * c - v) / (2.0 * s);
    let j = p.hyperbolic_waves().iter().position(|k| k[0] == 1).unwrap();
    let li = sol.jet.theta_lattice.index(&[1]).unwrap();
    let m0 = sol.jet.modes[li].mono(0);
    assert!((m0[2 * j] - xp).norm() < 1e-10 * xp.norm());
    assert!((m0[2 * j + 1] - xm).norm() < 1e-10 * xm.norm());
}

#[test]
fn main_case_contracts_and_is_invariant() {
    let p = problem("u^2 + cos(theta)*cos(x)", 2.0, 1e-3, 4, QuadratureConfig::default()).unwrap();
    assert_eq!(p.center_dim(), 6);
    let sol = solve_manifold(&p, 1e-13, 10).unwrap();
    assert!(sol.converged);
    assert!(sol.contraction < 0.5, "κ = {}", sol.contraction);
    let a = ManifoldJet::random(&p, 1e-3, 1);
    let b = ManifoldJet::random(&p, 1e-3, 2);
    assert!(contraction_ratio(&p, &a, &b).unwrap() < 0.5);
    let radii = [0.2, 0.4, 0.8];
    let res: Vec<f64> = radii
        .iter()
        .map(|&r| invariance_residual(&p, &sol.jet, &InvarianceConfig { radius: r, ..Default::default() }).unwrap())
        .collect();
    assert!(loglog_slope(&radii, &res) >= 2.8, "{res:?}");
    let zero = invariance_residual(&p, &ManifoldJet::zeros(&p), &InvarianceConfig::default()).unwrap();
    assert!(res[0] < 1e-3 * zero);
    let cfg = InvarianceConfig { radius: 2.5, ..Default::default() };
    assert!(invariance_residual(&p, &sol.jet, &cfg).is_err());
    let mut buf = Vec::new();
    write_jet(&mut buf, &p, &sol.jet).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("# freq_dim=1 dim=1"));
}

#[test]
fn rejects_unsupported_inputs() {
    assert!(matches!(problem("u_xx", 2.0, 1e-3, 3, QuadratureConfig::default()), Err(Error::Invalid(_))));
    let quad = QuadratureConfig { theta_modes: 2, ..Default::default() };
    assert!(matches!(problem("u^2 + cos(5*theta)", 2.0, 1e-3, 3, quad), Err(Error::ThetaTruncation(2))));
    // every mode of a small box is oscillatory when m is large
    assert!(matches!(problem("u^2", 30.0, 1e-3, 3, QuadratureConfig::default()), Err(Error::EmptyHyperbolic)));
}
