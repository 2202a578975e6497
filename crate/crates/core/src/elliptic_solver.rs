//! Picard iteration for `L u = ε F(u)` (nonresonant elliptic case) and for the
//! response problem `Q U = ε N(U)` on T^b × T^d.

use crate::error::{Error, Result};
use crate::expr::ScalarFunctionSpec;
use crate::grid::Grid;
use crate::linear_ops::{
    self, evolution_resonance_scan, inverse_gain, kernel_tolerance, resonance_scan, Classification,
    DiagonalOperator, EllipticOperatorSpec, EvolutionOperatorSpec,
};
use crate::par::{self, Execution};
use crate::spectral_space::{self, apply_nonlinearity, norm, random_field, SpaceParams, SpectralField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub ball_radius: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub space: SpaceParams,
    /// Seed for the Lipschitz sampling behind ε_*.
    pub seed: u64,
}

impl SolveConfig {
    pub fn new(epsilon: f64, ball_radius: f64, space: SpaceParams) -> Self {
        SolveConfig { epsilon, ball_radius, tol: 1e-12, max_iter: 200, space, seed: 0 }
    }

    fn validate(&self, template: &SpectralField) -> Result<()> {
        let floor = spectral_space::regularity_floor(template);
        if self.space.r - 2.0 <= floor {
            return Err(Error::Regularity { r: self.space.r - 2.0, needed: floor });
        }
        if !(self.epsilon >= 0.0) || !(self.ball_radius > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Invalid("need epsilon >= 0, radius > 0, tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub solution: SpectralField,
    /// ‖L u − εF(u)‖_{ρ,r−2}.
    pub residual: f64,
    pub iterations: usize,
    /// Largest observed ratio of successive steps.
    pub contraction_estimate: f64,
    pub epsilon_star: f64,
    /// Set when ε > ε_*: convergence is then observed, not certified.
    pub outside_certified_regime: bool,
    pub steps: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonStar {
    pub value: f64,
    /// ‖L^{−1}‖_{r−2→r} over the box.
    pub gain: f64,
    pub lipschitz: f64,
    pub f0_norm: f64,
}

const LIP_PAIRS: usize = 64;

fn random_in_ball(template: &SpectralField, rng: &mut ChaCha8Rng, s: f64, p: SpaceParams) -> SpectralField {
    let u = random_field(template, rng, p.r + 1.0, p.rho, true);
    let target = s * rng.random_range(0.05..1.0);
    u.scale(target / norm(&u, p).max(f64::MIN_POSITIVE))
}

fn check_invertible<O: DiagonalOperator>(op: &O, template: &SpectralField) -> Result<()> {
    let b = op.freq_dim();
    for i in 0..template.len() {
        let w = template.wave(i);
        let (l, k) = w.split_at(b);
        let ups = op.multiplier(l, k);
        if ups.abs() <= kernel_tolerance(0.0, w) {
            return Err(Error::Resonant(format!("Υ = {ups:e} at mode {w:?}")));
        }
    }
    Ok(())
}

/// ε_* = min{1/(2C Lip F), s/(2C‖F(0)‖_{ρ,r−2})} with C the exact box norm of
/// L^{−1}: H^{ρ,r−2} → H^{ρ,r} and Lip F sampled over 64 seeded pairs in B_s(0).
pub fn epsilon_star_on<O: DiagonalOperator>(
    op: &O,
    f: &ScalarFunctionSpec,
    s: f64,
    space: SpaceParams,
    template: &SpectralField,
    seed: u64,
) -> Result<EpsilonStar> {
    check_invertible(op, template)?;
    let gain = inverse_gain(op, template.lattice());
    let low = space.shifted(-2.0);
    let f0_norm = norm(&apply_nonlinearity(f, &template.zeros_like())?, low);
    let ratios: Vec<Result<f64>> = par::map(LIP_PAIRS, Execution::Auto, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let u1 = random_in_ball(template, &mut rng, s, space);
        let u2 = random_in_ball(template, &mut rng, s, space);
        let num = norm(&apply_nonlinearity(f, &u1)?.sub(&apply_nonlinearity(f, &u2)?)?, low);
        let den = norm(&u1.sub(&u2)?, space);
        Ok(if den > 0.0 { num / den } else { 0.0 })
    });
    let mut lipschitz: f64 = 0.0;
    for r in ratios {
        lipschitz = lipschitz.max(r?);
    }
    let a = if lipschitz > 0.0 { 1.0 / (2.0 * gain * lipschitz) } else { f64::INFINITY };
    let b = if f0_norm > 0.0 { s / (2.0 * gain * f0_norm) } else { f64::INFINITY };
    Ok(EpsilonStar { value: a.min(b), gain, lipschitz, f0_norm })
}

pub fn epsilon_star(
    spec: &EllipticOperatorSpec,
    f: &ScalarFunctionSpec,
    s: f64,
    space: SpaceParams,
    cutoff: usize,
    seed: u64,
) -> Result<EpsilonStar> {
    epsilon_star_on(spec, f, s, space, &SpectralField::zeros(spec.dim(), cutoff), seed)
}

pub fn residual<O: DiagonalOperator>(
    op: &O,
    f: &ScalarFunctionSpec,
    eps: f64,
    u: &SpectralField,
    space: SpaceParams,
) -> Result<f64> {
    let lu = linear_ops::apply(op, u)?;
    let fu = apply_nonlinearity(f, u)?;
    Ok(norm(&lu.lin_comb(1.0, &fu, -eps)?, space.shifted(-2.0)))
}

/// Picard loop from `u0`; stops once the step is below tol·min(1, (1−κ)/κ)
/// and the residual is below tol.
pub fn picard<O: DiagonalOperator>(
    op: &O,
    f: &ScalarFunctionSpec,
    cfg: &SolveConfig,
    u0: SpectralField,
    eps_star: f64,
) -> Result<SolveResult> {
    cfg.validate(&u0)?;
    let p = cfg.space;
    let mut u = u0;
    let mut steps = Vec::new();
    let mut kappa: f64 = 0.0;
    let mut climbing = 0;
    for it in 1..=cfg.max_iter {
        let next = linear_ops::apply_inverse(op, &apply_nonlinearity(f, &u)?, false)?.scale(cfg.epsilon);
        let step = norm(&next.sub(&u)?, p);
        let size = norm(&next, p);
        if size > cfg.ball_radius {
            return Err(Error::BallEscape { norm: size, radius: cfg.ball_radius });
        }
        if let Some(&prev) = steps.last() {
            // ratios of steps at rounding level carry no information
            if prev > 1e-13 * size.max(1e-300) {
                let ratio = step / prev;
                kappa = kappa.max(ratio);
                if ratio >= 1.0 {
                    climbing += 1;
                    if climbing >= 5 {
                        return Err(Error::Divergence { iterations: it, ratio });
                    }
                } else {
                    climbing = 0;
                }
            }
        }
        steps.push(step);
        u = next;
        let threshold = if kappa > 0.0 { cfg.tol * ((1.0 - kappa) / kappa).min(1.0) } else { cfg.tol };
        if step <= threshold && kappa < 1.0 {
            let res = residual(op, f, cfg.epsilon, &u, p)?;
            if res <= cfg.tol {
                return Ok(SolveResult {
                    solution: u,
                    residual: res,
                    iterations: it,
                    contraction_estimate: kappa,
                    epsilon_star: eps_star,
                    outside_certified_regime: cfg.epsilon > eps_star,
                    steps,
                });
            }
        }
    }
    Err(Error::MaxIter(cfg.max_iter))
}

fn elliptic_template(spec: &EllipticOperatorSpec, cutoff: usize) -> Result<SpectralField> {
    let report = resonance_scan(spec, 0.0, cutoff);
    if report.classification == Classification::Resonant {
        return Err(Error::Resonant(format!("kernel modes {:?}", report.kernel_modes)));
    }
    Ok(SpectralField::zeros(spec.dim(), cutoff))
}

pub fn solve_elliptic(
    spec: &EllipticOperatorSpec,
    f: &ScalarFunctionSpec,
    cfg: &SolveConfig,
    cutoff: usize,
) -> Result<SolveResult> {
    let zero = elliptic_template(spec, cutoff)?;
    solve_elliptic_from(spec, f, cfg, zero)
}

/// Same loop from an arbitrary start (uniqueness probes).
pub fn solve_elliptic_from(
    spec: &EllipticOperatorSpec,
    f: &ScalarFunctionSpec,
    cfg: &SolveConfig,
    u0: SpectralField,
) -> Result<SolveResult> {
    cfg.validate(&u0)?;
    let template = elliptic_template(spec, u0.cutoff())?;
    let es = epsilon_star_on(spec, f, cfg.ball_radius, cfg.space, &template, cfg.seed)?;
    picard(spec, f, cfg, u0, es.value)
}

pub fn solve_evolution(
    spec: &EvolutionOperatorSpec,
    f: &ScalarFunctionSpec,
    cfg: &SolveConfig,
    freq_cutoff: usize,
    cutoff: usize,
) -> Result<SolveResult> {
    let report = evolution_resonance_scan(spec, 0.0, freq_cutoff, cutoff);
    match report.classification {
        Classification::EvolutionH1 | Classification::EvolutionH2 => {}
        _ => {
            return Err(Error::Resonant(format!(
                "classified {} (margin {:e}); use the center-manifold reduction",
                report.classification.label(),
                report.margin
            )))
        }
    }
    let zero = SpectralField::zeros_evolution(spec.omega.len(), freq_cutoff, spec.nu.len(), cutoff);
    cfg.validate(&zero)?;
    let es = epsilon_star_on(spec, f, cfg.ball_radius, cfg.space, &zero, cfg.seed)?;
    picard(spec, f, cfg, zero, es.value)
}

/// Random start in B_s(0) for uniqueness probes.
pub fn random_start(template: &SpectralField, s: f64, space: SpaceParams, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_in_ball(template, &mut rng, s, space)
}

/// max over a `points`-per-axis grid of |L u − ε f(x, u, Du, D²u)|, with f
/// evaluated pointwise (no truncation).
pub fn strong_form_residual(
    spec: &EllipticOperatorSpec,
    f: &ScalarFunctionSpec,
    eps: f64,
    u: &SpectralField,
    points: usize,
) -> Result<f64> {
    let grid = Grid::new(vec![points; u.dim()]);
    let env = spectral_space::grid_env(u, &f.vars(), &grid)?;
    let fu = f.expr.eval_vec(grid.len(), &env);
    let lu = grid.to_values(u.lattice(), linear_ops::apply(spec, u)?.coeffs());
    Ok(lu.iter().zip(&fu).map(|(a, b)| (a - b * eps).norm()).fold(0.0, f64::max))
}
