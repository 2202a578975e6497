//! Diagonal operators L_{ν,m} = Σν_i²∂_i² + m and Q_{ω,ν,m}, their inverses,
//! resonance scans and the excluded-parameter measure estimate.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::par::{self, Execution};
use crate::spectral_space::{SpaceParams, SpectralField};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticOperatorSpec {
    pub nu: Vec<f64>,
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionOperatorSpec {
    pub omega: Vec<f64>,
    pub nu: Vec<f64>,
    pub m: f64,
}

impl EllipticOperatorSpec {
    pub fn new(nu: Vec<f64>, m: f64) -> Self {
        EllipticOperatorSpec { nu, m }
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }
}

impl EvolutionOperatorSpec {
    pub fn new(omega: Vec<f64>, nu: Vec<f64>, m: f64) -> Self {
        EvolutionOperatorSpec { omega, nu, m }
    }

    pub fn elliptic(&self) -> EllipticOperatorSpec {
        EllipticOperatorSpec { nu: self.nu.clone(), m: self.m }
    }
}

/// Υ_k = −Σ ν_i² k_i² + m.
pub fn eigenvalue(k: &[i64], spec: &EllipticOperatorSpec) -> f64 {
    spec.m - k.iter().zip(&spec.nu).map(|(&ki, &n)| n * n * (ki * ki) as f64).sum::<f64>()
}

/// Υ_{l,k} = −⟨ω,l⟩² − Σ ν_i² k_i² + m.
pub fn evolution_eigenvalue(l: &[i64], k: &[i64], spec: &EvolutionOperatorSpec) -> f64 {
    let wl: f64 = l.iter().zip(&spec.omega).map(|(&li, &w)| li as f64 * w).sum();
    eigenvalue(k, &spec.elliptic()) - wl * wl
}

/// An operator that is diagonal on Fourier modes.
pub trait DiagonalOperator {
    fn freq_dim(&self) -> usize;
    fn dim(&self) -> usize;
    fn multiplier(&self, l: &[i64], k: &[i64]) -> f64;
}

impl DiagonalOperator for EllipticOperatorSpec {
    fn freq_dim(&self) -> usize {
        0
    }
    fn dim(&self) -> usize {
        self.nu.len()
    }
    fn multiplier(&self, _l: &[i64], k: &[i64]) -> f64 {
        eigenvalue(k, self)
    }
}

impl DiagonalOperator for EvolutionOperatorSpec {
    fn freq_dim(&self) -> usize {
        self.omega.len()
    }
    fn dim(&self) -> usize {
        self.nu.len()
    }
    fn multiplier(&self, l: &[i64], k: &[i64]) -> f64 {
        evolution_eigenvalue(l, k, self)
    }
}

fn sq_len(k: &[i64]) -> f64 {
    let s: f64 = k.iter().map(|x| x.unsigned_abs() as f64).sum();
    s * s
}

/// |Υ| ≤ max(δ, 1e−9(1+|k|²)) counts as kernel.
pub fn kernel_tolerance(delta: f64, wave: &[i64]) -> f64 {
    delta.max(1e-9 * (1.0 + sq_len(wave)))
}

fn check_op<O: DiagonalOperator>(op: &O, u: &SpectralField) -> Result<()> {
    if op.dim() != u.dim() || op.freq_dim() != u.freq_dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator acts on ({}, {}) axes, field has ({}, {})",
            op.freq_dim(),
            op.dim(),
            u.freq_dim(),
            u.dim()
        )));
    }
    Ok(())
}

pub fn apply<O: DiagonalOperator>(op: &O, u: &SpectralField) -> Result<SpectralField> {
    check_op(op, u)?;
    Ok(u.map_coeffs(
        |i, c| {
            let (l, k) = u.split_wave(i);
            c * op.multiplier(l, k)
        },
        u.is_real(),
    ))
}

pub fn apply_inverse<O: DiagonalOperator>(op: &O, u: &SpectralField, exclude_kernel: bool) -> Result<SpectralField> {
    apply_inverse_tol(op, u, exclude_kernel, 0.0)
}

/// Divide by Υ; kernel modes (per `kernel_tolerance(delta, ·)`) are zeroed when
/// `exclude_kernel`, otherwise they are an error.
pub fn apply_inverse_tol<O: DiagonalOperator>(
    op: &O,
    u: &SpectralField,
    exclude_kernel: bool,
    delta: f64,
) -> Result<SpectralField> {
    check_op(op, u)?;
    let mut out = u.clone();
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        let (l, k) = u.split_wave(i);
        let ups = op.multiplier(l, k);
        if ups.abs() <= kernel_tolerance(delta, u.wave(i)) {
            if exclude_kernel {
                *c = C64::new(0.0, 0.0);
            } else {
                return Err(Error::ZeroMultiplier { mode: u.wave(i).to_vec(), value: ups });
            }
        } else {
            *c /= ups;
        }
    }
    Ok(out)
}

/// sup over the box of |Υ| (the operator norm on every H^{ρ,r}).
pub fn operator_norm<O: DiagonalOperator>(op: &O, lattice: &Lattice) -> f64 {
    let b = op.freq_dim();
    (0..lattice.len())
        .map(|i| {
            let (l, k) = lattice.wave(i).split_at(b);
            op.multiplier(l, k).abs()
        })
        .fold(0.0, f64::max)
}

/// ‖L^{−1}‖_{r→r} = 1 / min |Υ| over non-kernel modes.
pub fn inverse_norm<O: DiagonalOperator>(op: &O, lattice: &Lattice) -> f64 {
    let b = op.freq_dim();
    let min = (0..lattice.len())
        .filter_map(|i| {
            let w = lattice.wave(i);
            let (l, k) = w.split_at(b);
            let ups = op.multiplier(l, k).abs();
            (ups > kernel_tolerance(0.0, w)).then_some(ups)
        })
        .fold(f64::INFINITY, f64::min);
    1.0 / min
}

/// ‖L^{−1}‖_{r−2→r} over the box: sup of sqrt(w_r/w_{r−2}) / |Υ|. This is the
/// exact norm of the truncated diagonal inverse.
pub fn inverse_gain<O: DiagonalOperator>(op: &O, lattice: &Lattice) -> f64 {
    let b = op.freq_dim();
    let probe = SpectralField::on_lattice(lattice.clone(), b);
    let unit = SpaceParams { rho: 0.0, r: 1.0 };
    (0..lattice.len())
        .filter_map(|i| {
            let w = lattice.wave(i);
            let (l, k) = w.split_at(b);
            let ups = op.multiplier(l, k).abs();
            (ups > kernel_tolerance(0.0, w)).then(|| probe.weight(i, unit) / ups)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classification {
    Nonresonant(f64),
    Resonant,
    EvolutionH1,
    EvolutionH2,
    EvolutionCenter,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Nonresonant(_) => "nonresonant",
            Classification::Resonant => "resonant",
            Classification::EvolutionH1 => "evolution-H1",
            Classification::EvolutionH2 => "evolution-H2",
            Classification::EvolutionCenter => "evolution-center",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceReport {
    pub kernel_modes: Vec<Vec<i64>>,
    pub margin: f64,
    pub classification: Classification,
    pub delta: f64,
    pub kmax: usize,
}

impl ResonanceReport {
    /// Flat `key = value` block.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classification = {}", self.classification.label());
        if let Classification::Nonresonant(d) = self.classification {
            let _ = writeln!(s, "nonresonant_delta = {d:.16e}");
        }
        let _ = writeln!(s, "margin = {:.16e}", self.margin);
        let _ = writeln!(s, "delta = {:.16e}", self.delta);
        let _ = writeln!(s, "kmax = {}", self.kmax);
        let _ = writeln!(s, "kernel_size = {}", self.kernel_modes.len());
        let modes: Vec<String> = self
            .kernel_modes
            .iter()
            .map(|k| format!("({})", k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        let _ = writeln!(s, "kernel_modes = {}", modes.join(" "));
        s
    }

    pub fn is_resonant(&self) -> bool {
        !self.kernel_modes.is_empty()
    }
}

fn sign_flip_closed(modes: &[Vec<i64>]) -> bool {
    modes.iter().all(|k| {
        (0..k.len()).all(|a| {
            let mut f = k.clone();
            f[a] = -f[a];
            modes.contains(&f)
        })
    })
}

fn scan<O: DiagonalOperator>(op: &O, lattice: &Lattice, delta: f64) -> (Vec<Vec<i64>>, f64) {
    let b = op.freq_dim();
    let mut kernel = Vec::new();
    let mut margin = f64::INFINITY;
    for i in 0..lattice.len() {
        let w = lattice.wave(i);
        let (l, k) = w.split_at(b);
        let ups = op.multiplier(l, k).abs();
        if ups <= kernel_tolerance(delta, w) {
            kernel.push(w.to_vec());
        } else {
            margin = margin.min(ups);
        }
    }
    (kernel, margin)
}

pub fn resonance_scan(spec: &EllipticOperatorSpec, delta: f64, kmax: usize) -> ResonanceReport {
    let lattice = Lattice::cube(spec.dim(), kmax);
    let (kernel, margin) = scan(spec, &lattice, delta);
    debug_assert!(sign_flip_closed(&kernel));
    let classification =
        if kernel.is_empty() { Classification::Nonresonant(margin) } else { Classification::Resonant };
    ResonanceReport { kernel_modes: kernel, margin, classification, delta, kmax }
}

/// Scan over |l_j| ≤ lmax, |k_i| ≤ kmax and decide H1 / H2 / center:
/// H1 when −Σν²k²+m < 0 for every k (i.e. m < 0); H2 when b = 1 and no
/// (l,k) mode is within the kernel tolerance; center otherwise.
pub fn evolution_resonance_scan(spec: &EvolutionOperatorSpec, delta: f64, lmax: usize, kmax: usize) -> ResonanceReport {
    let mut cut = vec![lmax; spec.omega.len()];
    cut.extend(std::iter::repeat(kmax).take(spec.nu.len()));
    let lattice = Lattice::new(cut);
    let (kernel, margin) = scan(spec, &lattice, delta);
    let h1 = spec.m < 0.0;
    let classification = if h1 && kernel.is_empty() {
        Classification::EvolutionH1
    } else if spec.omega.len() == 1 && kernel.is_empty() {
        Classification::EvolutionH2
    } else {
        Classification::EvolutionCenter
    };
    ResonanceReport { kernel_modes: kernel, margin, classification, delta, kmax }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureEstimate {
    pub delta: f64,
    pub analytic_bound: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    /// Orthant representatives k of the shells that can meet [1,2]^d.
    pub shells: Vec<Vec<i64>>,
}

fn candidate_shells(d: usize, m: f64, delta: f64, kmax: usize) -> Vec<Vec<i64>> {
    let reach = ((m + delta).max(0.0).sqrt() + 1.0).powi(2);
    let lattice = Lattice::cube(d, kmax);
    (0..lattice.len())
        .map(|i| lattice.wave(i).to_vec())
        .filter(|k| k.iter().all(|&x| x >= 0) && k.iter().any(|&x| x != 0))
        .filter(|k| {
            let s: f64 = k.iter().map(|&x| (x * x) as f64).sum();
            s <= reach && s <= m + delta && 4.0 * s >= m - delta
        })
        .collect()
}

const MC_CHUNK: usize = 4096;

/// Measure of I = {ν ∈ [1,2]^d : |−Σk_i²ν_i² + m| ≤ δ for some k}: the per-shell
/// bound Σ 2δ / inf|∇F_k| next to a seeded Monte-Carlo estimate.
pub fn excluded_measure_estimate(
    d: usize,
    m: f64,
    delta: f64,
    kmax: usize,
    samples: usize,
    seed: u64,
) -> MeasureEstimate {
    excluded_measure_estimate_with(d, m, delta, kmax, samples, seed, Execution::Auto)
}

pub fn excluded_measure_estimate_with(
    d: usize,
    m: f64,
    delta: f64,
    kmax: usize,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> MeasureEstimate {
    let shells = candidate_shells(d, m, delta, kmax);
    let analytic_bound: f64 = shells
        .iter()
        .map(|k| {
            let grad = 2.0 * k.iter().map(|&x| ((x * x) as f64).powi(2)).sum::<f64>().sqrt();
            2.0 * delta / grad
        })
        .sum::<f64>()
        + if m.abs() <= delta { 1.0 } else { 0.0 };
    let sq: Vec<Vec<f64>> = shells.iter().map(|k| k.iter().map(|&x| (x * x) as f64).collect()).collect();
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: Vec<usize> = par::map(chunks, exec, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = MC_CHUNK.min(samples - c * MC_CHUNK);
        let mut nu = vec![0.0; d];
        let mut count = 0;
        for _ in 0..n {
            for x in nu.iter_mut() {
                *x = rng.random_range(1.0..2.0);
            }
            let inside = m.abs() <= delta
                || sq.iter().any(|k2| {
                    let f: f64 = k2.iter().zip(&nu).map(|(a, b)| a * b * b).sum();
                    (m - f).abs() <= delta
                });
            count += usize::from(inside);
        }
        count
    });
    let total: usize = hits.iter().sum();
    let p = if samples == 0 { 0.0 } else { total as f64 / samples as f64 };
    let stderr = if samples == 0 { 0.0 } else { (p * (1.0 - p) / samples as f64).sqrt() };
    MeasureEstimate { delta, analytic_bound, monte_carlo: p, stderr, samples, seed, shells }
}
