//! Quadratic jet of the time-dependent center manifold of the ill-posed system
//! `u_t = v, v_t = −Σν_i²∂_i²u − m u + ε f(θ, x, u, Du)`, `θ' = ω`,
//! on a Fourier truncation `|k_i| ≤ K`.
//!
//! Coordinates. Every mode k carries a 2×2 block `[[0,1],[q_k,0]]`,
//! `q_k = Σν_i²k_i² − m`, with eigenvalues `λ_k^± = ±√q_k`. Hyperbolic modes
//! (q_k > 0 outside the center set) are described by eigen-coordinates
//! `(ξ⁺, ξ⁻)` with `û = ξ⁺ + ξ⁻`, `v̂ = √q (ξ⁺ − ξ⁻)`. Center modes use the
//! same eigen-coordinates, except for `q_k = 0` where `(û, v̂)` itself is used
//! and the block is a Jordan block. The jet is a polynomial of degree ≤ 2 in
//! the complex center coordinates; the real manifold is its restriction to
//! the slice where the field is real.

use crate::error::{Error, Result};
use crate::expr::{Expr, ScalarFunctionSpec, Var};
use crate::grid::Grid;
use crate::lattice::Lattice;
use crate::linear_ops::{kernel_tolerance, EllipticOperatorSpec, EvolutionOperatorSpec};
use crate::par::{self, Execution};
use crate::spectral_space::{norm, SpaceParams, SpectralField};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `z = (u, u_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrderState {
    pub u: SpectralField,
    pub v: SpectralField,
}

impl FirstOrderState {
    pub fn new(u: SpectralField, v: SpectralField) -> Result<Self> {
        if u.lattice() != v.lattice() || u.freq_dim() != v.freq_dim() {
            return Err(Error::DimensionMismatch("u and v live on different lattices".into()));
        }
        Ok(FirstOrderState { u, v })
    }

    pub fn zeros(dim: usize, cutoff: usize) -> Self {
        FirstOrderState { u: SpectralField::zeros(dim, cutoff), v: SpectralField::zeros(dim, cutoff) }
    }

    /// `(‖u‖²_{ρ,r} + ‖v‖²_{ρ,r−1})^{1/2}`.
    pub fn norm(&self, space: SpaceParams) -> f64 {
        norm(&self.u, space).hypot(norm(&self.v, space.shifted(-1.0)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(FirstOrderState { u: self.u.sub(&other.u)?, v: self.v.sub(&other.v)? })
    }
}

/// The block operator `A = (0 1; −Σν²∂² − m 0)` on the truncation box.
#[derive(Clone, Debug)]
pub struct FirstOrderSystem {
    pub spec: EllipticOperatorSpec,
    lattice: Lattice,
    q: Vec<f64>,
}

pub fn assemble_system(spec: &EllipticOperatorSpec, cutoff: usize) -> FirstOrderSystem {
    let lattice = Lattice::cube(spec.dim(), cutoff);
    let q = (0..lattice.len())
        .map(|i| {
            let k = lattice.wave(i);
            k.iter().zip(&spec.nu).map(|(&ki, &n)| n * n * (ki * ki) as f64).sum::<f64>() - spec.m
        })
        .collect();
    FirstOrderSystem { spec: spec.clone(), lattice, q }
}

fn sqrt_signed(q: f64) -> C64 {
    if q >= 0.0 {
        C64::new(q.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-q).sqrt())
    }
}

impl FirstOrderSystem {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cutoff(&self) -> usize {
        self.lattice.cutoffs()[0]
    }

    /// `q_k = Σν_i²k_i² − m` for lattice index `idx`.
    pub fn q(&self, idx: usize) -> f64 {
        self.q[idx]
    }

    pub fn is_jordan(&self, idx: usize) -> bool {
        self.q[idx].abs() <= kernel_tolerance(0.0, self.lattice.wave(idx))
    }

    /// `λ_k^Λ = Λ √q_k`, Λ = ±1.
    pub fn eigenvalue(&self, idx: usize, lambda_sign: i8) -> C64 {
        if self.is_jordan(idx) {
            return ZERO;
        }
        sqrt_signed(self.q[idx]) * lambda_sign as f64
    }

    /// `Φ_k^Λ = (1, λ_k^Λ)` (coefficients of `e^{ik·x}`).
    pub fn eigenvector(&self, idx: usize, lambda_sign: i8) -> [C64; 2] {
        [C64::new(1.0, 0.0), self.eigenvalue(idx, lambda_sign)]
    }

    /// The 2×2 block of mode `idx`.
    pub fn block(&self, idx: usize) -> [[f64; 2]; 2] {
        [[0.0, 1.0], [self.q[idx], 0.0]]
    }

    /// Real normal form of a center block with `q < 0`: `[[0, s], [−s, 0]]`,
    /// `s = √(−q)`, reached by `(û, v̂/s)`.
    pub fn rotation_form(&self, idx: usize) -> Option<[[f64; 2]; 2]> {
        (self.q[idx] < 0.0 && !self.is_jordan(idx)).then(|| {
            let s = (-self.q[idx]).sqrt();
            [[0.0, s], [-s, 0.0]]
        })
    }

    pub fn apply(&self, z: &FirstOrderState) -> Result<FirstOrderState> {
        let u = z.v.clone();
        let v = z.u.map_coeffs(|i, c| c * self.q[i], z.u.is_real());
        FirstOrderState::new(u, v)
    }
}

/// How the center set is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPolicy {
    /// Modes with `|Re λ| ≤ slow_rate` join σ_c (0 keeps exactly Re λ = 0).
    pub slow_rate: f64,
    pub beta3_minus: f64,
    pub beta3_plus: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy { slow_rate: 0.0, beta3_minus: 0.0, beta3_plus: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralSplitting {
    pub stable_modes: Vec<(Vec<i64>, i8)>,
    pub unstable_modes: Vec<(Vec<i64>, i8)>,
    pub center_modes: Vec<(Vec<i64>, i8)>,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3_minus: f64,
    pub beta3_plus: f64,
    pub system: FirstOrderSystem,
    center_idx: Vec<usize>,
    hyper_idx: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Stable,
    Center,
    Unstable,
}

pub fn split_spectrum(system: &FirstOrderSystem, policy: SplitPolicy) -> Result<SpectralSplitting> {
    let lat = &system.lattice;
    let mut out = SpectralSplitting {
        stable_modes: vec![],
        unstable_modes: vec![],
        center_modes: vec![],
        beta1: f64::INFINITY,
        beta2: f64::INFINITY,
        beta3_minus: policy.beta3_minus,
        beta3_plus: policy.beta3_plus,
        system: system.clone(),
        center_idx: vec![],
        hyper_idx: vec![],
    };
    for idx in 0..lat.len() {
        let k = lat.wave(idx).to_vec();
        let re = system.eigenvalue(idx, 1).re;
        if system.is_jordan(idx) || re <= policy.slow_rate {
            out.center_modes.push((k.clone(), 1));
            out.center_modes.push((k, -1));
            out.center_idx.push(idx);
            out.beta3_minus = out.beta3_minus.max(re);
            out.beta3_plus = out.beta3_plus.max(re);
        } else {
            out.unstable_modes.push((k.clone(), 1));
            out.stable_modes.push((k, -1));
            out.hyper_idx.push(idx);
            out.beta1 = out.beta1.min(re);
            out.beta2 = out.beta2.min(re);
        }
    }
    if out.hyper_idx.is_empty() {
        return Err(Error::EmptyHyperbolic);
    }
    if out.beta1 <= out.beta3_minus || out.beta2 <= out.beta3_plus {
        return Err(Error::Invalid(format!(
            "no spectral gap: β1 = {}, β3 = {}",
            out.beta1,
            out.beta3_minus.max(out.beta3_plus)
        )));
    }
    Ok(out)
}

impl SpectralSplitting {
    pub fn center_dim(&self) -> usize {
        self.center_modes.len()
    }

    pub fn center_indices(&self) -> &[usize] {
        &self.center_idx
    }

    pub fn hyperbolic_indices(&self) -> &[usize] {
        &self.hyper_idx
    }

    /// Eigen-coordinates `(c⁺, c⁻)` of mode `idx` (Jordan modes: `(û, v̂)`).
    pub fn coords(&self, idx: usize, u: C64, v: C64) -> [C64; 2] {
        if self.system.is_jordan(idx) {
            return [u, v];
        }
        let l = self.system.eigenvalue(idx, 1);
        [(v + l * u) / (2.0 * l), (l * u - v) / (2.0 * l)]
    }

    pub fn from_coords(&self, idx: usize, c: [C64; 2]) -> [C64; 2] {
        if self.system.is_jordan(idx) {
            return c;
        }
        let l = self.system.eigenvalue(idx, 1);
        [c[0] + c[1], l * (c[0] - c[1])]
    }

    fn block_of(&self, idx: usize, lambda_sign: i8) -> Block {
        if self.center_idx.binary_search(&idx).is_ok() {
            Block::Center
        } else if lambda_sign > 0 {
            Block::Unstable
        } else {
            Block::Stable
        }
    }

    /// `‖z‖_X² = Σ_{k,Λ} |ẑ_k^Λ|² e^{2ρ|k|}(1+|k|²)^r` in eigen-coordinates.
    pub fn x_norm(&self, z: &FirstOrderState, space: SpaceParams) -> f64 {
        (0..z.u.len())
            .map(|i| {
                let c = self.coords(i, z.u.coeffs()[i], z.v.coeffs()[i]);
                z.u.weight(i, space).powi(2) * (c[0].norm_sqr() + c[1].norm_sqr())
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Spectral projection onto one block.
    pub fn project(&self, block: Block, z: &FirstOrderState) -> FirstOrderState {
        let mut out = FirstOrderState { u: z.u.zeros_like(), v: z.v.zeros_like() };
        for i in 0..z.u.len() {
            let mut c = self.coords(i, z.u.coeffs()[i], z.v.coeffs()[i]);
            for (a, sign) in [(0, 1i8), (1, -1i8)] {
                if self.block_of(i, sign) != block {
                    c[a] = ZERO;
                }
            }
            let uv = self.from_coords(i, c);
            out.u.coeffs_mut()[i] = uv[0];
            out.v.coeffs_mut()[i] = uv[1];
        }
        if z.u.is_real() && z.v.is_real() {
            out.u.enforce_reality();
            out.v.enforce_reality();
        } else {
            out.u.mark_complex();
            out.v.mark_complex();
        }
        out
    }
}

/// `A^σ(t) Π_σ z`; stable blocks need t ≥ 0, unstable blocks t ≤ 0.
pub fn semigroup_apply(split: &SpectralSplitting, block: Block, t: f64, z: &FirstOrderState) -> Result<FirstOrderState> {
    match block {
        Block::Stable if t < 0.0 => return Err(Error::WrongTimeSign(t)),
        Block::Unstable if t > 0.0 => return Err(Error::WrongTimeSign(t)),
        _ => {}
    }
    let zp = split.project(block, z);
    let mut out = zp.clone();
    for i in 0..zp.u.len() {
        let (u, v) = (zp.u.coeffs()[i], zp.v.coeffs()[i]);
        let uv = if split.system.is_jordan(i) {
            [u + v * t, v]
        } else {
            let c = split.coords(i, u, v);
            let l = split.system.eigenvalue(i, 1);
            split.from_coords(i, [c[0] * (l * t).exp(), c[1] * (-l * t).exp()])
        };
        out.u.coeffs_mut()[i] = uv[0];
        out.v.coeffs_mut()[i] = uv[1];
    }
    if zp.u.is_real() {
        out.u.enforce_reality();
        out.v.enforce_reality();
    }
    Ok(out)
}

/// A C^r radial cut-off: 1 on `|z| ≤ radius/2`, 0 on `|z| ≥ radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffFunction {
    pub order: usize,
    pub radius: f64,
}

pub fn prepare_cutoff(r_smooth: usize, radius: f64) -> Result<CutoffFunction> {
    if !(radius > 0.0) {
        return Err(Error::Invalid(format!("cut-off radius must be positive, got {radius}")));
    }
    Ok(CutoffFunction { order: r_smooth, radius })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

impl CutoffFunction {
    /// φ as a function of `|z|`.
    pub fn eval(&self, r: f64) -> f64 {
        let x = 2.0 * r / self.radius - 1.0;
        if x <= 0.0 {
            return 1.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        // generalized smoothstep: C^order at both joints
        let n = self.order;
        let s: f64 = (0..=n)
            .map(|j| binomial(n + j, j) * binomial(2 * n + 1, n - j) * (-x).powi(j as i32))
            .sum::<f64>()
            * x.powi(n as i32 + 1);
        1.0 - s
    }

    pub fn eval_at(&self, z: &[C64]) -> f64 {
        self.eval(z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
    }
}

/// A polynomial of degree ≤ 2 in `n` complex variables with values in `C^p`.
/// Monomials are ordered 1, z_0..z_{n−1}, then z_i z_j for i ≤ j
/// lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadJet {
    n: usize,
    p: usize,
    c: Vec<C64>,
}

impl QuadJet {
    pub fn monomial_count(n: usize) -> usize {
        1 + n + n * (n + 1) / 2
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        QuadJet { n, p, c: vec![ZERO; Self::monomial_count(n) * p] }
    }

    pub fn vars(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.p
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    pub fn pair(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        1 + n + i * (2 * n - i + 1) / 2 + (j - i)
    }

    /// Variable indices of monomial `m` (empty for the constant).
    pub fn exponents(&self, m: usize) -> Vec<usize> {
        if m == 0 {
            return vec![];
        }
        if m <= self.n {
            return vec![m - 1];
        }
        for i in 0..self.n {
            for j in i..self.n {
                if Self::pair(self.n, i, j) == m {
                    return vec![i, j];
                }
            }
        }
        unreachable!()
    }

    pub fn mono(&self, m: usize) -> &[C64] {
        &self.c[m * self.p..(m + 1) * self.p]
    }

    pub fn mono_mut(&mut self, m: usize) -> &mut [C64] {
        let p = self.p;
        &mut self.c[m * p..(m + 1) * p]
    }

    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        let mut out = self.mono(0).to_vec();
        for m in 1..Self::monomial_count(self.n) {
            let w: C64 = self.exponents(m).iter().map(|&i| z[i]).product();
            out.iter_mut().zip(self.mono(m)).for_each(|(o, c)| *o += w * c);
        }
        out
    }

    pub fn add_scaled(&mut self, other: &QuadJet, s: C64) {
        self.c.iter_mut().zip(&other.c).for_each(|(a, b)| *a += s * b);
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// The same polynomial without its constant term.
    pub fn without_constant(&self) -> QuadJet {
        let mut out = self.clone();
        out.mono_mut(0).iter_mut().for_each(|c| *c = ZERO);
        out
    }

    /// Componentwise product, truncated at degree 2.
    pub fn mul(&self, other: &QuadJet) -> QuadJet {
        let (n, p) = (self.n, self.p);
        let mut out = QuadJet::zeros(n, p);
        let a0 = self.mono(0);
        let b0 = other.mono(0);
        for c in 0..p {
            out.c[c] = a0[c] * b0[c];
        }
        for i in 0..n {
            let (ai, bi) = (self.mono(1 + i), other.mono(1 + i));
            let o = &mut out.c[(1 + i) * p..(2 + i) * p];
            for c in 0..p {
                o[c] = a0[c] * bi[c] + ai[c] * b0[c];
            }
        }
        for i in 0..n {
            for j in i..n {
                let m = Self::pair(n, i, j);
                for c in 0..p {
                    let mut v = a0[c] * other.c[m * p + c] + self.c[m * p + c] * b0[c];
                    v += self.c[(1 + i) * p + c] * other.c[(1 + j) * p + c];
                    if i != j {
                        v += self.c[(1 + j) * p + c] * other.c[(1 + i) * p + c];
                    }
                    out.c[m * p + c] = v;
                }
            }
        }
        out
    }

    /// Pointwise multiplication of every monomial by `w` (length p).
    pub fn mul_values(&self, w: &[C64]) -> QuadJet {
        let mut out = self.clone();
        for m in 0..Self::monomial_count(self.n) {
            out.mono_mut(m).iter_mut().zip(w).for_each(|(a, b)| *a *= b);
        }
        out
    }

    /// Component `i` as a scalar jet.
    pub fn component(&self, i: usize) -> QuadJet {
        let mc = Self::monomial_count(self.n);
        QuadJet { n: self.n, p: 1, c: (0..mc).map(|m| self.c[m * self.p + i]).collect() }
    }

    /// `self(inner(z))`, truncated at degree 2 in z. `inner` has one
    /// component per variable of `self`.
    pub fn compose(&self, inner: &QuadJet) -> QuadJet {
        assert_eq!(inner.p, self.n, "inner jet must have one component per outer variable");
        let (nz, p) = (inner.n, self.p);
        let mz = Self::monomial_count(nz);
        let mut out = QuadJet::zeros(nz, p);
        let ys: Vec<QuadJet> = (0..self.n).map(|i| inner.component(i)).collect();
        let mut accumulate = |s: &QuadJet, coef: &[C64]| {
            for m in 0..mz {
                let w = s.c[m];
                if w != ZERO {
                    out.c[m * p..(m + 1) * p].iter_mut().zip(coef).for_each(|(o, c)| *o += w * c);
                }
            }
        };
        let mut one = QuadJet::zeros(nz, 1);
        one.c[0] = C64::new(1.0, 0.0);
        accumulate(&one, self.mono(0));
        for i in 0..self.n {
            accumulate(&ys[i], self.mono(1 + i));
        }
        for i in 0..self.n {
            for j in i..self.n {
                let coef = self.mono(Self::pair(self.n, i, j));
                if coef.iter().all(|c| *c == ZERO) {
                    continue;
                }
                accumulate(&ys[i].mul(&ys[j]), coef);
            }
        }
        out
    }
}

/// Derivatives of f in its field arguments, for second-order expansion.
#[derive(Clone, Debug)]
struct NonlinearJet {
    f: Expr,
    vars: Vec<Var>,
    d1: Vec<Expr>,
    d2: Vec<Vec<Expr>>,
}

impl NonlinearJet {
    fn new(f: &ScalarFunctionSpec, dim: usize, freq_dim: usize) -> Result<Self> {
        let mut vars = vec![Var::U];
        vars.extend((0..dim).map(Var::Du));
        for v in f.vars() {
            match v {
                Var::D2u(..) => {
                    return Err(Error::Invalid(
                        "center-manifold reduction supports f(θ, x, u, Du) only; second derivatives are not allowed".into(),
                    ))
                }
                Var::X(i) | Var::Du(i) if i >= dim => {
                    return Err(Error::DimensionMismatch(format!("f uses axis {} but d = {dim}", i + 1)))
                }
                Var::Theta(j) if j >= freq_dim => {
                    return Err(Error::DimensionMismatch(format!("f uses θ{} but b = {freq_dim}", j + 1)))
                }
                _ => {}
            }
        }
        let present = f.field_vars();
        vars.retain(|v| present.contains(v));
        let d1 = vars.iter().map(|v| f.expr.diff(v)).collect::<Vec<_>>();
        let d2 = d1.iter().map(|e| vars.iter().map(|v| e.diff(v)).collect()).collect();
        Ok(NonlinearJet { f: f.expr.clone(), vars, d1, d2 })
    }
}

/// Quadrature and truncation parameters for the Duhamel integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// θ-Fourier truncation `|l_j| ≤ theta_modes`.
    pub theta_modes: usize,
    pub tail_tol: f64,
    pub first_panel: f64,
    pub panel_growth: f64,
    pub max_panel: f64,
    pub gauss_points: usize,
    pub horizon_limit: f64,
    /// RK4 step for the first-order correction of the center flow.
    pub flow_step: f64,
    pub exec: Execution,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            theta_modes: 8,
            tail_tol: 1e-12,
            first_panel: 0.125,
            panel_growth: 1.5,
            max_panel: 0.5,
            gauss_points: 8,
            horizon_limit: 100.0,
            flow_step: 0.05,
            exec: Execution::Auto,
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 0 { 1.0 } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .rev()
        .collect()
}

/// Composite Gauss nodes on `[0, horizon]` with geometrically graded panels.
pub fn graded_nodes(q: &QuadratureConfig, horizon: f64) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(q.gauss_points);
    let mut out = Vec::new();
    let (mut a, mut h) = (0.0, q.first_panel);
    while a < horizon {
        let b = (a + h).min(horizon);
        for &(x, w) in &gl {
            out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
        }
        a = b;
        h = (h * q.panel_growth).min(q.max_panel);
    }
    out
}

#[derive(Clone, Debug)]
struct CenterMode {
    idx: usize,
    jordan: bool,
    /// λ⁺ (unused for Jordan modes).
    lam: C64,
}

#[derive(Clone, Debug)]
struct HyperMode {
    idx: usize,
    s: f64,
}

/// Everything the Duhamel map needs, fixed once per (spec, f, ε).
pub struct ManifoldProblem {
    pub spec: EvolutionOperatorSpec,
    pub f: ScalarFunctionSpec,
    pub eps: f64,
    pub split: SpectralSplitting,
    pub quad: QuadratureConfig,
    pub phi: CutoffFunction,
    pub horizon: f64,
    lattice: Lattice,
    grid: Grid,
    xs: Vec<Vec<f64>>,
    nl: NonlinearJet,
    center: Vec<CenterMode>,
    hyper: Vec<HyperMode>,
    theta_lattice: Lattice,
    theta_grid: Vec<Vec<f64>>,
    nodes: Vec<(f64, f64)>,
    /// First-order flow correction J₁ per θ-grid point, at −τ_i then +τ_i.
    flow: Vec<Vec<QuadJet>>,
}

/// The graph map w: per θ-mode, a quadratic jet in the center coordinates
/// with values in the hyperbolic coordinates `(ξ⁺_k, ξ⁻_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldJet {
    pub theta_lattice: Lattice,
    pub modes: Vec<QuadJet>,
}

impl ManifoldJet {
    pub fn zeros(problem: &ManifoldProblem) -> Self {
        let (nc, nh) = (problem.center_dim(), problem.hyperbolic_dim());
        ManifoldJet {
            theta_lattice: problem.theta_lattice.clone(),
            modes: vec![QuadJet::zeros(nc, nh); problem.theta_lattice.len()],
        }
    }

    /// A jet with random coefficients of size ≤ `scale`, real on the real slice
    /// is not enforced (only used for contraction probes).
    pub fn random(problem: &ManifoldProblem, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(problem);
        for q in &mut out.modes {
            for c in q.c.iter_mut() {
                *c = C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
            }
        }
        out
    }

    pub fn at_theta(&self, theta: &[f64]) -> QuadJet {
        let mut out = QuadJet::zeros(self.modes[0].n, self.modes[0].p);
        for (li, q) in self.modes.iter().enumerate() {
            let ph: f64 = self.theta_lattice.wave(li).iter().zip(theta).map(|(&l, &t)| l as f64 * t).sum();
            out.add_scaled(q, C64::from_polar(1.0, ph));
        }
        out
    }

    pub fn eval(&self, theta: &[f64], z: &[C64]) -> Vec<C64> {
        self.at_theta(theta).eval(z)
    }

    /// Sup norm of the coefficient arrays.
    pub fn sup_norm(&self) -> f64 {
        self.modes.iter().fold(0.0, |m, q| m.max(q.max_abs()))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.modes
            .iter()
            .zip(&other.modes)
            .flat_map(|(a, b)| a.c.iter().zip(&b.c).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|q| q.c.iter().all(|c| *c == ZERO))
    }
}

fn theta_points(b: usize, n: usize) -> Vec<Vec<f64>> {
    let total = n.pow(b as u32);
    (0..total)
        .map(|p| {
            let mut rem = p;
            let mut t = vec![0.0; b];
            for a in (0..b).rev() {
                t[a] = 2.0 * PI * (rem % n) as f64 / n as f64;
                rem /= n;
            }
            t
        })
        .collect()
}

impl ManifoldProblem {
    pub fn new(
        spec: &EvolutionOperatorSpec,
        f: &ScalarFunctionSpec,
        eps: f64,
        cutoff: usize,
        policy: SplitPolicy,
        quad: QuadratureConfig,
        phi: CutoffFunction,
    ) -> Result<Self> {
        let d = spec.nu.len();
        let b = spec.omega.len();
        if d == 0 || b == 0 {
            return Err(Error::Invalid("need d ≥ 1 and b ≥ 1".into()));
        }
        let nl = NonlinearJet::new(f, d, b)?;
        let system = assemble_system(&spec.elliptic(), cutoff);
        let split = split_spectrum(&system, policy)?;
        let gap = split.beta1.min(split.beta2) - 2.0 * split.beta3_minus.max(split.beta3_plus);
        let horizon = if gap > 0.0 { (1.0 / quad.tail_tol).ln() / gap } else { f64::INFINITY };
        if !(horizon <= quad.horizon_limit) {
            return Err(Error::QuadratureTail { horizon, limit: quad.horizon_limit });
        }
        let lattice = system.lattice().clone();
        let grid = Grid::for_lattice(&lattice, f.grid_factor().max(2));
        let xs = (0..d).map(|a| grid.coordinate(a)).collect();
        let center = split
            .center_idx
            .iter()
            .map(|&idx| CenterMode { idx, jordan: system.is_jordan(idx), lam: system.eigenvalue(idx, 1) })
            .collect();
        let hyper = split.hyper_idx.iter().map(|&idx| HyperMode { idx, s: system.eigenvalue(idx, 1).re }).collect();
        let theta_lattice = Lattice::cube(b, quad.theta_modes);
        let theta_grid = theta_points(b, 2 * quad.theta_modes + 1);
        let nodes = graded_nodes(&quad, horizon);
        let mut problem = ManifoldProblem {
            spec: spec.clone(),
            f: f.clone(),
            eps,
            split,
            quad,
            phi,
            horizon,
            lattice,
            grid,
            xs,
            nl,
            center,
            hyper,
            theta_lattice,
            theta_grid,
            nodes,
            flow: vec![],
        };
        problem.check_theta_content()?;
        problem.flow = par::map(problem.theta_grid.len(), quad.exec, |p| problem.first_order_flow(&problem.theta_grid[p]));
        Ok(problem)
    }

    pub fn center_dim(&self) -> usize {
        2 * self.center.len()
    }

    pub fn hyperbolic_dim(&self) -> usize {
        2 * self.hyper.len()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Center wave vectors, in coordinate order (two coordinates each).
    pub fn center_waves(&self) -> Vec<Vec<i64>> {
        self.center.iter().map(|c| self.lattice.wave(c.idx).to_vec()).collect()
    }

    /// Hyperbolic wave vectors, in coordinate order (ξ⁺ then ξ⁻ each).
    pub fn hyperbolic_waves(&self) -> Vec<Vec<i64>> {
        self.hyper.iter().map(|h| self.lattice.wave(h.idx).to_vec()).collect()
    }

    /// Block exponential `e^{D t}` applied to center coordinates.
    fn center_exp(&self, t: f64, z: &mut [C64]) {
        for (m, c) in self.center.iter().enumerate() {
            if c.jordan {
                z[2 * m] += z[2 * m + 1] * t;
            } else {
                z[2 * m] *= (c.lam * t).exp();
                z[2 * m + 1] *= (-c.lam * t).exp();
            }
        }
    }

    /// `A_c z` in center coordinates.
    fn center_linear(&self, z: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; z.len()];
        for (m, c) in self.center.iter().enumerate() {
            if c.jordan {
                out[2 * m] = z[2 * m + 1];
            } else {
                out[2 * m] = c.lam * z[2 * m];
                out[2 * m + 1] = -c.lam * z[2 * m + 1];
            }
        }
        out
    }

    /// `e^{D t}` as a linear jet in the center coordinates.
    fn linear_flow_jet(&self, t: f64) -> QuadJet {
        let nc = self.center_dim();
        let mut j = QuadJet::zeros(nc, nc);
        for i in 0..nc {
            let mut e = vec![ZERO; nc];
            e[i] = C64::new(1.0, 0.0);
            self.center_exp(t, &mut e);
            for (a, v) in e.iter().enumerate() {
                j.c[(1 + i) * nc + a] = *v;
            }
        }
        j
    }

    /// `P⁻¹(0, g)` for center mode m.
    fn center_forcing(&self, m: usize, g: C64) -> [C64; 2] {
        let c = &self.center[m];
        if c.jordan {
            [ZERO, g]
        } else {
            let s = g / (2.0 * c.lam);
            [s, -s]
        }
    }

    /// Fourier coefficients of f(θ, x, u, Du) as a jet, where the field is
    /// assembled from jets of the center and hyperbolic coordinates (the
    /// latter optional).
    fn nonlinearity_jet(&self, theta: &[f64], zc: &QuadJet, xi: Option<&QuadJet>) -> QuadJet {
        let n = zc.n;
        let mc = QuadJet::monomial_count(n);
        let npts = self.grid.len();
        let nl = &self.nl;
        let d = self.xs.len();
        // field jets on the grid, one per variable of f
        let mut fields: Vec<QuadJet> = vec![QuadJet::zeros(n, npts); nl.vars.len()];
        let mut uhat = vec![ZERO; self.lattice.len()];
        for m in 0..mc {
            uhat.iter_mut().for_each(|c| *c = ZERO);
            let cm = zc.mono(m);
            for (j, c) in self.center.iter().enumerate() {
                uhat[c.idx] = self.split.from_coords(c.idx, [cm[2 * j], cm[2 * j + 1]])[0];
            }
            if let Some(xi) = xi {
                let hm = xi.mono(m);
                for (j, h) in self.hyper.iter().enumerate() {
                    uhat[h.idx] = hm[2 * j] + hm[2 * j + 1];
                }
            }
            if uhat.iter().all(|c| *c == ZERO) {
                continue;
            }
            for (vi, v) in nl.vars.iter().enumerate() {
                let vals = match v {
                    Var::U => self.grid.to_values(&self.lattice, &uhat),
                    Var::Du(a) => {
                        let dh: Vec<C64> =
                            uhat.iter().enumerate().map(|(i, c)| c * I * self.lattice.wave(i)[*a] as f64).collect();
                        self.grid.to_values(&self.lattice, &dh)
                    }
                    _ => unreachable!(),
                };
                fields[vi].mono_mut(m).copy_from_slice(&vals);
            }
        }
        let mut env: HashMap<Var, Vec<C64>> = HashMap::new();
        for a in 0..d {
            env.insert(Var::X(a), self.xs[a].iter().map(|&x| C64::new(x, 0.0)).collect());
        }
        for (j, &t) in theta.iter().enumerate() {
            env.insert(Var::Theta(j), vec![C64::new(t, 0.0); npts]);
        }
        for (vi, v) in nl.vars.iter().enumerate() {
            env.insert(*v, fields[vi].mono(0).to_vec());
        }
        let mut g = QuadJet::zeros(n, npts);
        g.mono_mut(0).copy_from_slice(&nl.f.eval_vec(npts, &env));
        if n > 0 {
            let deltas: Vec<QuadJet> = fields.iter().map(|q| q.without_constant()).collect();
            for a in 0..nl.vars.len() {
                let fa = nl.d1[a].eval_vec(npts, &env);
                g.add_scaled(&deltas[a].mul_values(&fa), C64::new(1.0, 0.0));
                for bb in 0..nl.vars.len() {
                    let fab = nl.d2[a][bb].eval_vec(npts, &env);
                    if fab.iter().all(|c| *c == ZERO) {
                        continue;
                    }
                    g.add_scaled(&deltas[a].mul(&deltas[bb]).mul_values(&fab), C64::new(0.5, 0.0));
                }
            }
        }
        // back to coefficients
        let mut out = QuadJet::zeros(n, self.lattice.len());
        for m in 0..mc {
            if g.mono(m).iter().all(|c| *c == ZERO) {
                continue;
            }
            let coeffs = self.grid.to_coeffs(&self.lattice, g.mono(m));
            out.mono_mut(m).copy_from_slice(&coeffs);
        }
        out
    }

    fn check_theta_content(&self) -> Result<()> {
        let b = self.spec.omega.len();
        let lt = self.quad.theta_modes;
        let nfine = 4 * lt + 3;
        let pts = theta_points(b, nfine);
        let nc = self.center_dim();
        // f and its field derivatives at u = 0, as functions of θ
        let samples: Vec<Vec<C64>> = pts
            .iter()
            .map(|t| {
                let mut lin = QuadJet::zeros(nc, nc);
                for i in 0..nc {
                    lin.c[(1 + i) * nc + i] = C64::new(1.0, 0.0);
                }
                self.nonlinearity_jet(t, &lin, None).c
            })
            .collect();
        let len = samples[0].len();
        let mut total: f64 = 0.0;
        let mut beyond: f64 = 0.0;
        let fine = Lattice::cube(b, 2 * lt + 1);
        for li in 0..fine.len() {
            let l = fine.wave(li);
            let outside = l.iter().any(|&x| x.unsigned_abs() as usize > lt);
            for c in 0..len {
                let s: C64 = pts
                    .iter()
                    .zip(&samples)
                    .map(|(t, v)| {
                        let ph: f64 = l.iter().zip(t).map(|(&a, &x)| a as f64 * x).sum();
                        v[c] * C64::from_polar(1.0, -ph)
                    })
                    .sum::<C64>()
                    / pts.len() as f64;
                total = total.max(s.norm());
                if outside {
                    beyond = beyond.max(s.norm());
                }
            }
        }
        if beyond > 1e-10 * total.max(1e-300) {
            return Err(Error::ThetaTruncation(lt));
        }
        Ok(())
    }

    /// Center-mode forcing `P⁻¹(0, ĝ_c)` as a jet, for ĝ given on the lattice.
    fn center_part(&self, g: &QuadJet) -> QuadJet {
        let nc = self.center_dim();
        let mut out = QuadJet::zeros(g.n, nc);
        for m in 0..QuadJet::monomial_count(g.n) {
            let gm = g.mono(m).to_vec();
            let om = out.mono_mut(m);
            for (j, c) in self.center.iter().enumerate() {
                let v = self.center_forcing(j, gm[c.idx]);
                om[2 * j] = v[0];
                om[2 * j + 1] = v[1];
            }
        }
        out
    }

    /// J₁ solves `J₁' = D J₁ + P⁻¹(0, ĝ_c(θ₀+ωτ, e^{Dτ}z))`, `J₁(0) = 0`;
    /// returned at every node, −τ_i first then +τ_i.
    fn first_order_flow(&self, theta0: &[f64]) -> Vec<QuadJet> {
        let nc = self.center_dim();
        let rhs = |t: f64, y: &QuadJet| -> QuadJet {
            let theta: Vec<f64> = theta0.iter().zip(&self.spec.omega).map(|(a, w)| a + w * t).collect();
            let g = self.nonlinearity_jet(&theta, &self.linear_flow_jet(t), None);
            let mut out = self.center_part(&g);
            for m in 0..QuadJet::monomial_count(nc) {
                let lin = self.center_linear(y.mono(m));
                out.mono_mut(m).iter_mut().zip(lin).for_each(|(o, l)| *o += l);
            }
            out
        };
        let rk4 = |t: f64, y: &QuadJet, h: f64| -> QuadJet {
            let k1 = rhs(t, y);
            let mut y2 = y.clone();
            y2.add_scaled(&k1, C64::new(0.5 * h, 0.0));
            let k2 = rhs(t + 0.5 * h, &y2);
            let mut y3 = y.clone();
            y3.add_scaled(&k2, C64::new(0.5 * h, 0.0));
            let k3 = rhs(t + 0.5 * h, &y3);
            let mut y4 = y.clone();
            y4.add_scaled(&k3, C64::new(h, 0.0));
            let k4 = rhs(t + h, &y4);
            let mut out = y.clone();
            out.add_scaled(&k1, C64::new(h / 6.0, 0.0));
            out.add_scaled(&k2, C64::new(h / 3.0, 0.0));
            out.add_scaled(&k3, C64::new(h / 3.0, 0.0));
            out.add_scaled(&k4, C64::new(h / 6.0, 0.0));
            out
        };
        let mut result = Vec::with_capacity(2 * self.nodes.len());
        for dir in [-1.0, 1.0] {
            let mut y = QuadJet::zeros(nc, nc);
            let mut t = 0.0;
            let h = self.quad.flow_step;
            for &(tau, _) in &self.nodes {
                let target = dir * tau;
                while dir * (target - t) > h {
                    y = rk4(t, &y, dir * h);
                    t += dir * h;
                }
                result.push(rk4(t, &y, target - t));
            }
        }
        result
    }

    /// Ĝ at one θ-grid point: the Duhamel integrals for fixed θ₀.
    fn duhamel_point(&self, jet: &ManifoldJet, p: usize) -> QuadJet {
        let theta0 = &self.theta_grid[p];
        let nc = self.center_dim();
        let nh = self.hyperbolic_dim();
        let mut acc = QuadJet::zeros(nc, nh);
        let nn = self.nodes.len();
        let eps = C64::new(self.eps, 0.0);
        for (side, dir) in [(0usize, -1.0f64), (1, 1.0)] {
            for (i, &(tau_abs, w)) in self.nodes.iter().enumerate() {
                let tau = dir * tau_abs;
                let theta: Vec<f64> = theta0.iter().zip(&self.spec.omega).map(|(a, om)| a + om * tau).collect();
                let mut flow = self.linear_flow_jet(tau);
                flow.add_scaled(&self.flow[p][side * nn + i], eps);
                let xi = jet.at_theta(&theta).compose(&flow);
                let g = self.nonlinearity_jet(&theta, &flow, Some(&xi));
                for (j, h) in self.hyper.iter().enumerate() {
                    // stable: ∫_{−∞}^0 e^{sτ}(−ĝ/2s); unstable: −∫_0^∞ e^{−sτ}(ĝ/2s)
                    let (comp, fac) = if side == 0 { (2 * j + 1, -1.0) } else { (2 * j, -1.0) };
                    let weight = eps * (fac * w * (-h.s * tau_abs).exp() / (2.0 * h.s));
                    for m in 0..QuadJet::monomial_count(nc) {
                        let gm = g.c[m * g.p + h.idx];
                        acc.c[m * nh + comp] += weight * gm;
                    }
                }
            }
        }
        acc
    }
}

/// One application of the Duhamel map (s)/(u) to `jet`.
pub fn duhamel_update(jet: &ManifoldJet, problem: &ManifoldProblem) -> Result<ManifoldJet> {
    if jet.theta_lattice != problem.theta_lattice
        || jet.modes[0].n != problem.center_dim()
        || jet.modes[0].p != problem.hyperbolic_dim()
    {
        return Err(Error::DimensionMismatch("jet does not match the problem layout".into()));
    }
    let values = par::map(problem.theta_grid.len(), problem.quad.exec, |p| problem.duhamel_point(jet, p));
    let npts = problem.theta_grid.len() as f64;
    let mut out = ManifoldJet::zeros(problem);
    for (li, q) in out.modes.iter_mut().enumerate() {
        let l = problem.theta_lattice.wave(li);
        for (t, v) in problem.theta_grid.iter().zip(&values) {
            let ph: f64 = l.iter().zip(t).map(|(&a, &x)| a as f64 * x).sum();
            q.add_scaled(v, C64::from_polar(1.0 / npts, -ph));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ManifoldSolution {
    pub jet: ManifoldJet,
    pub iterations: usize,
    /// Sup distance between successive iterates.
    pub distances: Vec<f64>,
    /// Largest observed ratio of successive distances.
    pub contraction: f64,
    pub converged: bool,
}

/// Iterate the Duhamel map from the zero jet.
pub fn solve_manifold(problem: &ManifoldProblem, tol: f64, max_iter: usize) -> Result<ManifoldSolution> {
    let mut jet = ManifoldJet::zeros(problem);
    let mut distances = Vec::new();
    for it in 1..=max_iter {
        let next = duhamel_update(&jet, problem)?;
        let dist = next.distance(&jet);
        distances.push(dist);
        jet = next;
        if dist <= tol * jet.sup_norm().max(1e-300) || dist == 0.0 {
            return Ok(ManifoldSolution { contraction: ratio_max(&distances), jet, iterations: it, distances, converged: true });
        }
        if distances.len() >= 3 && ratio_max(&distances[distances.len() - 3..]) >= 1.0 {
            let n = distances.len();
            return Err(Error::Divergence { iterations: it, ratio: distances[n - 1] / distances[n - 2] });
        }
    }
    Ok(ManifoldSolution { contraction: ratio_max(&distances), jet, iterations: max_iter, distances, converged: false })
}

fn ratio_max(d: &[f64]) -> f64 {
    d.windows(2).filter(|w| w[0] > 1e-13 * d[0].max(1e-300)).map(|w| w[1] / w[0]).fold(0.0, f64::max)
}

/// `‖T(a) − T(b)‖ / ‖a − b‖` in the coefficient sup norm.
pub fn contraction_ratio(problem: &ManifoldProblem, a: &ManifoldJet, b: &ManifoldJet) -> Result<f64> {
    let ta = duhamel_update(a, problem)?;
    let tb = duhamel_update(b, problem)?;
    Ok(ta.distance(&tb) / a.distance(b))
}

impl ManifoldProblem {
    /// The truncated state `(u, u_t)` with the given center and hyperbolic coordinates.
    pub fn state_from_coords(&self, zc: &[C64], xi: &[C64]) -> FirstOrderState {
        let mut u = SpectralField::on_lattice(self.lattice.clone(), 0);
        let mut v = u.clone();
        for (j, c) in self.center.iter().enumerate() {
            let uv = self.split.from_coords(c.idx, [zc[2 * j], zc[2 * j + 1]]);
            u.coeffs_mut()[c.idx] = uv[0];
            v.coeffs_mut()[c.idx] = uv[1];
        }
        for (j, h) in self.hyper.iter().enumerate() {
            u.coeffs_mut()[h.idx] = xi[2 * j] + xi[2 * j + 1];
            v.coeffs_mut()[h.idx] = h.s * (xi[2 * j] - xi[2 * j + 1]);
        }
        u.mark_complex();
        v.mark_complex();
        FirstOrderState { u, v }
    }

    /// Coefficients of f(θ, x, u, Du) for a state given by coordinates.
    fn nonlinearity_at(&self, theta: &[f64], zc: &[C64], xi: &[C64]) -> Vec<C64> {
        let mut c = QuadJet::zeros(0, zc.len());
        c.c.copy_from_slice(zc);
        let mut h = QuadJet::zeros(0, xi.len());
        h.c.copy_from_slice(xi);
        self.nonlinearity_jet(theta, &c, Some(&h)).c
    }

    /// Right side of the prepared system in coordinates (center, hyperbolic).
    pub fn prepared_rhs(&self, theta: &[f64], zc: &[C64], xi: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let g = self.nonlinearity_at(theta, zc, xi);
        let phi = self.phi.eval_at(zc);
        let mut dz = self.center_linear(zc);
        for (j, c) in self.center.iter().enumerate() {
            let v = self.center_forcing(j, g[c.idx]);
            dz[2 * j] += self.eps * phi * v[0];
            dz[2 * j + 1] += self.eps * phi * v[1];
        }
        let mut dxi = vec![ZERO; xi.len()];
        for (j, h) in self.hyper.iter().enumerate() {
            let s = g[h.idx] / (2.0 * h.s);
            dxi[2 * j] = h.s * xi[2 * j] + self.eps * s;
            dxi[2 * j + 1] = -h.s * xi[2 * j + 1] - self.eps * s;
        }
        (dz, dxi)
    }

    /// Physical `(û_k, v̂_k)` on the center modes.
    pub fn center_physical(&self, zc: &[C64]) -> Vec<[C64; 2]> {
        self.center.iter().enumerate().map(|(j, c)| self.split.from_coords(c.idx, [zc[2 * j], zc[2 * j + 1]])).collect()
    }

    /// Center coordinates of a real field given by its center-mode values.
    pub fn center_coords(&self, physical: &[[C64; 2]]) -> Vec<C64> {
        self.center
            .iter()
            .zip(physical)
            .flat_map(|(c, uv)| self.split.coords(c.idx, uv[0], uv[1]))
            .collect()
    }

    /// A random real center state with `|z| = radius` (Euclidean in coordinates).
    pub fn random_center_state<R: Rng>(&self, rng: &mut R, radius: f64) -> Vec<C64> {
        let waves = self.center_waves();
        let mut phys = vec![[ZERO; 2]; waves.len()];
        for (j, k) in waves.iter().enumerate() {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            let partner = waves.iter().position(|w| *w == neg).unwrap_or(j);
            if partner < j {
                phys[j] = [phys[partner][0].conj(), phys[partner][1].conj()];
                continue;
            }
            let mut draw = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (a, b) = (draw(), draw());
            phys[j] = if partner == j { [C64::new(a.re, 0.0), C64::new(b.re, 0.0)] } else { [a, b] };
        }
        let z = self.center_coords(&phys);
        let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        z.into_iter().map(|c| c * (radius / n)).collect()
    }
}

/// `dz_c/dt = A_c z_c + ε φ(z_c) Π_c N(θ, z_c, w(θ, z_c))` in center coordinates.
pub fn reduced_ode_rhs(problem: &ManifoldProblem, jet: &ManifoldJet, theta: &[f64], zc: &[C64]) -> Vec<C64> {
    let xi = jet.eval(theta, zc);
    problem.prepared_rhs(theta, zc, &xi).0
}

/// RK4 trajectory of the reduced ODE; rows are (t, θ, z_c).
pub fn reduced_trajectory(
    problem: &ManifoldProblem,
    jet: &ManifoldJet,
    theta0: &[f64],
    z0: &[C64],
    dt: f64,
    steps: usize,
) -> Vec<(f64, Vec<f64>, Vec<C64>)> {
    let omega = &problem.spec.omega;
    let th = |t: f64| -> Vec<f64> { theta0.iter().zip(omega).map(|(a, w)| a + w * t).collect() };
    let axpy = |z: &[C64], k: &[C64], h: f64| -> Vec<C64> { z.iter().zip(k).map(|(a, b)| a + b * h).collect() };
    let mut z = z0.to_vec();
    let mut out = vec![(0.0, th(0.0), z.clone())];
    for s in 0..steps {
        let t = s as f64 * dt;
        let k1 = reduced_ode_rhs(problem, jet, &th(t), &z);
        let k2 = reduced_ode_rhs(problem, jet, &th(t + 0.5 * dt), &axpy(&z, &k1, 0.5 * dt));
        let k3 = reduced_ode_rhs(problem, jet, &th(t + 0.5 * dt), &axpy(&z, &k2, 0.5 * dt));
        let k4 = reduced_ode_rhs(problem, jet, &th(t + dt), &axpy(&z, &k3, dt));
        for i in 0..z.len() {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(((s + 1) as f64 * dt, th((s + 1) as f64 * dt), z.clone()));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceConfig {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Integration time.
    pub h: f64,
    pub steps: usize,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        InvarianceConfig { radius: 0.2, samples: 8, seed: 1, h: 0.1, steps: 20 }
    }
}

/// Start on the graph, integrate the truncated prepared system for time h and
/// measure how far the end point is from the graph: `max |ξ(h) − w(θ₀+ωh, z(h))| / h`.
/// Only the truncated system is checked.
pub fn invariance_residual(problem: &ManifoldProblem, jet: &ManifoldJet, cfg: &InvarianceConfig) -> Result<f64> {
    if cfg.radius > 0.5 * problem.phi.radius {
        return Err(Error::Invalid(format!(
            "sample radius {} lies outside the half-radius ball of the cut-off ({})",
            cfg.radius, problem.phi.radius
        )));
    }
    let b = problem.spec.omega.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<(Vec<f64>, Vec<C64>)> = (0..cfg.samples)
        .map(|_| {
            let theta: Vec<f64> = (0..b).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let z = problem.random_center_state(&mut rng, cfg.radius);
            (theta, z)
        })
        .collect();
    let omega = &problem.spec.omega;
    let res = par::map(starts.len(), problem.quad.exec, |s| {
        let (theta0, z0) = &starts[s];
        let mut z = z0.clone();
        let mut xi = jet.eval(theta0, z0);
        let dt = cfg.h / cfg.steps as f64;
        let th = |t: f64| -> Vec<f64> { theta0.iter().zip(omega).map(|(a, w)| a + w * t).collect() };
        let axpy = |x: &[C64], k: &[C64], h: f64| -> Vec<C64> { x.iter().zip(k).map(|(a, b)| a + b * h).collect() };
        for st in 0..cfg.steps {
            let t = st as f64 * dt;
            let (a1, b1) = problem.prepared_rhs(&th(t), &z, &xi);
            let (a2, b2) = problem.prepared_rhs(&th(t + 0.5 * dt), &axpy(&z, &a1, 0.5 * dt), &axpy(&xi, &b1, 0.5 * dt));
            let (a3, b3) = problem.prepared_rhs(&th(t + 0.5 * dt), &axpy(&z, &a2, 0.5 * dt), &axpy(&xi, &b2, 0.5 * dt));
            let (a4, b4) = problem.prepared_rhs(&th(t + dt), &axpy(&z, &a3, dt), &axpy(&xi, &b3, dt));
            for i in 0..z.len() {
                z[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
            }
            for i in 0..xi.len() {
                xi[i] += dt / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i]);
            }
        }
        let target = jet.eval(&th(cfg.h), &z);
        xi.iter().zip(&target).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / cfg.h
    });
    Ok(res.into_iter().fold(0.0, f64::max))
}

/// Columnar text dump: `l_1..l_b mono_i mono_j k_1..k_d Λ re im`, with −1
/// marking an absent variable in the monomial.
pub fn write_jet<W: Write>(mut w: W, problem: &ManifoldProblem, jet: &ManifoldJet) -> Result<()> {
    let hw = problem.hyperbolic_waves();
    let cw = problem.center_waves();
    writeln!(
        w,
        "# freq_dim={} dim={} theta_modes={} center_dim={} hyperbolic_dim={} eps={:.16e}",
        problem.spec.omega.len(),
        problem.spec.nu.len(),
        problem.quad.theta_modes,
        problem.center_dim(),
        problem.hyperbolic_dim(),
        problem.eps
    )?;
    let label = |k: &[i64]| k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    writeln!(w, "# center_coordinates={}", cw.iter().map(|k| format!("({})", label(k))).collect::<Vec<_>>().join(" "))?;
    for (li, q) in jet.modes.iter().enumerate() {
        let l = jet.theta_lattice.wave(li);
        for m in 0..QuadJet::monomial_count(q.n) {
            let e = q.exponents(m);
            let (a, b) = (e.first().map_or(-1, |&x| x as i64), e.get(1).map_or(-1, |&x| x as i64));
            for (j, k) in hw.iter().enumerate() {
                for (c, lam) in [(2 * j, 1), (2 * j + 1, -1)] {
                    let v = q.c[m * q.p + c];
                    if v == ZERO {
                        continue;
                    }
                    let ls = l.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                    let ks = k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                    writeln!(w, "{ls} {a} {b} {ks} {lam} {:.16e} {:.16e}", v.re, v.im)?;
                }
            }
        }
    }
    Ok(())
}
