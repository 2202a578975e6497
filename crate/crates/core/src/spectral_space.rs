//! Truncated Fourier fields on T^d (and on T^b × T^d for evolution problems),
//! the weighted norms ‖·‖_{ρ,r}, products and Nemytskii operators.

use crate::error::{Error, Result};
use crate::expr::{ScalarFunctionSpec, Var};
use crate::grid::Grid;
use crate::lattice::Lattice;
use crate::par::{self, Execution};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::HashMap;
use std::io::{BufRead, Write};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceParams {
    pub rho: f64,
    pub r: f64,
}

impl SpaceParams {
    pub fn new(rho: f64, r: f64) -> Result<Self> {
        if !(rho >= 0.0) || !(r >= 0.0) {
            return Err(Error::Invalid(format!("need rho >= 0 and r >= 0, got rho={rho}, r={r}")));
        }
        Ok(SpaceParams { rho, r })
    }

    pub fn shifted(&self, dr: f64) -> SpaceParams {
        SpaceParams { rho: self.rho, r: self.r + dr }
    }
}

/// Fourier coefficients on a box of wave vectors. The first `freq_dim` axes
/// are frequency-torus angles θ (evolution fields), the rest are x.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    freq_dim: usize,
    coeffs: Vec<C64>,
    is_real: bool,
}

/// Fields over (l, k) ∈ Z^b × Z^d share the representation.
pub type EvolutionField = SpectralField;

fn l1(k: &[i64]) -> f64 {
    k.iter().map(|x| x.unsigned_abs() as f64).sum()
}

impl SpectralField {
    pub fn zeros(dim: usize, cutoff: usize) -> Self {
        Self::on_lattice(Lattice::cube(dim, cutoff), 0)
    }

    pub fn zeros_evolution(freq_dim: usize, freq_cutoff: usize, dim: usize, cutoff: usize) -> Self {
        let mut cut = vec![freq_cutoff; freq_dim];
        cut.extend(std::iter::repeat(cutoff).take(dim));
        Self::on_lattice(Lattice::new(cut), freq_dim)
    }

    pub fn on_lattice(lattice: Lattice, freq_dim: usize) -> Self {
        let n = lattice.len();
        SpectralField { lattice, freq_dim, coeffs: vec![ZERO; n], is_real: true }
    }

    pub fn zeros_like(&self) -> Self {
        Self::on_lattice(self.lattice.clone(), self.freq_dim)
    }

    pub fn from_coeffs(lattice: Lattice, freq_dim: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a lattice of {} modes",
                coeffs.len(),
                lattice.len()
            )));
        }
        let mut f = SpectralField { lattice, freq_dim, coeffs, is_real: false };
        f.is_real = f.reality_defect() == 0.0;
        Ok(f)
    }

    pub fn constant(dim: usize, cutoff: usize, c: f64) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        let o = f.lattice.origin();
        f.coeffs[o] = C64::new(c, 0.0);
        f
    }

    /// `amp · e^{ik·x}`; complex in general.
    pub fn mode(dim: usize, cutoff: usize, k: &[i64], amp: C64) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        f.set(k, amp);
        f.is_real = f.reality_defect() == 0.0;
        f
    }

    /// `amp · cos(k·x)`.
    pub fn cos_mode(dim: usize, cutoff: usize, k: &[i64], amp: f64) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        let neg: Vec<i64> = k.iter().map(|x| -x).collect();
        f.set(k, C64::new(amp / 2.0, 0.0));
        f.set(&neg, f.get(&neg) + C64::new(amp / 2.0, 0.0));
        f.is_real = true;
        f
    }

    /// `amp · sin(k·x)`.
    pub fn sin_mode(dim: usize, cutoff: usize, k: &[i64], amp: f64) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        let neg: Vec<i64> = k.iter().map(|x| -x).collect();
        f.set(k, C64::new(0.0, -amp / 2.0));
        f.set(&neg, C64::new(0.0, amp / 2.0));
        f.is_real = true;
        f
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.rank() - self.freq_dim
    }

    pub fn freq_dim(&self) -> usize {
        self.freq_dim
    }

    pub fn cutoff(&self) -> usize {
        self.lattice.cutoffs().get(self.freq_dim).copied().unwrap_or(0)
    }

    pub fn freq_cutoff(&self) -> usize {
        if self.freq_dim == 0 {
            0
        } else {
            self.lattice.cutoffs()[0]
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Direct access; call `enforce_reality` or `mark_complex` afterwards.
    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn wave(&self, idx: usize) -> &[i64] {
        self.lattice.wave(idx)
    }

    /// Split wave vector into (θ-part l, x-part k).
    pub fn split_wave(&self, idx: usize) -> (&[i64], &[i64]) {
        self.lattice.wave(idx).split_at(self.freq_dim)
    }

    pub fn get(&self, k: &[i64]) -> C64 {
        self.lattice.index(k).map(|i| self.coeffs[i]).unwrap_or(ZERO)
    }

    pub fn set(&mut self, k: &[i64], v: C64) {
        if let Some(i) = self.lattice.index(k) {
            self.coeffs[i] = v;
        }
    }

    pub fn is_real(&self) -> bool {
        self.is_real
    }

    pub fn mark_complex(&mut self) {
        self.is_real = false;
    }

    /// max_k |û_k − conj(û_{−k})|.
    pub fn reality_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.lattice.neg_index(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Project onto real fields (û_k ← (û_k + conj û_{−k})/2) and set the flag.
    pub fn enforce_reality(&mut self) {
        let n = self.len();
        for i in 0..n / 2 + 1 {
            let j = self.lattice.neg_index(i);
            let avg = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
        self.is_real = true;
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice || self.freq_dim != other.freq_dim {
            return Err(Error::DimensionMismatch(format!(
                "lattices {:?} vs {:?}",
                self.lattice.cutoffs(),
                other.lattice.cutoffs()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x * a + y * b).collect();
        Ok(SpectralField {
            lattice: self.lattice.clone(),
            freq_dim: self.freq_dim,
            coeffs,
            is_real: self.is_real && other.is_real,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_coeffs(|_, c| c * s, self.is_real)
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        self.map_coeffs(|_, c| c * s, self.is_real && s.im == 0.0)
    }

    /// Coefficient-wise map `c_k ← g(idx, c_k)`.
    pub fn map_coeffs(&self, g: impl Fn(usize, C64) -> C64, is_real: bool) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(i, &c)| g(i, c)).collect();
        SpectralField { lattice: self.lattice.clone(), freq_dim: self.freq_dim, coeffs, is_real }
    }

    /// Coefficient inner product Σ conj(a_k) b_k.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.check_same(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum())
    }

    /// Plain ℓ² norm of the coefficients.
    pub fn l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Change the spatial cutoff (truncating or zero-padding); θ cutoff kept.
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        let mut cut = self.lattice.cutoffs().to_vec();
        for c in cut.iter_mut().skip(self.freq_dim) {
            *c = cutoff;
        }
        self.resized(Lattice::new(cut))
    }

    pub fn resized(&self, lattice: Lattice) -> Self {
        let mut out = Self::on_lattice(lattice, self.freq_dim);
        for i in 0..self.len() {
            if let Some(j) = out.lattice.index(self.lattice.wave(i)) {
                out.coeffs[j] = self.coeffs[i];
            }
        }
        out.is_real = self.is_real;
        out
    }

    /// Spatial translation v(x) ↦ v(x + shift).
    pub fn translate(&self, shift: &[f64]) -> Self {
        self.map_coeffs(
            |i, c| {
                let (_, k) = self.split_wave(i);
                let phase: f64 = k.iter().zip(shift).map(|(&ki, &s)| ki as f64 * s).sum();
                c * C64::from_polar(1.0, phase)
            },
            self.is_real,
        )
    }

    /// Norm weight e^{2ρ|k|}(1+|k|²)^r, or the product weight for evolution fields.
    pub fn weight(&self, idx: usize, p: SpaceParams) -> f64 {
        let (l, k) = self.split_wave(idx);
        let (nl, nk) = (l1(l), l1(k));
        let mut w = (2.0 * p.rho * (nl + nk)).exp() * (1.0 + nk * nk).powf(p.r);
        if self.freq_dim > 0 {
            w *= (1.0 + nl * nl).powf(p.r);
        }
        w
    }
}

pub fn norm(u: &SpectralField, p: SpaceParams) -> f64 {
    let mut acc = 0.0;
    for (i, c) in u.coeffs.iter().enumerate() {
        if *c != ZERO {
            acc += c.norm_sqr() * u.weight(i, p);
        }
    }
    acc.sqrt()
}

/// Norm with the combined weight e^{2ρ(|l|+|k|)}(1+|l|²+|k|²)^r.
pub fn norm_combined(u: &SpectralField, p: SpaceParams) -> f64 {
    let mut acc = 0.0;
    for (i, c) in u.coeffs.iter().enumerate() {
        let (l, k) = u.split_wave(i);
        let (nl, nk) = (l1(l), l1(k));
        acc += c.norm_sqr() * (2.0 * p.rho * (nl + nk)).exp() * (1.0 + nl * nl + nk * nk).powf(p.r);
    }
    acc.sqrt()
}

fn product_on(u: &SpectralField, v: &SpectralField, out: Lattice) -> Result<SpectralField> {
    u.check_same(v)?;
    let grid = Grid::new(out.cutoffs().iter().map(|&k| 2 * (2 * k + 1)).collect());
    let a = grid.to_values(&u.lattice, &u.coeffs);
    let b = grid.to_values(&v.lattice, &v.coeffs);
    let prod: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let mut w = SpectralField { coeffs: grid.to_coeffs(&out, &prod), lattice: out, freq_dim: u.freq_dim, is_real: false };
    if u.is_real && v.is_real {
        w.enforce_reality();
    }
    Ok(w)
}

/// Galerkin product: the convolution truncated to the common box.
pub fn multiply(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    product_on(u, v, u.lattice.clone())
}

/// Exact product on the doubled box (K_out = 2K).
pub fn multiply_wide(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    let cut = u.lattice.cutoffs().iter().map(|&k| 2 * k).collect();
    product_on(u, v, Lattice::new(cut))
}

/// Multiplier (i k_axis)^order; `axis` is 1-based over the spatial axes.
pub fn derivative(u: &SpectralField, axis: usize, order: u32) -> Result<SpectralField> {
    if axis == 0 || axis > u.dim() {
        return Err(Error::Invalid(format!("axis {axis} outside 1..={}", u.dim())));
    }
    let a = u.freq_dim + axis - 1;
    Ok(u.map_coeffs(
        |i, c| {
            let k = u.lattice.wave(i)[a] as f64;
            c * C64::new(0.0, k).powu(order)
        },
        u.is_real,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupBound {
    /// Σ |û_k| e^{ρ|k|}.
    pub bound: f64,
    /// C_{d,r} = (Σ_k (1+|k|²)^{−r})^{1/2} over the box.
    pub constant: f64,
}

pub fn regularity_floor(u: &SpectralField) -> f64 {
    u.dim().max(u.freq_dim) as f64 / 2.0
}

pub fn sup_bound(u: &SpectralField, p: SpaceParams) -> Result<SupBound> {
    let needed = regularity_floor(u);
    if p.r <= needed {
        return Err(Error::Regularity { r: p.r, needed });
    }
    let mut bound = 0.0;
    let mut c2 = 0.0;
    for (i, c) in u.coeffs.iter().enumerate() {
        let (l, k) = u.split_wave(i);
        bound += c.norm() * (p.rho * (l1(l) + l1(k))).exp();
        let mut w = (1.0 + l1(k).powi(2)).powf(-p.r);
        if u.freq_dim > 0 {
            w *= (1.0 + l1(l).powi(2)).powf(-p.r);
        }
        c2 += w;
    }
    Ok(SupBound { bound, constant: c2.sqrt() })
}

/// Point values on `grid` of every variable in `vars` (coordinates and field arguments).
pub(crate) fn grid_env(
    u: &SpectralField,
    vars: &[Var],
    grid: &Grid,
) -> Result<HashMap<Var, Vec<C64>>> {
    let mut env = HashMap::new();
    for v in vars {
        let vals = match *v {
            Var::X(i) => grid.coordinate(u.freq_dim + i).into_iter().map(|x| C64::new(x, 0.0)).collect(),
            Var::Theta(j) => grid.coordinate(j).into_iter().map(|x| C64::new(x, 0.0)).collect(),
            Var::U => grid.to_values(&u.lattice, &u.coeffs),
            Var::Du(i) => grid.to_values(&u.lattice, &derivative(u, i + 1, 1)?.coeffs),
            Var::D2u(i, j) => {
                let d = derivative(&derivative(u, i + 1, 1)?, j + 1, 1)?;
                grid.to_values(&u.lattice, &d.coeffs)
            }
        };
        env.insert(*v, vals);
    }
    Ok(env)
}

fn check_axes(f: &ScalarFunctionSpec, u: &SpectralField) -> Result<()> {
    let (x, t) = f.max_axes();
    if x > u.dim() || t > u.freq_dim {
        return Err(Error::DimensionMismatch(format!(
            "f uses {x} spatial and {t} angle variables, field has {} and {}",
            u.dim(),
            u.freq_dim
        )));
    }
    Ok(())
}

fn check_domain(f: &ScalarFunctionSpec, u: &SpectralField) -> Result<()> {
    if let Some(radius) = f.domain_radius {
        let bound: f64 = u.coeffs.iter().map(|c| c.norm()).sum();
        if bound > radius {
            return Err(Error::DomainViolation { bound, radius });
        }
    }
    Ok(())
}

/// F[u] = f(θ, x, u, Du, D²u) by collocation; the grid has
/// ⌈(p+1)/2⌉(2K+1) points per axis for degree-p polynomial f, 4(2K+1) otherwise.
pub fn apply_nonlinearity(f: &ScalarFunctionSpec, u: &SpectralField) -> Result<SpectralField> {
    check_axes(f, u)?;
    check_domain(f, u)?;
    let grid = Grid::for_lattice(&u.lattice, f.grid_factor());
    let env = grid_env(u, &f.vars(), &grid)?;
    let vals = f.expr.eval_vec(grid.len(), &env);
    let mut out = SpectralField {
        coeffs: grid.to_coeffs(&u.lattice, &vals),
        lattice: u.lattice.clone(),
        freq_dim: u.freq_dim,
        is_real: false,
    };
    if u.is_real {
        out.enforce_reality();
    }
    Ok(out)
}

/// DF[u]·v = Σ_a ∂f/∂a(u) · a(v) over the field arguments a of f.
pub fn apply_linearization(f: &ScalarFunctionSpec, u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.check_same(v)?;
    check_axes(f, u)?;
    let grid = Grid::for_lattice(&u.lattice, f.grid_factor() + 1);
    let vars = f.vars();
    let env = grid_env(u, &vars, &grid)?;
    let fields = f.field_vars();
    let venv = grid_env(v, &fields, &grid)?;
    let n = grid.len();
    let mut acc = vec![ZERO; n];
    for a in &fields {
        let da = f.derivative(a).expr.eval_vec(n, &env);
        for (p, (x, y)) in acc.iter_mut().zip(da.iter().zip(&venv[a])) {
            *p += x * y;
        }
    }
    let mut out = SpectralField {
        coeffs: grid.to_coeffs(&u.lattice, &acc),
        lattice: u.lattice.clone(),
        freq_dim: u.freq_dim,
        is_real: false,
    };
    if u.is_real && v.is_real {
        out.enforce_reality();
    }
    Ok(out)
}

/// Point values on a tensor grid with `points` per axis (for diagnostics).
pub fn grid_values(u: &SpectralField, points: usize) -> Vec<C64> {
    let grid = Grid::new(vec![points; u.lattice.rank()]);
    grid.to_values(&u.lattice, &u.coeffs)
}

/// A random field with coefficients ~ N(0,1)·(1+|k|²)^{−decay/2}·e^{−ρ|k|}.
pub fn random_field<R: Rng>(template: &SpectralField, rng: &mut R, decay: f64, rho: f64, real: bool) -> SpectralField {
    let mut out = template.zeros_like();
    for i in 0..out.len() {
        let (l, k) = out.split_wave(i);
        let s = l1(l) + l1(k);
        let amp = (1.0 + s * s).powf(-decay / 2.0) * (-rho * s).exp();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        out.coeffs[i] = C64::new(re, im) * amp;
    }
    if real {
        out.enforce_reality();
    } else {
        out.is_real = false;
    }
    out
}

pub fn write_field<W: Write>(mut w: W, u: &SpectralField, p: SpaceParams) -> Result<()> {
    write!(w, "# dim={} cutoff={} rho={:.16e} r={:.16e} is_real={}", u.dim(), u.cutoff(), p.rho, p.r, u.is_real)?;
    if u.freq_dim > 0 {
        write!(w, " freq_dim={} freq_cutoff={}", u.freq_dim, u.freq_cutoff())?;
    }
    writeln!(w)?;
    for (i, c) in u.coeffs.iter().enumerate() {
        let k: Vec<String> = u.lattice.wave(i).iter().map(|x| x.to_string()).collect();
        writeln!(w, "{} {:.16e} {:.16e}", k.join(" "), c.re, c.im)?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(r: R) -> Result<(SpectralField, SpaceParams)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Io("empty field file".into()))??;
    let mut kv = HashMap::new();
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| kv.get(k).cloned().ok_or_else(|| Error::Io(format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Io(format!("bad `{k}`"))) };
    let dim = num("dim")? as usize;
    let cutoff = num("cutoff")? as usize;
    let p = SpaceParams { rho: num("rho")?, r: num("r")? };
    let is_real = get("is_real")? == "true";
    let (b, lc) = if kv.contains_key("freq_dim") {
        (num("freq_dim")? as usize, num("freq_cutoff")? as usize)
    } else {
        (0, 0)
    };
    let mut u = SpectralField::zeros_evolution(b, lc, dim, cutoff);
    let rank = b + dim;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != rank + 2 {
            return Err(Error::Io(format!("malformed line `{line}`")));
        }
        let k: Vec<i64> = toks[..rank]
            .iter()
            .map(|t| t.parse().map_err(|_| Error::Io(format!("bad index in `{line}`"))))
            .collect::<Result<_>>()?;
        let re: f64 = toks[rank].parse().map_err(|_| Error::Io(format!("bad value in `{line}`")))?;
        let im: f64 = toks[rank + 1].parse().map_err(|_| Error::Io(format!("bad value in `{line}`")))?;
        let idx = u.lattice.index(&k).ok_or_else(|| Error::Io(format!("mode {k:?} outside box")))?;
        u.coeffs[idx] = C64::new(re, im);
    }
    u.is_real = is_real;
    Ok((u, p))
}

/// A real random field whose coefficient at k depends only on (seed, stream, k):
/// refining the cutoff adds modes and leaves the existing ones unchanged.
/// Amplitudes are N(0,1)·(1+|k|²)^{−decay/2}·e^{−ρ|k|}.
pub fn nested_random_field(template: &SpectralField, seed: u64, stream: u64, decay: f64, rho: f64) -> SpectralField {
    let mut out = template.zeros_like();
    let n = out.len();
    for i in 0..n {
        let j = out.lattice.neg_index(i);
        if j < i {
            continue;
        }
        let (l, k) = out.split_wave(i);
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream.to_le_bytes());
        for (a, x) in l.iter().chain(k).enumerate().take(4) {
            key[16 + 4 * a..20 + 4 * a].copy_from_slice(&(*x as i32).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let s = l1(l) + l1(k);
        let amp = (1.0 + s * s).powf(-decay / 2.0) * (-rho * s).exp();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if i == j { 0.0 } else { rng.sample(StandardNormal) };
        out.coeffs[i] = C64::new(re, im) * amp;
        out.coeffs[j] = out.coeffs[i].conj();
    }
    out.is_real = true;
    out
}

/// Largest ‖uv‖/(‖u‖‖v‖) over `pairs` nested random real fields with
/// decay exponent r + d/2 + 1.
pub fn algebra_constant(dim: usize, cutoff: usize, p: SpaceParams, pairs: usize, seed: u64, exec: Execution) -> Result<f64> {
    let template = SpectralField::zeros(dim, cutoff);
    let decay = p.r + dim as f64 / 2.0 + 1.0;
    let ratios = par::map(pairs, exec, |i| {
        let u = nested_random_field(&template, seed, 2 * i as u64, decay, p.rho);
        let v = nested_random_field(&template, seed, 2 * i as u64 + 1, decay, p.rho);
        Ok(norm(&multiply(&u, &v)?, p) / (norm(&u, p) * norm(&v, p)))
    });
    ratios.into_iter().try_fold(0.0, |m: f64, r: Result<f64>| Ok(m.max(r?)))
}

/// ‖f(u+tv) − f(u) − t f′(u)v‖_{ρ,r} for each t.
pub fn taylor_remainders(f: &ScalarFunctionSpec, u: &SpectralField, v: &SpectralField, ts: &[f64], p: SpaceParams) -> Result<Vec<f64>> {
    let fu = apply_nonlinearity(f, u)?;
    let dfv = apply_linearization(f, u, v)?;
    ts.iter()
        .map(|&t| {
            let fut = apply_nonlinearity(f, &u.lin_comb(1.0, v, t)?)?;
            Ok(norm(&fut.sub(&fu)?.lin_comb(1.0, &dfv, -t)?, p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_to_sum() {
        let c = SpectralField::cos_mode(1, 8, &[1], 1.0);
        let w = multiply(&c, &c).unwrap();
        assert!((w.get(&[0]) - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((w.get(&[2]) - C64::new(0.25, 0.0)).norm() < 1e-15);
        assert!((w.get(&[-2]) - C64::new(0.25, 0.0)).norm() < 1e-15);
        assert!(w.get(&[1]).norm() < 1e-15);
    }

    #[test]
    fn derivative_of_sine() {
        let s = SpectralField::sin_mode(1, 4, &[2], 1.0);
        let d = derivative(&s, 1, 1).unwrap();
        let c = SpectralField::cos_mode(1, 4, &[2], 2.0);
        assert!(d.max_abs_diff(&c).unwrap() < 1e-15);
    }

    #[test]
    fn zero_cutoff_is_legal() {
        let a = SpectralField::constant(2, 0, 3.0);
        let w = multiply(&a, &a).unwrap();
        assert!((w.get(&[0, 0]).re - 9.0).abs() < 1e-14);
        let f = ScalarFunctionSpec::parse("sin(u)").unwrap();
        let s = apply_nonlinearity(&f, &a).unwrap();
        assert!((s.get(&[0, 0]).re - 3f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn roundtrip_text() {
        let mut u = SpectralField::zeros_evolution(1, 2, 1, 3);
        for (i, c) in u.coeffs_mut().iter_mut().enumerate() {
            *c = C64::new(1.0 / (i as f64 + 3.0), (i as f64).sqrt() * 1e-3);
        }
        u.mark_complex();
        let p = SpaceParams { rho: 0.1, r: 2.5 };
        let mut buf = Vec::new();
        write_field(&mut buf, &u, p).unwrap();
        let (v, q) = read_field(&buf[..]).unwrap();
        assert_eq!(u, v);
        assert_eq!(p, q);
    }

    #[test]
    fn domain_ball_is_checked() {
        let f = ScalarFunctionSpec::parse("u^2").unwrap().with_domain_radius(0.5);
        let u = SpectralField::cos_mode(1, 4, &[1], 2.0);
        assert!(matches!(apply_nonlinearity(&f, &u), Err(Error::DomainViolation { .. })));
    }
}
