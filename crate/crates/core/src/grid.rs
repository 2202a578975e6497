use crate::lattice::Lattice;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// A tensor-product collocation grid on the torus with planned transforms.
pub struct Grid {
    sizes: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl Grid {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = sizes.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = sizes.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Grid { sizes, fwd, inv }
    }

    /// Per-axis size `factor * (2K+1)`.
    pub fn for_lattice(lattice: &Lattice, factor: usize) -> Self {
        Self::new(lattice.cutoffs().iter().map(|&k| factor.max(1) * (2 * k + 1)).collect())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate `2πj/N` of every grid point along `axis`, in storage order.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        let n = self.len();
        let stride: usize = self.sizes[axis + 1..].iter().product();
        let na = self.sizes[axis];
        (0..n).map(|p| 2.0 * PI * ((p / stride) % na) as f64 / na as f64).collect()
    }

    fn slot(&self, lattice: &Lattice, idx: usize) -> usize {
        let mut pos = 0usize;
        for (a, &k) in lattice.wave(idx).iter().enumerate() {
            let n = self.sizes[a] as i64;
            pos = pos * self.sizes[a] + k.rem_euclid(n) as usize;
        }
        pos
    }

    fn transform(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        let rank = self.sizes.len();
        let total = self.len();
        let mut buf = Vec::new();
        for a in 0..rank {
            let na = self.sizes[a];
            let stride: usize = self.sizes[a + 1..].iter().product();
            let block = na * stride;
            buf.resize(na, C64::new(0.0, 0.0));
            let mut scratch = vec![C64::new(0.0, 0.0); plans[a].get_inplace_scratch_len()];
            for start in (0..total).step_by(block) {
                for off in 0..stride {
                    let base = start + off;
                    for j in 0..na {
                        buf[j] = data[base + j * stride];
                    }
                    plans[a].process_with_scratch(&mut buf, &mut scratch);
                    for j in 0..na {
                        data[base + j * stride] = buf[j];
                    }
                }
            }
        }
    }

    /// Point values `Σ_k c_k e^{ik·x}`.
    pub fn to_values(&self, lattice: &Lattice, coeffs: &[C64]) -> Vec<C64> {
        let mut data = vec![C64::new(0.0, 0.0); self.len()];
        for (idx, c) in coeffs.iter().enumerate() {
            if *c != C64::new(0.0, 0.0) {
                data[self.slot(lattice, idx)] = *c;
            }
        }
        self.transform(&mut data, &self.inv);
        data
    }

    /// Fourier coefficients restricted to `lattice`.
    pub fn to_coeffs(&self, lattice: &Lattice, values: &[C64]) -> Vec<C64> {
        let mut data = values.to_vec();
        self.transform(&mut data, &self.fwd);
        let scale = 1.0 / self.len() as f64;
        (0..lattice.len()).map(|idx| data[self.slot(lattice, idx)] * scale).collect()
    }
}
