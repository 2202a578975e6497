use std::sync::Arc;

/// A box of integer wave vectors `|k_a| <= cutoffs[a]`, stored row-major with
/// the last axis fastest.
#[derive(Clone, Debug)]
pub struct Lattice {
    cutoffs: Vec<usize>,
    waves: Arc<Vec<i64>>,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.cutoffs == other.cutoffs
    }
}

impl Lattice {
    pub fn new(cutoffs: Vec<usize>) -> Self {
        let n = cutoffs.len();
        let len: usize = cutoffs.iter().map(|&k| 2 * k + 1).product();
        let mut waves = vec![0i64; len * n];
        for idx in 0..len {
            let mut rem = idx;
            for a in (0..n).rev() {
                let side = 2 * cutoffs[a] + 1;
                waves[idx * n + a] = (rem % side) as i64 - cutoffs[a] as i64;
                rem /= side;
            }
        }
        Lattice { cutoffs, waves: Arc::new(waves) }
    }

    pub fn cube(rank: usize, cutoff: usize) -> Self {
        Self::new(vec![cutoff; rank])
    }

    pub fn rank(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn len(&self) -> usize {
        if self.cutoffs.is_empty() {
            1
        } else {
            self.waves.len() / self.cutoffs.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn wave(&self, idx: usize) -> &[i64] {
        let n = self.rank();
        &self.waves[idx * n..(idx + 1) * n]
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.rank() {
            return None;
        }
        let mut idx = 0usize;
        for (a, &ka) in k.iter().enumerate() {
            let c = self.cutoffs[a] as i64;
            if ka.abs() > c {
                return None;
            }
            idx = idx * (2 * c as usize + 1) + (ka + c) as usize;
        }
        Some(idx)
    }

    /// Index of `-k`; the row-major layout makes this a reflection.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    pub fn origin(&self) -> usize {
        self.len() / 2
    }
}
