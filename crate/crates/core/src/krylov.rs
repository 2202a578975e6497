//! Restarted GMRES with right preconditioning on complex vectors.

use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn nrm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solve A x = b to absolute residual `tol`, preconditioner applied on the right.
pub fn gmres(
    matvec: &dyn Fn(&[C64]) -> Vec<C64>,
    precond: &dyn Fn(&[C64]) -> Vec<C64>,
    b: &[C64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<C64>, GmresOutcome) {
    let n = b.len();
    let mut x = vec![ZERO; n];
    let mut total = 0;
    let mut r = b.to_vec();
    let mut beta = nrm(&r);
    while total < max_iter {
        if beta <= tol {
            return (x, GmresOutcome { iterations: total, residual: beta, converged: true });
        }
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|c| c / beta).collect()];
        let mut h: Vec<Vec<C64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        let mut k = 0;
        while k < restart && total < max_iter {
            let mut w = matvec(&precond(&v[k]));
            let mut col = vec![ZERO; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(vi, &w);
                col[i] = hij;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
            }
            let hn = nrm(&w);
            col[k + 1] = C64::new(hn, 0.0);
            for i in 0..k {
                let t = col[i] * cs[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i].conj() * col[i] + col[i + 1] * cs[i];
                col[i] = t;
            }
            let (a, bb) = (col[k], col[k + 1]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if den == 0.0 {
                (1.0, ZERO)
            } else if a.norm() == 0.0 {
                (0.0, bb.conj() / bb.norm())
            } else {
                let c = a.norm() / den;
                (c, (a / a.norm()) * bb.conj() / den)
            };
            col[k] = c * a + s * bb;
            col[k + 1] = ZERO;
            cs.push(c);
            sn.push(s);
            let gk = g[k];
            g.push(-s.conj() * gk);
            g[k] = gk * c;
            h.push(col);
            total += 1;
            k += 1;
            if hn > 0.0 {
                v.push(w.iter().map(|c| c / hn).collect());
            }
            if g[k].norm() <= tol || hn == 0.0 {
                break;
            }
        }
        // back substitution on the k×k triangle
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut comb = vec![ZERO; n];
        for (j, yj) in y.iter().enumerate() {
            comb.iter_mut().zip(&v[j]).for_each(|(a, b)| *a += yj * b);
        }
        let dx = precond(&comb);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        let ax = matvec(&x);
        r = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        beta = nrm(&r);
    }
    (x, GmresOutcome { iterations: total, residual: beta, converged: beta <= tol })
}
