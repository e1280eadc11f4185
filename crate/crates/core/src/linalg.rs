//! Iterative kernels for graphs too large for a dense eigensolve: Lanczos for
//! the spectral gap, conjugate gradients on 1⊥, and a Chebyshev expansion of
//! λ^{-1/2} for field sampling. Plus small dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::rng::{normal_vec, stream_rng};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Smallest non-zero eigenvalue of I − P via Lanczos on P restricted to 1⊥,
/// with full reorthogonalisation. Stops when the Ritz error estimate is below
/// `rel_tol` times the gap.
pub fn lanczos_gap(g: &RegularGraph, rel_tol: f64) -> Result<f64> {
    let n = g.n();
    let max_iter = (n - 1).min(3000);
    let mut rng = stream_rng(0x1a2c_05e5, 0);
    let mut q = normal_vec(&mut rng, n);
    remove_mean(&mut q);
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last = f64::NAN;
    for k in 0..max_iter {
        g.apply_transition(&basis[k], &mut w);
        let a = dot(&basis[k], &w);
        alphas.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
            remove_mean(&mut w);
        }
        let beta = dot(&w, &w).sqrt();
        let check = k % 10 == 9 || beta < 1e-12 || k + 1 == max_iter;
        if check {
            let m = alphas.len();
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alphas[i];
                if i + 1 < m {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = t.symmetric_eigen();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            let top = order[0];
            let theta = eig.eigenvalues[top];
            let gap = 1.0 - theta;
            let res = beta * eig.eigenvectors[(m - 1, top)].abs();
            let sep = if m > 1 { theta - eig.eigenvalues[order[1]] } else { f64::INFINITY };
            let err = if sep > 0.0 { res.min(res * res / sep) } else { res };
            if beta < 1e-12 || err <= rel_tol * gap || (gap - last).abs() <= 1e-3 * rel_tol * gap {
                return Ok(gap);
            }
            last = gap;
            if k + 1 == max_iter {
                return Err(Error::Numerical(format!("Lanczos did not converge (gap ≈ {gap})")));
            }
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(std::mem::replace(&mut w, vec![0.0; n]));
    }
    Err(Error::Numerical("Lanczos did not converge".into()))
}

/// Conjugate gradients for the SPD operator `apply`. With `on_complement`,
/// the iteration is kept in 1⊥ (for the singular graph Laplacian).
pub fn cg<F: Fn(&[f64], &mut [f64])>(
    apply: F,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
    on_complement: bool,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if on_complement {
        remove_mean(&mut r);
    }
    let bnorm = dot(&r, &r).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        if on_complement {
            remove_mean(&mut ap);
        }
        let alpha = rr / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= rel_tol * bnorm {
            if on_complement {
                remove_mean(&mut x);
            }
            return Ok(x);
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::Numerical(format!("CG did not converge in {max_iter} iterations")))
}

/// Chebyshev interpolant of λ^{-1/2} on [a, b].
#[derive(Clone, Debug)]
pub struct ChebyshevInvSqrt {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
    pub max_rel_error: f64,
}

impl ChebyshevInvSqrt {
    pub fn new(a: f64, b: f64, rel_tol: f64) -> Result<Self> {
        if !(a > 0.0 && b > a) {
            return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
        }
        let f = |l: f64| 1.0 / l.sqrt();
        let mut m = 16;
        loop {
            let coeffs = cheb_coeffs(f, a, b, m);
            let err = (0..=4000)
                .map(|i| {
                    // half the probes Chebyshev-clustered at the ends, half uniform
                    let t = i as f64 / 4000.0;
                    let x = if i % 2 == 0 { (std::f64::consts::PI * t).cos() } else { 2.0 * t - 1.0 };
                    let l = 0.5 * (b - a) * x + 0.5 * (a + b);
                    (cheb_eval(&coeffs, x) / f(l) - 1.0).abs()
                })
                .fold(0.0, f64::max);
            if err <= rel_tol {
                return Ok(ChebyshevInvSqrt { a, b, coeffs, max_rel_error: err });
            }
            if m > 1 << 14 {
                return Err(Error::Numerical("Chebyshev expansion did not reach tolerance".into()));
            }
            m *= 2;
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Approximates (I − P)^{-1/2} v for v ∈ 1⊥.
    pub fn apply(&self, g: &RegularGraph, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let (a, b) = (self.a, self.b);
        let s = 2.0 / (b - a);
        let c = (a + b) / (b - a);
        let mut lv = vec![0.0; n];
        // T̃ u = s·(I−P)u − c·u
        let mut op = |u: &[f64], out: &mut [f64]| {
            g.apply_laplacian(u, &mut lv);
            for i in 0..n {
                out[i] = s * lv[i] - c * u[i];
            }
        };
        let mut t0 = v.to_vec();
        let mut y: Vec<f64> = t0.iter().map(|x| 0.5 * self.coeffs[0] * x).collect();
        if self.coeffs.len() == 1 {
            return y;
        }
        let mut t1 = vec![0.0; n];
        op(&t0, &mut t1);
        axpy(self.coeffs[1], &t1, &mut y);
        let mut t2 = vec![0.0; n];
        for &ck in &self.coeffs[2..] {
            op(&t1, &mut t2);
            for i in 0..n {
                t2[i] = 2.0 * t2[i] - t0[i];
            }
            axpy(ck, &t2, &mut y);
            std::mem::swap(&mut t0, &mut t1);
            std::mem::swap(&mut t1, &mut t2);
        }
        y
    }
}

fn cheb_coeffs(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let vals: Vec<f64> = (0..m)
        .map(|j| {
            let x = (pi * (j as f64 + 0.5) / m as f64).cos();
            f(0.5 * (b - a) * x + 0.5 * (a + b))
        })
        .collect();
    (0..m)
        .map(|k| {
            2.0 / m as f64
                * vals
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (pi * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                    .sum::<f64>()
        })
        .collect()
}

fn cheb_eval(c: &[f64], x: f64) -> f64 {
    // Clenshaw
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c[1..].iter().rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + 0.5 * c[0]
}

/// A factor L with L Lᵀ = m for symmetric positive semidefinite m: Cholesky
/// when it succeeds, otherwise an eigendecomposition with negative rounding
/// noise clipped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = m.clone().cholesky() {
        return c.l();
    }
    let eig = m.clone().symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Solve m X = rhs for SPD m.
pub fn spd_solve(m: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = m.cholesky().ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(c.solve(rhs))
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
