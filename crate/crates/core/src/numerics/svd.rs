//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi keeps high relative accuracy on the small singular values, which the
//! effective-rank gradient divides by, and the matrices we decompose are at
//! most a few hundred columns wide. Tall inputs are first reduced by a
//! Householder QR and Jacobi runs on `Rᵀ`, which needs far fewer sweeps.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{dot, DenseMatrix};
use crate::error::{invalid, Result};

const MAX_SWEEPS: usize = 80;

/// `M = U · diag(s) · Vᵀ` with `k = min(rows, cols)` columns in `U` and `V`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n, k) = (self.u.rows(), self.v.rows(), self.s.len());
        DenseMatrix::from_fn(m, n, |r, c| {
            (0..k)
                .map(|i| self.u.get(r, i) * self.s[i] * self.v.get(c, i))
                .sum()
        })
    }
}

/// Computes the thin SVD with singular values sorted in descending order.
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(invalid!("svd input contains non-finite entries"));
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Err(invalid!("svd of an empty {}x{} matrix", m.rows(), m.cols()));
    }
    if m.rows() >= m.cols() {
        Ok(qr_jacobi(m))
    } else {
        let t = qr_jacobi(&m.transpose());
        Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

/// Singular values only, descending.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    svd(m).map(|d| d.s)
}

/// Householder reflectors `I − β v vᵀ`, `v` acting on rows `k..`.
struct Reflectors {
    rows: usize,
    vs: Vec<(Vec<f64>, f64)>,
}

impl Reflectors {
    /// `Q · [x; 0]` for a length-n column `x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        y[..x.len()].copy_from_slice(x);
        for (k, (v, beta)) in self.vs.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            let tail = &mut y[k..];
            let c = beta * dot(v, tail);
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= c * vi;
            }
        }
        y
    }
}

// Columns of the tall `m` are reduced in place to `R`; returns `Rᵀ` as columns.
fn householder_qr(m: &DenseMatrix) -> (Vec<Vec<f64>>, Reflectors) {
    let (rows, n) = (m.rows(), m.cols());
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut vs = Vec::with_capacity(n);
    for k in 0..n {
        let x = &a[k][k..];
        let norm = libm::sqrt(dot(x, x));
        if norm == 0.0 {
            vs.push((Vec::new(), 0.0));
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let beta = 2.0 / vv;
        for col in a.iter_mut().skip(k) {
            let tail = &mut col[k..];
            let c = beta * dot(&v, tail);
            for (t, vi) in tail.iter_mut().zip(&v) {
                *t -= c * vi;
            }
        }
        vs.push((v, beta));
    }
    // column j of Rᵀ is row j of R
    let rt = (0..n)
        .map(|j| (0..n).map(|i| if i >= j { a[i][j] } else { 0.0 }).collect())
        .collect();
    (rt, Reflectors { rows, vs })
}

// `M = QR`, `Rᵀ = U' Σ V'ᵀ`, hence `M = (Q V') Σ U'ᵀ`.
fn qr_jacobi(m: &DenseMatrix) -> Svd {
    let (rt, q) = householder_qr(m);
    let inner = jacobi_columns(rt, m.cols());
    let n = m.cols();
    let mut u = DenseMatrix::zeros(m.rows(), n);
    for k in 0..n {
        let col = q.apply(&inner.v.column(k));
        for (r, x) in col.into_iter().enumerate() {
            u.set(r, k, x);
        }
    }
    Svd {
        u,
        s: inner.s,
        v: inner.u,
    }
}

// One-sided Jacobi on `a`, where `a[j]` is column j of a `rows × n` matrix.
fn jacobi_columns(mut a: Vec<Vec<f64>>, rows: usize) -> Svd {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = a.iter().map(|c| dot(c, c)).collect();

    let tol = f64::EPSILON * rows as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;

        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                if gamma.abs() <= tol * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                norms[p] = dot(&a[p], &a[p]);
                norms[q] = dot(&a[q], &a[q]);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sv: Vec<f64> = norms.iter().map(|&x| libm::sqrt(x)).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let s_max = sv[order[0]];

    let mut u = DenseMatrix::zeros(rows, n);
    let mut vm = DenseMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut needs_completion = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        s.push(sv[j]);
        for r in 0..n {
            vm.set(r, k, v[j][r]);
        }
        if sv[j] > s_max * 1e-14 && sv[j] > f64::MIN_POSITIVE {
            for r in 0..rows {
                u.set(r, k, a[j][r] / sv[j]);
            }
        } else {
            needs_completion.push(k);
        }
    }
    complete_orthonormal(&mut u, &needs_completion);
    Svd { u, s, v: vm }
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

// Fills the listed columns of `u` with unit vectors orthogonal to every other
// column (null-space completion for zero singular values).
fn complete_orthonormal(u: &mut DenseMatrix, missing: &[usize]) {
    let rows = u.rows();
    let mut candidate = 0;
    for &k in missing {
        // Near-null columns normalised from roundoff are only roughly
        // orthogonal, so a clean candidate may not exist; keep the best one.
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut tried = 0;
        while tried < rows {
            let mut w = vec![0.0; rows];
            w[candidate % rows] = 1.0;
            candidate += 1;
            tried += 1;
            for _ in 0..2 {
                for j in 0..u.cols() {
                    if j == k {
                        continue;
                    }
                    let col = u.column(j);
                    let proj = dot(&col, &w);
                    for r in 0..rows {
                        w[r] -= proj * col[r];
                    }
                }
            }
            let nw = libm::sqrt(dot(&w, &w));
            if best.as_ref().is_none_or(|b| nw > b.0) {
                best = Some((nw, w));
            }
            if nw > 0.5 {
                break;
            }
        }
        if let Some((nw, w)) = best.filter(|b| b.0 > 0.0) {
            for r in 0..rows {
                u.set(r, k, w[r] / nw);
            }
        }
    }
}
