//! Symmetric eigensolvers: implicit-shift QL on tridiagonal matrices, and a
//! Householder reduction that feeds it for small dense oracles.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::DenseMatrix;
use crate::error::{invalid, Result};

/// Symmetric tridiagonal matrix given by its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid!("tridiagonal matrix needs at least one diagonal entry"));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(invalid!(
                "off-diagonal length {} must be diagonal length {} minus one",
                offdiag.len(),
                diag.len()
            ));
        }
        if diag.iter().chain(&offdiag).any(|v| !v.is_finite()) {
            return Err(invalid!("tridiagonal matrix has non-finite entries"));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, self.diag[i]);
        }
        for (i, &b) in self.offdiag.iter().enumerate() {
            m.set(i, i + 1, b);
            m.set(i + 1, i, b);
        }
        m
    }
}

/// Eigenvalues (ascending) together with the squared first component of each
/// unit eigenvector: the Gauss quadrature nodes and weights of the tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    pub first_components_sq: Vec<f64>,
}

pub fn symtridiag_eigen(t: &SymTridiagonal) -> TridiagEigen {
    let n = t.dim();
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    implicit_ql(&mut d, &mut e, &mut z, 1);
    let order = ascending_order(&d);
    TridiagEigen {
        values: order.iter().map(|&i| d[i]).collect(),
        first_components_sq: order.iter().map(|&i| z[i] * z[i]).collect(),
    }
}

/// Full eigendecomposition of the tridiagonal: ascending values and the matrix
/// whose column `k` is the unit eigenvector for `values[k]`.
pub fn symtridiag_eigenvectors(t: &SymTridiagonal) -> (Vec<f64>, DenseMatrix) {
    let n = t.dim();
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);
    let mut z = DenseMatrix::identity(n).into_vec();
    implicit_ql(&mut d, &mut e, &mut z, n);
    let order = ascending_order(&d);
    let vecs = DenseMatrix::from_fn(n, n, |r, c| z[r * n + order[c]]);
    (order.iter().map(|&i| d[i]).collect(), vecs)
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn sym_eigen(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(invalid!("sym_eigen needs a square matrix, got {}x{}", m.rows(), m.cols()));
    }
    if !m.is_finite() {
        return Err(invalid!("sym_eigen input contains non-finite entries"));
    }
    let scale = m.max_abs().max(1.0);
    if m.asymmetry() > 1e-8 * scale {
        return Err(invalid!(
            "matrix is not symmetric: max |M - M^T| = {:e}",
            m.asymmetry()
        ));
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let (mut d, mut e) = householder_tridiagonalize(m);
    e.push(0.0);
    let mut z = [0.0];
    implicit_ql(&mut d, &mut e, &mut z, 0);
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvalues of a dense symmetric matrix (ascending) and the matrix whose
/// column `k` is a unit eigenvector for `values[k]`.
pub fn sym_eigen_vectors(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !m.is_square() {
        return Err(invalid!("sym_eigen_vectors needs a square matrix, got {}x{}", m.rows(), m.cols()));
    }
    if !m.is_finite() {
        return Err(invalid!("sym_eigen_vectors input contains non-finite entries"));
    }
    let n = m.rows();
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let (mut d, mut e, z) = tridiagonalize(m, true);
    let mut z = z.expect("vectors requested");
    e.push(0.0);
    implicit_ql(&mut d, &mut e, &mut z, n);
    let order = ascending_order(&d);
    let vecs = DenseMatrix::from_fn(n, n, |r, c| z[r * n + order[c]]);
    Ok((order.iter().map(|&i| d[i]).collect(), vecs))
}

fn ascending_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    order
}

// Implicit QL with Wilkinson shifts. `e[i]` couples rows i and i+1 and
// `e[n-1]` is scratch. `z` holds `z_rows` rows of an n-column matrix that
// accumulates the rotations; pass z_rows = 1 with z = e_1ᵀ to track only the
// first components, or 0 to skip vectors.
fn implicit_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64], z_rows: usize) {
    let n = d.len();
    if n == 1 {
        return;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 60, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early_exit = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early_exit = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in 0..z_rows {
                    let base = row * n;
                    let f = z[base + i + 1];
                    z[base + i + 1] = s * z[base + i] + c * f;
                    z[base + i] = c * z[base + i] - s * f;
                }
            }
            if early_exit {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

fn householder_tridiagonalize(m: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let (d, e, _) = tridiagonalize(m, false);
    (d, e)
}

// Householder reduction to tridiagonal form. Returns the diagonal, the n-1
// off-diagonal entries and, when asked, the orthogonal Q (row-major) with
// `Qᵀ M Q` tridiagonal.
fn tridiagonalize(m: &DenseMatrix, vectors: bool) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let n = m.rows();
    let mut a = m.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a.get(i, k).abs()).sum();
            if scale == 0.0 {
                e[i] = a.get(i, l);
            } else {
                for k in 0..=l {
                    let v = a.get(i, k) / scale;
                    a.set(i, k, v);
                    h += v * v;
                }
                let f = a.get(i, l);
                let g = if f >= 0.0 { -libm::sqrt(h) } else { libm::sqrt(h) };
                e[i] = scale * g;
                h -= f * g;
                a.set(i, l, f - g);
                let mut f = 0.0;
                for j in 0..=l {
                    if vectors {
                        a.set(j, i, a.get(i, j) / h);
                    }
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a.get(j, k) * a.get(i, k);
                    }
                    for k in (j + 1)..=l {
                        g += a.get(k, j) * a.get(i, k);
                    }
                    e[j] = g / h;
                    f += e[j] * a.get(i, j);
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a.get(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let v = a.get(j, k) - (f * e[k] + g * a.get(i, k));
                        a.set(j, k, v);
                    }
                }
            }
        } else {
            e[i] = a.get(i, l);
        }
        d[i] = h;
    }
    if !vectors {
        for i in 0..n {
            d[i] = a.get(i, i);
        }
        return (d, e[1..].to_vec(), None);
    }
    d[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let g: f64 = (0..i).map(|k| a.get(i, k) * a.get(k, j)).sum();
                for k in 0..i {
                    let v = a.get(k, j) - g * a.get(k, i);
                    a.set(k, j, v);
                }
            }
        }
        d[i] = a.get(i, i);
        a.set(i, i, 1.0);
        for j in 0..i {
            a.set(j, i, 0.0);
            a.set(i, j, 0.0);
        }
    }
    (d, e[1..].to_vec(), Some(a.into_vec()))
}
