use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{sym_eigen_vectors, DenseMatrix};

/// Singular values below this fraction of the largest are treated as zero.
/// They come from the eigenvalues of the Gram matrix, which resolve `σ` only
/// down to about `1e−7·σ_max`.
const ZERO_SV: f64 = 1e-6;
/// Relative gap below which two singular values count as degenerate.
const DEGENERATE_GAP: f64 = 1e-8;

/// Singular values of `F` (descending) and the matching unit eigenvectors of
/// the smaller Gram matrix: right singular vectors when `F` is tall, left
/// ones when it is wide.
struct GramSpectrum {
    s: Vec<f64>,
    vecs: DenseMatrix,
    tall: bool,
}

fn gram_spectrum(f: &DenseMatrix) -> Result<GramSpectrum> {
    if f.rows() == 0 || f.cols() == 0 {
        return Err(invalid!("effective rank of an empty {}x{} matrix", f.rows(), f.cols()));
    }
    if !f.is_finite() {
        return Err(invalid!("feature matrix contains non-finite entries"));
    }
    let tall = f.rows() >= f.cols();
    let g = if tall { f.t_matmul(f)? } else { f.matmul(&f.transpose())? };
    let (vals, asc) = sym_eigen_vectors(&g)?;
    let n = vals.len();
    let lmax = vals[n - 1].max(0.0);
    let floor = ZERO_SV * ZERO_SV * lmax;
    let s = (0..n)
        .rev()
        .map(|k| if vals[k] > floor { libm::sqrt(vals[k]) } else { 0.0 })
        .collect();
    let vecs = DenseMatrix::from_fn(n, n, |r, c| asc.get(r, n - 1 - c));
    Ok(GramSpectrum { s, vecs, tall })
}

/// `exp` of the Shannon entropy of the normalised singular values.
///
/// Zero singular values contribute nothing (`0·ln 0 = 0`); the all-zero
/// matrix has effective rank 0.
pub fn effective_rank(f: &DenseMatrix) -> Result<f64> {
    Ok(effective_rank_from_singular_values(&gram_spectrum(f)?.s))
}

pub fn effective_rank_from_singular_values(s: &[f64]) -> f64 {
    let total: f64 = s.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    // exp(H) with H = ln S − Σ s ln s / S, written as S·exp(−Σ s ln s / S) so
    // that equal singular values give an exact integer.
    total * libm::exp(-s_log_s(s.iter().copied()) / total)
}

fn s_log_s(s: impl Iterator<Item = f64>) -> f64 {
    s.filter(|&v| v > 0.0).map(|v| v * libm::log(v)).sum()
}

/// Gradient of [`effective_rank`] with respect to every entry of `F`.
#[derive(Debug, Clone)]
pub struct ErankGradient {
    pub value: f64,
    pub grad: DenseMatrix,
    /// Set when nearly equal singular values were separated by jitter before
    /// differentiating.
    pub degenerate: bool,
}

/// `dER/dF = U · diag(c) · Vᵀ` with `c_k = ER · (−ln p_k − H) / Σ s`,
/// from `ds_k/dF = u_k v_kᵀ` and the chain rule through `p` and the entropy.
/// Evaluated as `F · V diag(c/s) Vᵀ` (or `U diag(c/s) Uᵀ · F` when wide).
pub fn effective_rank_grad(f: &DenseMatrix) -> Result<ErankGradient> {
    let d = gram_spectrum(f)?;
    let s_max = d.s.first().copied().unwrap_or(0.0);
    if s_max <= 0.0 {
        return Ok(ErankGradient {
            value: 0.0,
            grad: DenseMatrix::zeros(f.rows(), f.cols()),
            degenerate: false,
        });
    }
    let value = effective_rank_from_singular_values(&d.s);

    let live: Vec<usize> = (0..d.s.len()).filter(|&k| d.s[k] > 0.0).collect();
    let degenerate = live
        .windows(2)
        .any(|w| d.s[w[0]] - d.s[w[1]] < DEGENERATE_GAP * s_max);
    let mut s = d.s.clone();
    if degenerate {
        let n = live.len();
        for (rank, &k) in live.iter().enumerate() {
            s[k] += DEGENERATE_GAP * s_max * (n - 1 - rank) as f64;
        }
    }
    let total: f64 = live.iter().map(|&k| s[k]).sum();
    let t = s_log_s(live.iter().map(|&k| s[k]));
    let h = libm::log(total) - t / total;
    let er = total * libm::exp(-t / total);

    // W = Σ_k (c_k / σ_k) x_k x_kᵀ over the Gram eigenvectors x_k
    let n = d.vecs.rows();
    let mut scaled = DenseMatrix::zeros(n, n);
    for &k in &live {
        let p = s[k] / total;
        let c = er * (-libm::log(p) - h) / total / d.s[k];
        for r in 0..n {
            scaled.set(r, k, c * d.vecs.get(r, k));
        }
    }
    let w = scaled.matmul(&d.vecs.transpose())?;
    let grad = if d.tall { f.matmul(&w)? } else { w.matmul(f)? };
    Ok(ErankGradient {
        value,
        grad,
        degenerate,
    })
}

/// Effective rank of the second-moment matrix `(1/N)·FᵀF` (a diagnostic; the
/// training objective uses the stacked features directly).
pub fn covariance_erank(f: &DenseMatrix) -> Result<f64> {
    if f.rows() == 0 {
        return Err(invalid!("covariance of a matrix with no rows"));
    }
    let cov = f.t_matmul(f)?.scaled(1.0 / f.rows() as f64);
    effective_rank(&cov)
}
