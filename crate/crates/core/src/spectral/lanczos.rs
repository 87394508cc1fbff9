use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{axpy, dot, norm2, DenseMatrix, RngStream, SymTridiagonal};

/// A symmetric linear map accessed only through products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `out ← A·v`; `out` arrives with arbitrary contents.
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), v);
        }
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (self.f)(v, out)
    }
}

/// Output of a Lanczos run.
#[derive(Debug, Clone)]
pub struct LanczosRun {
    pub tridiagonal: SymTridiagonal,
    /// Orthonormal Krylov basis, one vector per step, when requested.
    pub basis: Option<Vec<Vec<f64>>>,
    /// True when the recurrence stopped before the requested step count.
    pub broke_down: bool,
}

/// Relative size of β below which the Krylov space is considered exhausted.
const BREAKDOWN: f64 = 1e-10;

/// `m` steps of symmetric Lanczos from `probe`, reorthogonalising each new
/// vector against every previous basis vector. Stops early when the
/// off-diagonal falls below `1e−10` relative to the running norm estimate and
/// returns the tridiagonal built so far.
pub fn lanczos(op: &dyn LinearOperator, m: usize, probe: &[f64]) -> Result<SymTridiagonal> {
    lanczos_run(op, m, probe, false, None).map(|r| r.tridiagonal)
}

/// As [`lanczos`] but retains the basis. With `restart` set, a breakdown
/// continues from a fresh random vector orthogonal to the basis so the full
/// `m` steps are always taken (the tridiagonal then has a zero coupling).
pub fn lanczos_run(
    op: &dyn LinearOperator,
    m: usize,
    probe: &[f64],
    keep_basis: bool,
    mut restart: Option<&mut RngStream>,
) -> Result<LanczosRun> {
    let n = op.dim();
    if probe.len() != n {
        return Err(invalid!("probe length {} does not match operator dimension {}", probe.len(), n));
    }
    if m == 0 || m > n {
        return Err(invalid!("Lanczos steps must satisfy 1 <= m <= dim, got m = {} for dim {}", m, n));
    }
    let pn = norm2(probe);
    if !(pn > 0.0) || !pn.is_finite() {
        return Err(invalid!("Lanczos probe must be a finite nonzero vector"));
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    basis.push(probe.iter().map(|v| v / pn).collect());
    let mut alphas = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    let mut w = vec![0.0; n];
    let mut scale: f64 = 0.0;
    let mut broke_down = false;

    for j in 0..m {
        op.apply(&basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        alphas.push(alpha);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        // full reorthogonalisation, applied twice
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let beta = norm2(&w);
        scale = scale.max(alpha.abs() + beta + betas.last().copied().unwrap_or(0.0));
        if j + 1 == m {
            break;
        }
        if beta <= BREAKDOWN * scale.max(1e-300) {
            match restart.as_deref_mut() {
                Some(rng) => {
                    let fresh = fresh_orthogonal(&basis, n, rng);
                    betas.push(0.0);
                    basis.push(fresh);
                    continue;
                }
                None => {
                    broke_down = true;
                    break;
                }
            }
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    betas.truncate(alphas.len() - 1);
    let tridiagonal = SymTridiagonal::new(alphas, betas)?;
    Ok(LanczosRun {
        tridiagonal,
        basis: keep_basis.then_some(basis),
        broke_down,
    })
}

fn fresh_orthogonal(basis: &[Vec<f64>], n: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let mut v = rng.gaussian_vec(n);
        for _ in 0..2 {
            for q in basis {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv > 1e-8 {
            return v.iter().map(|x| x / nv).collect();
        }
    }
}
