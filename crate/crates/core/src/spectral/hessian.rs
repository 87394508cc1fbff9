use alloc::vec::Vec;

use super::lanczos::{lanczos_run, LinearOperator};
use crate::error::{invalid, Error, Result};
use crate::network::{hvp, Batch, ParamVector};
use crate::numerics::{symtridiag_eigenvectors, DenseMatrix, RngStream};

/// Largest parameter count for which the dense Hessian is assembled.
pub const EXACT_HESSIAN_LIMIT: usize = 5000;

/// Loss Hessian at `params` on `batch`, applied through exact
/// Hessian-vector products.
pub struct HessianOperator<'a> {
    params: &'a ParamVector,
    batch: &'a Batch,
}

impl<'a> HessianOperator<'a> {
    pub fn new(params: &'a ParamVector, batch: &'a Batch) -> Result<Self> {
        if batch.is_empty() {
            return Err(invalid!("Hessian of an empty batch"));
        }
        if batch.x.cols() != params.spec().input_dim() {
            return Err(invalid!(
                "batch has {} features, network expects {}",
                batch.x.cols(),
                params.spec().input_dim()
            ));
        }
        Ok(Self { params, batch })
    }
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let dir = ParamVector::from_flat(self.params.spec().clone(), v.to_vec()).expect("direction length matches");
        let hv = hvp(self.params, self.batch, &dir).expect("batch validated at construction");
        out.copy_from_slice(hv.as_slice());
    }
}

/// Dense Hessian assembled column by column from Hessian-vector products and
/// symmetrised. Refuses networks with more than [`EXACT_HESSIAN_LIMIT`]
/// parameters.
pub fn exact_hessian(params: &ParamVector, batch: &Batch) -> Result<DenseMatrix> {
    let p = params.len();
    if p > EXACT_HESSIAN_LIMIT {
        return Err(Error::Capability(alloc::format!(
            "exact Hessian needs P <= {}, network has {}",
            EXACT_HESSIAN_LIMIT,
            p
        )));
    }
    let op = HessianOperator::new(params, batch)?;
    let mut h = DenseMatrix::zeros(p, p);
    let mut e = alloc::vec![0.0; p];
    let mut col = alloc::vec![0.0; p];
    for j in 0..p {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for (i, &v) in col.iter().enumerate() {
            h.set(i, j, v);
        }
    }
    for i in 0..p {
        for j in i + 1..p {
            let m = 0.5 * (h.get(i, j) + h.get(j, i));
            h.set(i, j, m);
            h.set(j, i, m);
        }
    }
    Ok(h)
}

/// An approximate eigenpair.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// The `k` Ritz pairs of largest `|λ|` after `m` Lanczos steps from a random
/// start. Vectors are unit length and mutually orthogonal.
pub fn top_eigvecs(op: &dyn LinearOperator, k: usize, m: usize, rng: &mut RngStream) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    if k == 0 || k > m || m > n {
        return Err(invalid!("need 1 <= k <= m <= dim, got k = {}, m = {}, dim = {}", k, m, n));
    }
    let start = rng.gaussian_vec(n);
    let run = lanczos_run(op, m, &start, true, Some(rng))?;
    let basis = run.basis.expect("basis requested");
    let (values, vecs) = symtridiag_eigenvectors(&run.tridiagonal);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let mut out = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let mut v = alloc::vec![0.0; n];
        for (i, q) in basis.iter().enumerate() {
            crate::numerics::axpy(vecs.get(i, j), q, &mut v);
        }
        let nv = crate::numerics::norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        out.push(EigenPair { value: values[j], vector: v });
    }
    Ok(out)
}
