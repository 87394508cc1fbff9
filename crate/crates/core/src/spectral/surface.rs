use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::network::{loss_value, Batch, ParamVector};
use crate::numerics::DenseMatrix;

/// Loss on a square grid in the plane spanned by two directions.
#[derive(Debug, Clone)]
pub struct SurfaceSlice {
    /// Offsets along each direction, `a_i = w·(i − n)/n`.
    pub coords: Vec<f64>,
    /// `values[i][j] = f(θ + a_i d1 + a_j d2)`.
    pub values: DenseMatrix,
}

/// Evaluates `f` on the `(2n+1)²` grid around `theta`.
pub fn surface_slice_fn(
    theta: &[f64],
    d1: &[f64],
    d2: &[f64],
    half_width: f64,
    n: usize,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<SurfaceSlice> {
    if d1.len() != theta.len() || d2.len() != theta.len() {
        return Err(invalid!("directions must match the parameter length"));
    }
    if n == 0 || !(half_width > 0.0) {
        return Err(invalid!("need n >= 1 and a positive half width"));
    }
    let coords: Vec<f64> = (0..=2 * n)
        .map(|i| half_width * (i as f64 - n as f64) / n as f64)
        .collect();
    let side = coords.len();
    let mut values = DenseMatrix::zeros(side, side);
    let mut point = theta.to_vec();
    for (i, &a) in coords.iter().enumerate() {
        for (j, &b) in coords.iter().enumerate() {
            for k in 0..theta.len() {
                point[k] = theta[k] + a * d1[k] + b * d2[k];
            }
            values.set(i, j, f(&point)?);
        }
    }
    Ok(SurfaceSlice { coords, values })
}

/// Network loss on a 2-D slice through `params`.
pub fn loss_surface_slice(
    params: &ParamVector,
    batch: &Batch,
    d1: &[f64],
    d2: &[f64],
    half_width: f64,
    n: usize,
) -> Result<SurfaceSlice> {
    let mut q = params.clone();
    surface_slice_fn(params.as_slice(), d1, d2, half_width, n, |p| {
        q.as_mut_slice().copy_from_slice(p);
        loss_value(&q, batch)
    })
}
