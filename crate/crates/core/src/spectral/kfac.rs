use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::network::{BackwardTrace, ForwardTrace};
use crate::numerics::{singular_values, DenseMatrix};
use crate::regularizers::effective_rank_from_singular_values;

/// Relative threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Number of singular values above `1e−8·s_max`.
pub fn numeric_rank(m: &DenseMatrix) -> Result<usize> {
    Ok(rank_of(&singular_values(m)?))
}

fn rank_of(s: &[f64]) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_TOL * top).count()
}

/// Dense Kronecker product `A ⊗ B`.
pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (br, bc) = (b.rows(), b.cols());
    DenseMatrix::from_fn(a.rows() * br, a.cols() * bc, |r, c| a.get(r / br, c / bc) * b.get(r % br, c % bc))
}

/// Ranks of one layer's Kronecker factors.
#[derive(Debug, Clone, PartialEq)]
pub struct KfacLayerRanks {
    pub layer: usize,
    pub input_erank: f64,
    pub input_rank: usize,
    pub grad_erank: f64,
    pub grad_rank: usize,
}

/// Effective and numerical ranks of `Σ a aᵀ` (layer inputs) and `Σ g gᵀ`
/// (per-sample pre-activation gradients), accumulated over all traces.
pub fn kfac_factor_ranks(traces: &[(ForwardTrace, BackwardTrace)]) -> Result<Vec<KfacLayerRanks>> {
    let Some((first, _)) = traces.first() else {
        return Err(invalid!("no traces"));
    };
    let layers = first.num_layers();
    (0..layers)
        .map(|l| {
            let a = DenseMatrix::vstack(traces.iter().map(|(f, _)| f.layer_input(l)))?;
            let g = DenseMatrix::vstack(traces.iter().map(|(_, b)| &b.pre_grads[l]))?;
            let sa = singular_values(&a.t_matmul(&a)?)?;
            let sg = singular_values(&g.t_matmul(&g)?)?;
            Ok(KfacLayerRanks {
                layer: l,
                input_erank: effective_rank_from_singular_values(&sa),
                input_rank: rank_of(&sa),
                grad_erank: effective_rank_from_singular_values(&sg),
                grad_rank: rank_of(&sg),
            })
        })
        .collect()
}
