//! Hessian spectra: Lanczos, stochastic Lanczos quadrature, ε-rank, dense
//! oracles for small networks, loss-surface slices and Kronecker factor ranks.

mod hessian;
mod kfac;
mod lanczos;
mod slq;
mod surface;

pub use hessian::{exact_hessian, top_eigvecs, EigenPair, HessianOperator, EXACT_HESSIAN_LIMIT};
pub use kfac::{kfac_factor_ranks, kronecker, numeric_rank, KfacLayerRanks, RANK_TOL};
pub use lanczos::{lanczos, lanczos_run, FnOperator, LanczosRun, LinearOperator};
pub use slq::{
    default_sigma2, density_from_probes, epsilon_rank_exact, epsilon_rank_slq, gaussian_pdf, l1_distance, linspace,
    ritz_probes, slq_density, smoothed_density, trapezoid, EpsRankReport, EpsRankSource, GridSpec, RitzProbe,
    SlqConfig, SpectrumEstimate,
};
pub use surface::{loss_surface_slice, surface_slice_fn, SurfaceSlice};
