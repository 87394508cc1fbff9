//! Dense linear algebra kernels and seedable randomness.

mod eigen;
mod matrix;
mod rng;
pub mod stats;
mod svd;

pub use eigen::{sym_eigen, sym_eigen_vectors, symtridiag_eigen, symtridiag_eigenvectors, SymTridiagonal, TridiagEigen};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub(crate) use matrix::{gemm, MatRef};
pub use rng::{DrawKind, RngStream};
pub use svd::{singular_values, svd, Svd};
