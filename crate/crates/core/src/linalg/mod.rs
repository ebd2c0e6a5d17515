//! Dense `f64` linear algebra: matrices, vectors, products, elementwise
//! nonlinearities and the singular value decomposition.

pub mod kernels;
mod matrix;
mod svd;

pub use matrix::{matmul, matmul_nt, matmul_tn, sigmoid, sigmoid_scalar, tanh_scalar, tanh_vec, Matrix, Vector};
pub use svd::{svd, truncate_rank, SvdResult};

pub(crate) use matrix::{dot, gemm, View};
