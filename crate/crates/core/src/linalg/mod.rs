//! Dense and sparse kernels used by the discretization and the solvers.

pub mod dense;
pub mod eig;
pub mod factor;
pub mod kron;
pub mod ordering;
pub mod sparse;

pub use dense::{axpy, dot, max_abs, norm2, DenseMatrix};
pub use eig::{generalized_sym_eig, symmetric_eigen, EigenDecomposition};
pub use factor::{factorize, DenseCholesky, DenseLu, Factorization, MatrixRef, SparseCholesky};
pub use kron::{kron_apply, kron_apply_into};
pub use ordering::grid_nested_dissection;
pub use sparse::CsrMatrix;
