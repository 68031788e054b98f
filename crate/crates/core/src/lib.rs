//! Dual-primal isogeometric tearing and interconnecting (IETI-DP) solvers for
//! the Poisson problem on conforming multi-patch B-spline discretizations.
//!
//! The crate is organised bottom-up:
//!
//! * [`splines`] – 1D open-knot B-spline spaces, quadrature, 1D matrices.
//! * [`geometry`] – patch maps, multi-patch domains, topology and dof classes.
//! * [`linalg`] – dense/sparse kernels, Jacobi eigensolver, factorizations.
//! * [`assembly`] – patch stiffness/load assembly and parameter-domain operators.
//! * [`fastdiag`] – fast-diagonalization solvers for the parameter-domain operators.
//! * [`krylov`] – PCG with Lanczos condition estimates and preconditioned MINRES.
//! * [`ieti`] – the saddle-point system, its preconditioner, and the solver variants.
//! * [`experiment`] – benchmark records, CSV output and the verification suite.

pub mod assembly;
pub mod error;
pub mod experiment;
pub mod fastdiag;
pub mod geometry;
pub mod ieti;
pub mod krylov;
pub mod linalg;
pub mod splines;

pub use error::{Error, Result};
