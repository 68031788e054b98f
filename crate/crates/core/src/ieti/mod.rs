//! IETI-DP: the saddle-point system in the unknowns `(u_Δ⁽¹⁾…u_Δ⁽ᴷ⁾, u_Π, λ)`,
//! its block-diagonal preconditioner with the scaled Dirichlet λ-block, and the
//! three solver variants.
//!
//! * `Mfd` – MINRES on the saddle system; every local solve (Δ-blocks, primal
//!   basis, interior Schur eliminations) uses fast diagonalization of
//!   parameter-domain operators.
//! * `Mlu` – the same outer iteration with exact sparse factorizations and
//!   physical Schur complements.
//! * `Cglu` – CG on the dual Schur complement `F λ = d` with exact local solves.

mod jumps;
mod local;
mod primal;
mod system;

pub use jumps::{build_constraints, build_jumps, ConstraintMatrix, JumpEntry, JumpOperator};
pub use local::{factorize_delta, ApplyClock, DeltaFactor, FreeFd, InteriorSolve, SchurSolver};
pub use primal::{assemble_primal, primal_basis_exact, primal_basis_fd, PrimalSystem};
pub use system::{
    check_continuity, monolithic_solve, ContinuityReport, IetiProblem, IetiSolution, IetiSolver, Timings,
};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::krylov::{StoppingNorm, DEFAULT_INNER_MAXIT, DEFAULT_OUTER_MAXIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Mfd,
    Mlu,
    Cglu,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mfd, Variant::Mlu, Variant::Cglu];

    /// Default Schur complement flavour of the scaled Dirichlet preconditioner.
    pub fn default_schur(self) -> SchurKind {
        match self {
            Variant::Mfd => SchurKind::Parameter,
            Variant::Mlu | Variant::Cglu => SchurKind::Physical,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mfd => "mfd",
            Variant::Mlu => "mlu",
            Variant::Cglu => "cglu",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "mfd" => Ok(Variant::Mfd),
            "mlu" => Ok(Variant::Mlu),
            "cglu" => Ok(Variant::Cglu),
            other => Err(Error::Parameter(format!("unknown variant {other:?}"))),
        }
    }
}

/// Which matrices the scaled Dirichlet preconditioner eliminates the interior of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchurKind {
    /// Parameter-domain `Â`, interior solved by fast diagonalization.
    Parameter,
    /// Physical `A`, interior solved by sparse Cholesky.
    Physical,
}

impl FromStr for SchurKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "parameter" => Ok(SchurKind::Parameter),
            "physical" => Ok(SchurKind::Physical),
            other => Err(Error::Parameter(format!("unknown Schur complement kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Relative residual reduction of the outer iteration.
    pub tol: f64,
    /// Relative residual reduction of the primal basis solves (MFD).
    pub psi_tol: f64,
    pub maxit: usize,
    pub inner_maxit: usize,
    pub stopping: StoppingNorm,
    /// Overrides [`Variant::default_schur`].
    pub schur: Option<SchurKind>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            psi_tol: 1e-8,
            maxit: DEFAULT_OUTER_MAXIT,
            inner_maxit: DEFAULT_INNER_MAXIT,
            stopping: StoppingNorm::Residual,
            schur: None,
        }
    }
}
