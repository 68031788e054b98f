//! A-orthogonal primal basis and the coarse (primal) system.

use crate::assembly::LocalSystem;
use crate::error::{Error, Result};
use crate::geometry::PatchDofs;
use crate::krylov::{pminres, FnOperator, KrylovOptions};
use crate::linalg::{DenseCholesky, DenseMatrix};

use super::jumps::{ConstraintMatrix, JumpOperator};
use super::local::{DeltaFactor, FreeFd};

/// Exact basis: column `j` is `e_{c_j}` on the corners and `−A_ΔΔ⁻¹ A_{Δc_j}` on Δ.
pub fn primal_basis_exact(
    local: &LocalSystem,
    dofs: &PatchDofs,
    cons: &ConstraintMatrix,
    a_dd: Option<&DeltaFactor>,
) -> Result<DenseMatrix> {
    let n = cons.num_free;
    let m = cons.rows();
    let dmap = dofs.delta_map();
    let mut psi = DenseMatrix::zeros(n, m);
    for (j, &c) in cons.corners.iter().enumerate() {
        psi[(c, j)] = 1.0;
        let Some(f) = a_dd else { continue };
        let mut rhs = vec![0.0; dofs.delta.len()];
        for (col, v) in local.matrix.row(c) {
            if let Some(d) = dmap[col] {
                rhs[d] = -v;
            }
        }
        let rhs = f.solve(&rhs);
        for (d, &pos) in dofs.delta.iter().enumerate() {
            psi[(pos, j)] = rhs[d];
        }
    }
    Ok(psi)
}

/// Inexact basis: preconditioned MINRES on `[[A, Cᵀ], [C, 0]] (ψ, δ) = (0, e_j)`
/// with the block preconditioner `diag(Â_M⁻¹, (C Â_M⁻¹ Cᵀ)⁻¹)`.
///
/// Returns the basis and the total number of MINRES iterations.
pub fn primal_basis_fd(
    local: &LocalSystem,
    cons: &ConstraintMatrix,
    fd: &FreeFd,
    opts: &KrylovOptions,
) -> Result<(DenseMatrix, usize)> {
    let n = cons.num_free;
    let m = cons.rows();
    let mut sc = DenseMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let col = cons.apply(&fd.apply(&cons.apply_transpose(&e)));
        sc.set_column(j, &col);
    }
    let sc = DenseMatrix::from_fn(m, m, |i, j| 0.5 * (sc[(i, j)] + sc[(j, i)]));
    let sc = DenseCholesky::new(&sc)?;
    let op = FnOperator::new(n + m, |x: &[f64], y: &mut [f64]| {
        let (u, mu) = x.split_at(n);
        local.matrix.matvec_into(u, &mut y[..n]);
        for (&c, &v) in cons.corners.iter().zip(mu) {
            y[c] += v;
        }
        for (i, &c) in cons.corners.iter().enumerate() {
            y[n + i] = u[c];
        }
    });
    let prec = FnOperator::new(n + m, |x: &[f64], y: &mut [f64]| {
        let (u, mu) = x.split_at(n);
        y[..n].copy_from_slice(&fd.apply(u));
        y[n..].copy_from_slice(&sc.solve(mu));
    });
    let mut psi = DenseMatrix::zeros(n, m);
    let mut iterations = 0;
    for j in 0..m {
        let mut rhs = vec![0.0; n + m];
        rhs[n + j] = 1.0;
        let (x, rep) = pminres(&op, &prec, &rhs, opts)?;
        if !rep.converged {
            return Err(Error::InnerSolve(format!(
                "primal basis column {j}: residual {:e} after {} iterations",
                rep.final_residual(),
                rep.iterations
            )));
        }
        iterations += rep.iterations;
        psi.set_column(j, &x[..n]);
    }
    Ok((psi, iterations))
}

/// `A_Π = Σ R_cᵀ ΨᵀAΨ R_c`, `f_Π = Σ R_cᵀ Ψᵀ f`, `B_Π = Σ B Ψ R_c`.
#[derive(Clone, Debug)]
pub struct PrimalSystem {
    pub a_pi: DenseMatrix,
    pub f_pi: Vec<f64>,
    /// Dense `n_λ × n_Π`.
    pub b_pi: DenseMatrix,
    chol: Option<DenseCholesky>,
}

impl PrimalSystem {
    pub fn size(&self) -> usize {
        self.f_pi.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => Vec::new(),
        }
    }
}

pub fn assemble_primal(
    locals: &[LocalSystem],
    psis: &[DenseMatrix],
    cons: &[ConstraintMatrix],
    jumps: &JumpOperator,
    num_primal: usize,
) -> Result<PrimalSystem> {
    let mut a_pi = DenseMatrix::zeros(num_primal, num_primal);
    let mut f_pi = vec![0.0; num_primal];
    let mut b_pi = DenseMatrix::zeros(jumps.num_multipliers, num_primal);
    for (k, ((local, psi), c)) in locals.iter().zip(psis).zip(cons).enumerate() {
        let m = c.rows();
        let mut a_psi = DenseMatrix::zeros(c.num_free, m);
        for j in 0..m {
            a_psi.set_column(j, &local.matrix.matvec(&psi.column(j)));
        }
        let local_pi = psi.transpose().matmul(&a_psi)?;
        let f_loc = psi.matvec_t(&local.rhs);
        for i in 0..m {
            f_pi[c.global[i]] += f_loc[i];
            for j in 0..m {
                a_pi[(c.global[i], c.global[j])] += 0.5 * (local_pi[(i, j)] + local_pi[(j, i)]);
            }
        }
        for e in &jumps.per_patch[k] {
            for j in 0..m {
                b_pi[(e.lambda, c.global[j])] += e.sign * psi[(e.pos, j)];
            }
        }
    }
    let chol = if num_primal == 0 {
        None
    } else {
        Some(DenseCholesky::new(&a_pi).map_err(|e| Error::Factorization(format!("primal matrix: {e}")))?)
    };
    Ok(PrimalSystem { a_pi, f_pi, b_pi, chol })
}
