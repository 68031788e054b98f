//! Fast diagonalization of `Â_M = K_ξ⊗M_η + M_ξ⊗K_η + γ M̂ e eᵀ M̂`.
//!
//! With `U_d` solving `K_d U_d = M_d U_d diag(d_d)` and `U_dᵀ M_d U_d = I`, the
//! Kronecker sum becomes diagonal in the coordinates `(U_ξ⊗U_η)ᵀ`. The
//! rank-one term maps to `γ w wᵀ` with `w = (U_ξᵀM_ξe)⊗(U_ηᵀM_ηe)`; when `e`
//! spans the kernel of both pencils, `w` is a unit vector on the zero
//! eigenvalue and the correction stays diagonal.

use crate::assembly::ParameterOperator;
use crate::error::{check_len, Error, Result};
use crate::linalg::{generalized_sym_eig, kron_apply_into, DenseMatrix};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-12;
/// Off-kernel entries of `w` allowed before the diagonal shortcut is abandoned.
const SUPPORT_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
enum Correction {
    /// `d̃ = d + γ w∘w` already holds everything.
    Diagonal,
    /// `(diag(d) + γ w wᵀ)⁻¹` applied explicitly.
    RankOne { w: Vec<f64>, gamma: f64, zero: Option<usize> },
}

#[derive(Clone, Debug)]
pub struct FdSolver {
    u: [DenseMatrix; 2],
    ut: [DenseMatrix; 2],
    /// Eigenvalues per direction.
    pub d: [Vec<f64>; 2],
    pub gamma: f64,
    dtilde: Vec<f64>,
    correction: Correction,
}

pub fn build_fd(po: &ParameterOperator) -> Result<FdSolver> {
    let eig = [0, 1].map(|d| generalized_sym_eig(&po.dirs[d].stiffness, &po.dirs[d].mass));
    let [ex, ey] = eig;
    let (ex, ey) = (ex?, ey?);
    let dmax = ex.values.last().copied().unwrap_or(0.0) + ey.values.last().copied().unwrap_or(0.0);
    let (nx, ny) = (ex.values.len(), ey.values.len());
    let mut dtilde = Vec::with_capacity(nx * ny);
    for &a in &ex.values {
        for &b in &ey.values {
            let s = a + b;
            dtilde.push(if s.abs() <= ZERO_EIGENVALUE_TOL * dmax { 0.0 } else { s });
        }
    }
    let mut correction = Correction::Diagonal;
    if po.gamma != 0.0 {
        let wx = ex.vectors.matvec_t(&po.dirs[0].mass.matvec(&vec![1.0; nx]));
        let wy = ey.vectors.matvec_t(&po.dirs[1].mass.matvec(&vec![1.0; ny]));
        let w: Vec<f64> = wx.iter().flat_map(|&a| wy.iter().map(move |&b| a * b)).collect();
        let zeros: Vec<usize> = (0..dtilde.len()).filter(|&i| dtilde[i] == 0.0).collect();
        let wmax = crate::linalg::max_abs(&w);
        let supported = zeros.len() == 1
            && w.iter().enumerate().all(|(i, &wi)| i == zeros[0] || wi.abs() <= SUPPORT_TOL * wmax);
        if supported {
            dtilde[zeros[0]] += po.gamma * w[zeros[0]] * w[zeros[0]];
        } else {
            if zeros.len() > 1 {
                return Err(Error::Decomposition(format!(
                    "{}-dimensional kernel cannot be fixed by a rank-one correction",
                    zeros.len()
                )));
            }
            let zero = zeros.first().copied();
            if let Some(z) = zero {
                if w[z].abs() <= SUPPORT_TOL * wmax {
                    return Err(Error::Decomposition("correction vector misses the kernel".into()));
                }
            }
            correction = Correction::RankOne { w, gamma: po.gamma, zero };
        }
    }
    if let Correction::Diagonal = correction {
        if let Some(&bad) = dtilde.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::NotSpd(bad));
        }
    }
    let ut = [ex.vectors.transpose(), ey.vectors.transpose()];
    Ok(FdSolver {
        u: [ex.vectors, ey.vectors],
        ut,
        d: [ex.values, ey.values],
        gamma: po.gamma,
        dtilde,
        correction,
    })
}

/// Solver for the interior block `Â_II` (all ends trimmed, `γ = 0`).
pub fn build_interior_fd(po: &ParameterOperator) -> Result<FdSolver> {
    build_fd(&po.interior()?)
}

impl FdSolver {
    pub fn len(&self) -> usize {
        self.dtilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dtilde.is_empty()
    }

    /// True when the rank-one correction fell back to the explicit formula.
    pub fn uses_fallback(&self) -> bool {
        matches!(self.correction, Correction::RankOne { .. })
    }

    /// Corrected diagonal in eigen-coordinates.
    pub fn diagonal(&self) -> &[f64] {
        &self.dtilde
    }

    pub fn apply(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), rhs.len())?;
        let mut out = vec![0.0; rhs.len()];
        self.apply_into(rhs, &mut out);
        Ok(out)
    }

    /// `out = Â_M⁻¹ rhs`; lengths must match `self.len()`.
    pub fn apply_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        let mut y = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        kron_apply_into(&self.ut[0], &self.ut[1], rhs, &mut y, &mut tmp);
        match &self.correction {
            Correction::Diagonal => y.iter_mut().zip(&self.dtilde).for_each(|(v, d)| *v /= d),
            Correction::RankOne { w, gamma, zero } => solve_rank_one(&self.dtilde, w, *gamma, *zero, &mut y),
        }
        kron_apply_into(&self.u[0], &self.u[1], &y, out, &mut tmp);
    }
}

pub fn fd_apply(fd: &FdSolver, rhs: &[f64]) -> Result<Vec<f64>> {
    fd.apply(rhs)
}

/// Solves `(diag(d) + γ w wᵀ) y = b` in place; `d` may vanish at one index `zero`.
fn solve_rank_one(d: &[f64], w: &[f64], gamma: f64, zero: Option<usize>, y: &mut [f64]) {
    match zero {
        None => {
            let (mut num, mut den) = (0.0, 1.0);
            for i in 0..d.len() {
                num += w[i] * y[i] / d[i];
                den += gamma * w[i] * w[i] / d[i];
            }
            let s = gamma * num / den;
            for i in 0..d.len() {
                y[i] = (y[i] - s * w[i]) / d[i];
            }
        }
        Some(z) => {
            // row z reads γ w_z (wᵀy) = b_z
            let s = y[z] / (gamma * w[z]);
            let mut rest = 0.0;
            for i in (0..d.len()).filter(|&i| i != z) {
                y[i] = (y[i] - gamma * w[i] * s) / d[i];
                rest += w[i] * y[i];
            }
            y[z] = (s - rest) / w[z];
        }
    }
}
