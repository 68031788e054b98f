//! Patch-local solvers: the `Â_M⁻¹` / `A_ΔΔ⁻¹` applications and the interface
//! Schur complements used by the scaled Dirichlet preconditioner.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::assembly::{LocalSystem, ParameterOperator};
use crate::error::Result;
use crate::fastdiag::{build_fd, build_interior_fd, FdSolver};
use crate::geometry::PatchDofs;
use crate::linalg::factor::BANDED_LIMIT;
use crate::linalg::{factorize, grid_nested_dissection, CsrMatrix, Factorization, MatrixRef, SparseCholesky};

/// Accumulates wall time spent in local solves.
#[derive(Debug, Default)]
pub struct ApplyClock {
    nanos: AtomicU64,
    calls: AtomicU64,
}

impl ApplyClock {
    pub fn time<T>(&self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.nanos.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        out
    }

    pub fn seconds(&self) -> f64 {
        self.nanos.load(Ordering::Relaxed) as f64 * 1e-9
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.nanos.store(0, Ordering::Relaxed);
        self.calls.store(0, Ordering::Relaxed);
    }
}

/// `R Â_M⁻¹ Rᵀ` on the free coefficients, where `R` restricts the FD index
/// set (Dirichlet sides trimmed) to the free set. The two differ only at
/// Dirichlet corners of patches whose adjacent sides are interfaces.
#[derive(Clone, Debug)]
pub struct FreeFd {
    pub fd: FdSolver,
    /// FD position of each free coefficient.
    pub map: Vec<usize>,
}

impl FreeFd {
    pub fn new(po: &ParameterOperator, dofs: &PatchDofs) -> Result<Self> {
        let fd = build_fd(po)?;
        let map = dofs.free.iter().map(|&t| po.position(t).expect("free coefficient inside FD set")).collect();
        Ok(FreeFd { fd, map })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.fd.len()];
        for (&m, &v) in self.map.iter().zip(x) {
            s[m] = v;
        }
        let mut y = vec![0.0; s.len()];
        self.fd.apply_into(&s, &mut y);
        self.map.iter().map(|&m| y[m]).collect()
    }
}

/// Exact `A_ΔΔ` solver. Large patches use a sparse Cholesky factor that
/// eliminates the interior coefficients first, so its leading block doubles as
/// a factor of `A_II` and the Schur complements need no factorization of their own.
#[derive(Clone, Debug)]
pub enum DeltaFactor {
    Plain(Factorization),
    InteriorFirst {
        chol: SparseCholesky,
        /// Δ position of each interior coefficient, in `PatchDofs::interior` order.
        interior: Vec<usize>,
    },
}

impl DeltaFactor {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        match self {
            DeltaFactor::Plain(f) => f.solve_in_place(&mut x),
            DeltaFactor::InteriorFirst { chol, .. } => chol.solve_in_place(&mut x),
        }
        x
    }

    /// `A_II⁻¹ b` when the factor provides it.
    pub fn solve_interior(&self, b: &[f64]) -> Option<Vec<f64>> {
        let DeltaFactor::InteriorFirst { chol, interior } = self else { return None };
        let mut x = vec![0.0; chol.dim()];
        for (&d, &v) in interior.iter().zip(b) {
            x[d] = v;
        }
        chol.solve_leading_in_place(&mut x, interior.len());
        Some(interior.iter().map(|&d| x[d]).collect())
    }

    /// Entries of the stored factor, when sparse.
    pub fn factor_len(&self) -> Option<usize> {
        match self {
            DeltaFactor::InteriorFirst { chol, .. } => Some(chol.factor_len()),
            DeltaFactor::Plain(Factorization::SparseCholesky(c)) => Some(c.factor_len()),
            DeltaFactor::Plain(_) => None,
        }
    }
}

/// Factorizes `A_ΔΔ`; `None` for an empty Δ set.
pub fn factorize_delta(local: &LocalSystem, dofs: &PatchDofs) -> Result<Option<DeltaFactor>> {
    if dofs.delta.is_empty() {
        return Ok(None);
    }
    let a_dd = local.matrix.submatrix(&dofs.delta, &dofs.delta);
    if a_dd.bandwidth() <= BANDED_LIMIT || dofs.interior.is_empty() {
        return factorize(MatrixRef::Sparse(&a_dd), false).map(|f| Some(DeltaFactor::Plain(f)));
    }
    let dmap = dofs.delta_map();
    let interior: Vec<usize> = dofs.interior.iter().map(|&f| dmap[f].expect("interior coefficient in Δ")).collect();
    let order = interior_first_order(local, dofs, &dmap);
    let chol = SparseCholesky::with_order(&a_dd, &order)?;
    Ok(Some(DeltaFactor::InteriorFirst { chol, interior }))
}

/// Δ positions with the interior in nested-dissection order, then the
/// remaining interface coefficients.
fn interior_first_order(local: &LocalSystem, dofs: &PatchDofs, dmap: &[Option<usize>]) -> Vec<usize> {
    let [n1, n2] = dofs.dims;
    let coord = |f: usize| (dofs.free[f] / n2, dofs.free[f] % n2);
    let mut width = 1;
    for f in 0..local.dim() {
        let (i, j) = coord(f);
        for (g, _) in local.matrix.row(f) {
            let (k, l) = coord(g);
            width = width.max(i.abs_diff(k)).max(j.abs_diff(l));
        }
    }
    let mut is_interior = vec![false; dofs.num_free()];
    for &f in &dofs.interior {
        is_interior[f] = true;
    }
    let mut order: Vec<usize> = grid_nested_dissection(n1, n2, width)
        .into_iter()
        .filter_map(|t| dofs.free_pos[t])
        .filter(|&f| is_interior[f])
        .map(|f| dmap[f].expect("interior coefficient in Δ"))
        .collect();
    order.extend(dofs.delta.iter().filter(|&&f| !is_interior[f]).map(|&f| dmap[f].expect("Δ coefficient")));
    order
}

#[derive(Clone, Debug)]
pub enum InteriorSolve {
    Own(Factorization),
    Shared(Arc<DeltaFactor>),
}

/// Schur complement onto the non-Dirichlet boundary coefficients, computed by
/// eliminating the interior.
#[derive(Clone, Debug)]
pub enum SchurSolver {
    /// Parameter-domain `Â` with an FD interior solve.
    Parameter {
        po: ParameterOperator,
        /// `None` when the patch has no interior coefficients.
        interior_fd: Option<FdSolver>,
        /// FD-set positions of the Γ coefficients (free order) and of the interior.
        gamma: Vec<usize>,
        interior: Vec<usize>,
    },
    /// Physical `A` with a factorized `A_II`.
    Physical {
        a_ii: Option<InteriorSolve>,
        gamma: Vec<usize>,
        interior: Vec<usize>,
    },
}

impl SchurSolver {
    pub fn parameter(po: &ParameterOperator, dofs: &PatchDofs) -> Result<Self> {
        let interior_fd = if dofs.interior.is_empty() { None } else { Some(build_interior_fd(po)?) };
        let pos = |f: &usize| po.position(dofs.free[*f]).expect("free coefficient inside FD set");
        Ok(SchurSolver::Parameter {
            po: po.clone(),
            interior_fd,
            gamma: dofs.gamma.iter().map(pos).collect(),
            interior: dofs.interior.iter().map(pos).collect(),
        })
    }

    /// Reuses `delta` for the interior solves when it was built interior-first.
    pub fn physical(local: &LocalSystem, dofs: &PatchDofs, delta: Option<&Arc<DeltaFactor>>) -> Result<Self> {
        let a_ii = if dofs.interior.is_empty() {
            None
        } else if let Some(f) = delta.filter(|f| matches!(***f, DeltaFactor::InteriorFirst { .. })) {
            Some(InteriorSolve::Shared(Arc::clone(f)))
        } else {
            let m = local.matrix.submatrix(&dofs.interior, &dofs.interior);
            Some(InteriorSolve::Own(factorize(MatrixRef::Sparse(&m), false)?))
        };
        Ok(SchurSolver::Physical {
            a_ii,
            gamma: dofs.gamma.clone(),
            interior: dofs.interior.clone(),
        })
    }

    pub fn gamma_len(&self) -> usize {
        match self {
            SchurSolver::Parameter { gamma, .. } | SchurSolver::Physical { gamma, .. } => gamma.len(),
        }
    }

    /// `S x_Γ = (A E x)_Γ` with `E` the discrete harmonic extension; `a` is the
    /// patch's free stiffness matrix (used by the physical variant).
    pub fn apply(&self, a: &CsrMatrix, x: &[f64], clock: &ApplyClock) -> Vec<f64> {
        match self {
            SchurSolver::Parameter { po, interior_fd, gamma, interior } => {
                let stiff = |u: &[f64]| po.apply_stiffness(u).expect("FD-set length");
                harmonic_apply(po.len(), gamma, interior, x, stiff, |z| {
                    clock.time(|| interior_fd.as_ref().expect("nonempty interior").apply(z).expect("interior length"))
                })
            }
            SchurSolver::Physical { a_ii, gamma, interior } => {
                harmonic_apply(a.nrows(), gamma, interior, x, |u| a.matvec(u), |z| {
                    clock.time(|| match a_ii.as_ref().expect("nonempty interior") {
                        InteriorSolve::Own(f) => f.solve(z),
                        InteriorSolve::Shared(f) => f.solve_interior(z).expect("interior-first factor"),
                    })
                })
            }
        }
    }
}

fn harmonic_apply(
    n: usize,
    gamma: &[usize],
    interior: &[usize],
    x: &[f64],
    apply: impl Fn(&[f64]) -> Vec<f64>,
    solve_ii: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let mut u = vec![0.0; n];
    for (&g, &v) in gamma.iter().zip(x) {
        u[g] = v;
    }
    if interior.is_empty() {
        let y = apply(&u);
        return gamma.iter().map(|&g| y[g]).collect();
    }
    let y = apply(&u);
    let z: Vec<f64> = interior.iter().map(|&i| y[i]).collect();
    let w = solve_ii(&z);
    for (&i, &v) in interior.iter().zip(&w) {
        u[i] = -v;
    }
    let y = apply(&u);
    gamma.iter().map(|&g| y[g]).collect()
}
