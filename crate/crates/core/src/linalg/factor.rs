//! Direct factorizations. Dense and sparse kernels come from `faer`; the band
//! Cholesky for narrow patch matrices is local.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::linalg::triangular_solve as dense_tri;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::supernodal::SupernodalLltRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_lower_triangular_transpose_in_place,
};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, MatMut, MatRef, Par, Side};

use crate::error::{check_len, Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::sparse::CsrMatrix;

/// Dense Cholesky `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    l: DenseMatrix,
}

impl DenseCholesky {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        a.ensure_square()?;
        if !a.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::Factorization("non-finite entry".into()));
        }
        let llt = a.view().llt(Side::Lower).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lf = llt.L();
        let l = DenseMatrix::from_fn(a.nrows(), a.nrows(), |i, j| if j <= i { lf[(i, j)] } else { 0.0 });
        Ok(DenseCholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        let n = y.len();
        dense_tri::solve_lower_triangular_in_place(self.l.view(), MatMut::from_column_major_slice_mut(&mut y, n, 1), Par::Seq);
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        let n = x.len();
        dense_tri::solve_upper_triangular_in_place(
            self.l.view().transpose(),
            MatMut::from_column_major_slice_mut(&mut x, n, 1),
            Par::Seq,
        );
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }
}

/// Dense LU with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct DenseLu {
    lu: PartialPivLu<f64>,
}

impl DenseLu {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        a.ensure_square()?;
        let lu = a.view().partial_piv_lu();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let u = lu.U();
        if let Some(k) = (0..a.nrows()).find(|&k| !(u[(k, k)].abs() > 1e-14 * scale)) {
            return Err(Error::Factorization(format!("numerically singular pivot at column {k}")));
        }
        Ok(DenseLu { lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.lu.solve(MatRef::from_column_major_slice(b, b.len(), 1));
        x.col(0).iter().copied().collect()
    }
}

/// Cholesky of a symmetric positive definite band matrix, lower band storage.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // band[i * (bw + 1) + (bw - (i - j))] = L[i][j] for i - bw <= j <= i
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        check_len(n, a.ncols())?;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    band[i * w + bw - (i - j)] = v;
                }
            }
        }
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = band[j * w + bw];
            for k in lo..j {
                let ljk = band[j * w + bw - (j - k)];
                d -= ljk * ljk;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Factorization(format!("non-positive pivot {d:e} at row {j}")));
            }
            let d = d.sqrt();
            band[j * w + bw] = d;
            for i in j + 1..(j + bw + 1).min(n) {
                let lo_i = i.saturating_sub(bw);
                let mut s = band[i * w + bw - (i - j)];
                for k in lo_i.max(lo)..j {
                    s -= band[i * w + bw - (i - k)] * band[j * w + bw - (j - k)];
                }
                band[i * w + bw - (i - j)] = s / d;
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + bw - (i - k)] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            x[i] /= self.band[i * w + bw];
            let xi = x[i];
            for k in i.saturating_sub(bw)..i {
                x[k] -= self.band[i * w + bw - (i - k)] * xi;
            }
        }
    }
}

fn to_faer(a: &CsrMatrix) -> SparseColMat<usize, f64> {
    // CSR of A is CSC of Aᵀ; callers pass symmetric matrices or the transpose.
    let col_ptr = a.row_ptr().to_vec();
    let row_idx = a.col_idx().iter().map(|&c| c as usize).collect();
    let symbolic = SymbolicSparseColMat::new_checked(a.ncols(), a.nrows(), col_ptr, None, row_idx);
    SparseColMat::new(symbolic, a.values().to_vec())
}

/// Sparse Cholesky `P A Pᵀ = L Lᵀ`, ordered by AMD or by a caller-supplied
/// elimination order.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    symbolic: Arc<SymbolicCholesky<usize>>,
    values: Vec<f64>,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Self::build(a, None)
    }

    /// `order[k]` is the row eliminated in step `k`.
    pub fn with_order(a: &CsrMatrix, order: &[usize]) -> Result<Self> {
        check_len(a.nrows(), order.len())?;
        Self::build(a, Some(order))
    }

    fn build(a: &CsrMatrix, order: Option<&[usize]>) -> Result<Self> {
        check_len(a.nrows(), a.ncols())?;
        let n = a.nrows();
        let fail = |e: &dyn std::fmt::Display| Error::Factorization(format!("sparse Cholesky: {e}"));
        let m = to_faer(a);
        let inverse = order.map(|o| {
            let mut inv = vec![usize::MAX; n];
            for (k, &i) in o.iter().enumerate() {
                inv[i] = k;
            }
            inv
        });
        if inverse.as_ref().is_some_and(|inv| inv.contains(&usize::MAX)) {
            return Err(Error::Parameter("elimination order is not a permutation".into()));
        }
        let ordering = match (order, &inverse) {
            (Some(fwd), Some(inv)) => SymmetricOrdering::Custom(PermRef::new_checked(fwd, inv, n)),
            _ => SymmetricOrdering::Amd,
        };
        let symbolic = factorize_symbolic_cholesky(m.symbolic(), Side::Lower, ordering, Default::default())
            .map_err(|e| fail(&format!("{e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let scratch = symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::try_new(scratch).map_err(|e| fail(&format!("{e:?}")))?;
        symbolic
            .factorize_numeric_llt(
                &mut values,
                m.as_ref(),
                Side::Lower,
                Default::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| fail(&format!("{e:?}")))?;
        Ok(SparseCholesky { n, symbolic: Arc::new(symbolic), values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L`.
    pub fn factor_len(&self) -> usize {
        self.values.len()
    }

    fn scratch(&self) -> MemBuffer {
        MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq))
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        if self.n == 0 {
            return;
        }
        let mut mem = self.scratch();
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(x, self.n, 1),
            Par::Seq,
            MemStack::new(&mut mem),
        );
    }

    /// Solves with the leading `m × m` block of `P A Pᵀ`, i.e. with `A`
    /// restricted to the rows eliminated first. `x` is indexed like `A`;
    /// entries outside the block are ignored on input and zero on output.
    pub fn solve_leading_in_place(&self, x: &mut [f64], m: usize) {
        assert!(m <= self.n && x.len() == self.n);
        let fwd: Vec<usize> = match self.symbolic.perm() {
            Some(p) => p.arrays().0.to_vec(),
            None => (0..self.n).collect(),
        };
        let mut y: Vec<f64> = fwd.iter().map(|&i| x[i]).collect();
        y[m..].fill(0.0);
        let mut mem = self.scratch();
        let stack = MemStack::new(&mut mem);
        // forward rows of the block only see earlier columns; zeroing the
        // tail before the backward sweep decouples it from the block
        match self.symbolic.raw() {
            SymbolicCholeskyRaw::Simplicial(sym) => {
                let l = SparseColMatRef::new(sym.factor(), &self.values);
                let mut rhs = MatMut::from_column_major_slice_mut(&mut y, self.n, 1);
                solve_lower_triangular_in_place(l, Conj::No, rhs.as_mut(), Par::Seq);
                rhs.as_mut().subrows_mut(m, self.n - m).fill(0.0);
                solve_lower_triangular_transpose_in_place(l, Conj::No, rhs, Par::Seq);
            }
            SymbolicCholeskyRaw::Supernodal(sym) => {
                let l = SupernodalLltRef::new(sym, &self.values);
                let mut rhs = MatMut::from_column_major_slice_mut(&mut y, self.n, 1);
                l.l_solve_with_conj(Conj::No, rhs.as_mut(), Par::Seq, stack);
                rhs.as_mut().subrows_mut(m, self.n - m).fill(0.0);
                l.l_transpose_solve_with_conj(Conj::No, rhs, Par::Seq, stack);
            }
        }
        x.fill(0.0);
        for (k, &i) in fwd.iter().enumerate().take(m) {
            x[i] = y[k];
        }
    }
}

/// Sparse LU with partial pivoting for general (indefinite) matrices.
#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        check_len(a.nrows(), a.ncols())?;
        let lu = to_faer(&a.transpose())
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("sparse LU: {e}")))?;
        Ok(SparseLu { n: a.nrows(), lu })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        if n > 0 {
            self.lu.solve_in_place(MatMut::from_column_major_slice_mut(x, n, 1));
        }
    }
}

/// Borrowed matrix handed to [`factorize`].
#[derive(Clone, Copy, Debug)]
pub enum MatrixRef<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a CsrMatrix),
}

/// Sparse SPD matrices with half bandwidth at or below this use the band solver.
pub const BANDED_LIMIT: usize = 32;

/// Opaque solve handle.
#[derive(Clone, Debug)]
pub enum Factorization {
    DenseCholesky(DenseCholesky),
    DenseLu(DenseLu),
    Banded(BandedCholesky),
    SparseCholesky(SparseCholesky),
    SparseLu(SparseLu),
}

impl Factorization {
    pub fn dim(&self) -> usize {
        match self {
            Factorization::DenseCholesky(f) => f.dim(),
            Factorization::DenseLu(f) => f.lu.U().nrows(),
            Factorization::Banded(f) => f.n,
            Factorization::SparseCholesky(f) => f.n,
            Factorization::SparseLu(f) => f.n,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "factorization rhs length");
        match self {
            Factorization::DenseCholesky(f) => {
                let y = f.solve(x);
                x.copy_from_slice(&y);
            }
            Factorization::DenseLu(f) => {
                let y = f.solve(x);
                x.copy_from_slice(&y);
            }
            Factorization::Banded(f) => f.solve_in_place(x),
            Factorization::SparseCholesky(f) => f.solve_in_place(x),
            Factorization::SparseLu(f) => f.solve_in_place(x),
        }
    }
}

/// Factorizes a square nonsingular matrix.
///
/// Symmetric positive definite input (`symmetric_indefinite = false`) goes to a
/// Cholesky kernel: banded when the half bandwidth is at most [`BANDED_LIMIT`],
/// supernodal sparse otherwise. Indefinite input is handled by pivoted LU.
pub fn factorize(a: MatrixRef<'_>, symmetric_indefinite: bool) -> Result<Factorization> {
    match (a, symmetric_indefinite) {
        (MatrixRef::Dense(d), false) => DenseCholesky::new(d).map(Factorization::DenseCholesky),
        (MatrixRef::Dense(d), true) => DenseLu::new(d).map(Factorization::DenseLu),
        (MatrixRef::Sparse(s), false) => {
            if s.bandwidth() <= BANDED_LIMIT {
                BandedCholesky::new(s).map(Factorization::Banded)
            } else {
                SparseCholesky::new(s).map(Factorization::SparseCholesky)
            }
        }
        (MatrixRef::Sparse(s), true) => SparseLu::new(s).map(Factorization::SparseLu),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_round_trip() {
        let id = DenseMatrix::identity(4);
        for indefinite in [false, true] {
            let f = factorize(MatrixRef::Dense(&id), indefinite).unwrap();
            assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn discrete_green_function_column() {
        // inverse of tridiag(-1, 2, -1): (A⁻¹)_{i1} = (n + 1 - i) / (n + 1), i 1-based
        let n = 9;
        let a = laplace_1d(n);
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let exact: Vec<f64> = (1..=n).map(|i| (n + 1 - i) as f64 / (n + 1) as f64).collect();
        for f in [
            factorize(MatrixRef::Sparse(&a), false).unwrap(),
            Factorization::SparseCholesky(SparseCholesky::new(&a).unwrap()),
            factorize(MatrixRef::Sparse(&a), true).unwrap(),
            factorize(MatrixRef::Dense(&a.to_dense()), false).unwrap(),
        ] {
            let x = f.solve(&e1);
            for (g, w) in x.iter().zip(&exact) {
                assert!((g - w).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn indefinite_pivot_rejected_by_cholesky() {
        let a = DenseMatrix::from_diag(&[1.0, -2.0]);
        assert!(factorize(MatrixRef::Dense(&a), false).is_err());
        let x = factorize(MatrixRef::Dense(&a), true).unwrap().solve(&[1.0, 1.0]);
        assert_eq!(x, vec![1.0, -0.5]);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            factorize(MatrixRef::Dense(&a), true),
            Err(Error::Factorization(_))
        ));
    }

    fn laplace_2d(m: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                t.push((k, k, 4.0 + 0.01 * k as f64));
                for (di, dj) in [(1, 0), (0, 1)] {
                    if i + di < m && j + dj < m {
                        let l = (i + di) * m + j + dj;
                        t.push((k, l, -1.0));
                        t.push((l, k, -1.0));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(m * m, m * m, &t).unwrap()
    }

    #[test]
    fn custom_order_and_leading_block() {
        let mut kinds = Vec::new();
        for m in [12, 70] {
            kinds.push(leading_block_case(m));
        }
        assert_eq!(kinds, [false, true], "expected one simplicial and one supernodal factor");
    }

    /// Returns whether the factor came out supernodal.
    fn leading_block_case(m: usize) -> bool {
        let a = laplace_2d(m);
        let n = a.nrows();
        // a scattered subset first, the rest afterwards
        let (lead, rest): (Vec<usize>, Vec<usize>) = (0..n).partition(|&k| k % 3 != 1);
        let order: Vec<usize> = lead.iter().rev().chain(&rest).copied().collect();
        let f = SparseCholesky::with_order(&a, &order).unwrap();
        let amd = SparseCholesky::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let (mut x1, mut x2) = (b.clone(), b.clone());
        f.solve_in_place(&mut x1);
        amd.solve_in_place(&mut x2);
        assert!(x1.iter().zip(&x2).all(|(u, v)| (u - v).abs() < 1e-12));

        let sub = a.submatrix(&lead, &lead).to_dense();
        let want = DenseLu::new(&sub).unwrap().solve(&lead.iter().map(|&k| b[k]).collect::<Vec<_>>());
        let mut x = b.clone();
        f.solve_leading_in_place(&mut x, lead.len());
        for (&k, w) in lead.iter().zip(&want) {
            assert!((x[k] - w).abs() < 1e-11);
        }
        assert!(rest.iter().all(|&k| x[k] == 0.0));
        assert!(SparseCholesky::with_order(&a, &vec![0; n]).is_err());
        matches!(f.symbolic.raw(), SymbolicCholeskyRaw::Supernodal(_))
    }
}
