//! Kronecker-structured products.

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};

use crate::error::{check_len, Result};
use crate::linalg::dense::DenseMatrix;

/// `(A1 ⊗ A2) x`, with `x[i1 * n2 + i2]` indexing.
///
/// Computed as `A1 X A2ᵀ` on the `n1 × n2` reshape of `x`.
pub fn kron_apply(a1: &DenseMatrix, a2: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a1.ensure_square()?;
    a2.ensure_square()?;
    check_len(a1.ncols() * a2.ncols(), x.len())?;
    let mut out = vec![0.0; x.len()];
    let mut tmp = vec![0.0; x.len()];
    kron_apply_into(a1, a2, x, &mut out, &mut tmp);
    Ok(out)
}

/// Allocation-free variant of [`kron_apply`]; `tmp` must have the length of `x`.
pub fn kron_apply_into(a1: &DenseMatrix, a2: &DenseMatrix, x: &[f64], out: &mut [f64], tmp: &mut [f64]) {
    let (n1, n2) = (a1.ncols(), a2.ncols());
    debug_assert_eq!(x.len(), n1 * n2);
    if n1 == 0 || n2 == 0 {
        return;
    }
    let xv = MatRef::from_row_major_slice(x, n1, n2);
    {
        let t = MatMut::from_row_major_slice_mut(tmp, n1, n2);
        matmul(t, Accum::Replace, xv, a2.view().transpose(), 1.0, Par::Seq);
    }
    let tv = MatRef::from_row_major_slice(tmp, n1, n2);
    let y = MatMut::from_row_major_slice_mut(out, n1, n2);
    matmul(y, Accum::Replace, a1.view(), tv, 1.0, Par::Seq);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factors() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y = kron_apply(&DenseMatrix::identity(2), &DenseMatrix::identity(3), &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn shape_mismatch() {
        assert!(kron_apply(&DenseMatrix::identity(2), &DenseMatrix::identity(3), &[0.0; 5]).is_err());
    }
}
