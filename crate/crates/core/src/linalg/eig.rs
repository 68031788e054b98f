//! Symmetric and generalized symmetric-definite eigensolvers.

use faer::Side;

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::factor::DenseCholesky;

/// Eigenpairs with eigenvalues ascending; eigenvectors are the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Eigendecomposition of a symmetric matrix (lower triangle is read).
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<EigenDecomposition> {
    a.ensure_square()?;
    let n = a.nrows();
    let evd = a
        .view()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    Ok(EigenDecomposition {
        values: order.iter().map(|&i| s[i]).collect(),
        vectors: DenseMatrix::from_fn(n, n, |i, j| u[(i, order[j])]),
    })
}

/// Solves `K u = d M u` for symmetric `K` and symmetric positive definite `M`.
///
/// Returns `U` with `Uᵀ M U = I` and `Uᵀ K U = diag(d)`, `d` ascending.
pub fn generalized_sym_eig(k: &DenseMatrix, m: &DenseMatrix) -> Result<EigenDecomposition> {
    k.ensure_square()?;
    m.ensure_square()?;
    if k.nrows() != m.nrows() {
        return Err(Error::Dimension {
            expected: k.nrows(),
            got: m.nrows(),
        });
    }
    let chol = DenseCholesky::new(m).map_err(|e| Error::Decomposition(format!("mass matrix: {e}")))?;
    let n = k.nrows();
    // C = L⁻¹ K L⁻ᵀ, built column by column, then symmetrized against roundoff
    let mut linv_k = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.solve_lower(&k.column(j));
        linv_k.set_column(j, &col);
    }
    let mut c = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let col = chol.solve_lower(linv_k.row(i));
        c.set_column(i, &col);
    }
    let c = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = symmetric_eigen(&c)?;
    let mut u = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.solve_upper(&eig.vectors.column(j));
        u.set_column(j, &col);
    }
    Ok(EigenDecomposition {
        values: eig.values,
        vectors: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_matches_characteristic_roots() {
        // [[2,1,0],[1,2,1],[0,1,2]] has eigenvalues 2-√2, 2, 2+√2
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        let s = 2f64.sqrt();
        for (got, want) in e.values.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((got - want).abs() < 1e-13);
        }
        // [[4,1,2],[1,3,0],[2,0,5]] roots of λ³-12λ²+42λ-43
        let b = DenseMatrix::from_rows(&[vec![4.0, 1.0, 2.0], vec![1.0, 3.0, 0.0], vec![2.0, 0.0, 5.0]]).unwrap();
        let e = symmetric_eigen(&b).unwrap();
        for l in e.values {
            let charpoly = l * l * l - 12.0 * l * l + 42.0 * l - 43.0;
            assert!(charpoly.abs() < 1e-11, "{charpoly}");
        }
    }

    #[test]
    fn identity_pair() {
        let e = generalized_sym_eig(&DenseMatrix::identity(3), &DenseMatrix::identity(3)).unwrap();
        assert!(e.values.iter().all(|&d| (d - 1.0).abs() < 1e-14));
        let utu = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!((utu.as_slice().iter().zip(DenseMatrix::identity(3).as_slice()))
            .all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn diagonal_pair_gives_signed_permutation() {
        let k = DenseMatrix::from_diag(&[5.0, 0.0, 2.0]);
        let e = generalized_sym_eig(&k, &DenseMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![0.0, 2.0, 5.0]);
        for j in 0..3 {
            let col = e.vectors.column(j);
            let nnz = col.iter().filter(|v| v.abs() > 1e-14).count();
            assert_eq!(nnz, 1);
            assert!(col.iter().any(|v| (v.abs() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn indefinite_mass_rejected() {
        let m = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            generalized_sym_eig(&DenseMatrix::identity(2), &m),
            Err(Error::Decomposition(_))
        ));
    }
}
