//! Compressed sparse row storage.

use crate::error::{check_len, Error, Result};
use crate::linalg::dense::DenseMatrix;

/// CSR matrix with sorted, unique column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw parts, validating the sorted-unique invariant.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len(nrows + 1, row_ptr.len())?;
        check_len(col_idx.len(), values.len())?;
        if row_ptr[0] != 0 || row_ptr[nrows] != col_idx.len() {
            return Err(Error::Parameter("inconsistent row pointers".into()));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(Error::Parameter("row pointers not monotone".into()));
            }
            let cols = &col_idx[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c as usize >= ncols) {
                return Err(Error::Parameter(format!("row {i} has unsorted or out-of-range columns")));
            }
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Sums duplicate entries and drops nothing (explicit zeros are kept).
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Parameter(format!("triplet ({i}, {j}) out of range")));
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, 0.0); triplets.len()];
        for &(i, j, v) in triplets {
            entries[fill[i]] = (j as u32, v);
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for i in 0..nrows {
            let row = &mut entries[counts[i]..counts[i + 1]];
            row.sort_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(a: &DenseMatrix, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)].abs() > drop_tol {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t).expect("indices in range")
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column/value pairs of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "csr matvec input length");
        assert_eq!(y.len(), self.nrows, "csr matvec output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let mut s = 0.0;
            for (&c, &v) in self.col_idx[r.clone()].iter().zip(&self.values[r]) {
                s += v * x[c as usize];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Extracts the submatrix on `rows` × `cols` (each given as increasing index lists).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![u32::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k as u32;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in rows {
            let mut row: Vec<(u32, f64)> = self
                .row(i)
                .filter_map(|(c, v)| (col_map[c] != u32::MAX).then(|| (col_map[c], v)))
                .collect();
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: rows.len(),
            ncols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &t).expect("indices in range")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0), (0, 0, -1.0)]).unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![2.0, 4.0]);
    }

    #[test]
    fn submatrix_keeps_order() {
        let d = DenseMatrix::from_fn(4, 4, |i, j| (10 * i + j) as f64);
        let a = CsrMatrix::from_dense(&d, 0.0);
        let s = a.submatrix(&[1, 3], &[0, 2, 3]);
        assert_eq!(s.to_dense(), d.select(&[1, 3], &[0, 2, 3]));
    }

    #[test]
    fn unsorted_parts_rejected() {
        assert!(CsrMatrix::from_parts(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
    }
}
