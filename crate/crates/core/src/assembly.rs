//! Patch-local Galerkin assembly for `-Δu = f` and the parameter-domain
//! Kronecker operators used by the fast-diagonalization preconditioners.

use faer::linalg::matmul::matmul;
use faer::reborrow::ReborrowMut;
use faer::{Accum, MatMut, MatRef, Par};

use crate::error::{check_len, Error, Result};
use crate::geometry::{MultiPatch, Patch};
use crate::linalg::{kron_apply_into, CsrMatrix, DenseMatrix};
use crate::splines::{assemble_1d, gauss_rule, trim, Matrices1D, SplineSpace1D};

/// Stiffness matrix and load vector of one patch on a subset of its tensor coefficients.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Tensor index of each row.
    pub index: Vec<usize>,
}

impl LocalSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Keeps the rows/columns at positions `keep` (homogeneous Dirichlet elimination).
    pub fn restrict(&self, keep: &[usize]) -> LocalSystem {
        LocalSystem {
            matrix: self.matrix.submatrix(keep, keep),
            rhs: keep.iter().map(|&i| self.rhs[i]).collect(),
            index: keep.iter().map(|&i| self.index[i]).collect(),
        }
    }
}

/// Per-direction basis data at every quadrature point of every element.
struct DirectionTable {
    // per element: first active index; per (element, qp): p+1 values/derivatives, point, weight
    first: Vec<usize>,
    points: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    ders: Vec<f64>,
    nq: usize,
    nb: usize,
}

impl DirectionTable {
    fn new(space: &SplineSpace1D, nq: usize) -> Self {
        let rule = gauss_rule(nq).expect("quadrature size in range");
        let nb = space.degree() + 1;
        let bps = space.breakpoints();
        let ne = bps.len() - 1;
        let mut t = DirectionTable {
            first: Vec::with_capacity(ne),
            points: Vec::with_capacity(ne * nq),
            weights: Vec::with_capacity(ne * nq),
            values: Vec::with_capacity(ne * nq * nb),
            ders: Vec::with_capacity(ne * nq * nb),
            nq,
            nb,
        };
        for el in bps.windows(2) {
            let mut first = None;
            for (x, w) in rule.mapped(el[0], el[1]) {
                let (f, v, d) = space.eval_with_derivative(x);
                debug_assert!(first.is_none() || first == Some(f));
                first = Some(f);
                t.points.push(x);
                t.weights.push(w);
                t.values.extend_from_slice(&v);
                t.ders.extend_from_slice(&d);
            }
            t.first.push(first.unwrap());
        }
        t
    }

    fn num_elements(&self) -> usize {
        self.first.len()
    }

    #[inline]
    fn val(&self, e: usize, q: usize, a: usize) -> f64 {
        self.values[(e * self.nq + q) * self.nb + a]
    }

    #[inline]
    fn der(&self, e: usize, q: usize, a: usize) -> f64 {
        self.ders[(e * self.nq + q) * self.nb + a]
    }
}

/// Assembles `A[a][b] = ∫ ∇φ_a·∇φ_b` and `f[a] = ∫ f φ_a` over the patch, on
/// all tensor coefficients (no boundary conditions applied).
pub fn assemble_local(patch: &Patch, rhs_fn: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<LocalSystem> {
    let p = [patch.spaces[0].degree(), patch.spaces[1].degree()];
    let tx = DirectionTable::new(&patch.spaces[0], p[0] + 1);
    let ty = DirectionTable::new(&patch.spaces[1], p[1] + 1);
    let [nx, ny] = patch.dims();
    let (bx, by) = (2 * p[0] + 1, 2 * p[1] + 1);
    let stride = bx * by;
    // band[t * stride + (di + p0) * by + (dj + p1)] couples (i, j) with (i + di, j + dj)
    let mut band = vec![0.0; nx * ny * stride];
    let mut rhs = vec![0.0; nx * ny];
    let nb = tx.nb * ty.nb;
    let nq = tx.nq * ty.nq;
    let mut gx = vec![0.0; nq * nb];
    let mut gy = vec![0.0; nq * nb];
    let mut elem = vec![0.0; nb * nb];
    let mut fq = vec![0.0; nq];
    let mut nvals = vec![0.0; nq * nb];
    for ex in 0..tx.num_elements() {
        for ey in 0..ty.num_elements() {
            for qx in 0..tx.nq {
                for qy in 0..ty.nq {
                    let q = qx * ty.nq + qy;
                    let (xi, eta) = (tx.points[ex * tx.nq + qx], ty.points[ey * ty.nq + qy]);
                    let j = patch.map.jacobian(xi, eta);
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    if !(det > 0.0) {
                        return Err(Error::Geometry(format!(
                            "non-positive Jacobian determinant {det:e} at ({xi}, {eta})"
                        )));
                    }
                    let w = tx.weights[ex * tx.nq + qx] * ty.weights[ey * ty.nq + qy] * det;
                    let sw = w.sqrt();
                    // J⁻ᵀ = (1/det) [[j11, -j10], [-j01, j00]]
                    let inv = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
                    let x = patch.map.eval(xi, eta);
                    fq[q] = w * rhs_fn(x[0], x[1]);
                    for a in 0..tx.nb {
                        let (va, da) = (tx.val(ex, qx, a), tx.der(ex, qx, a));
                        for b in 0..ty.nb {
                            let (vb, db) = (ty.val(ey, qy, b), ty.der(ey, qy, b));
                            let (g0, g1) = (da * vb, va * db);
                            let idx = q * nb + a * ty.nb + b;
                            gx[idx] = sw * (inv[0][0] * g0 + inv[0][1] * g1);
                            gy[idx] = sw * (inv[1][0] * g0 + inv[1][1] * g1);
                            nvals[idx] = va * vb;
                        }
                    }
                }
            }
            {
                let gxv = MatRef::from_row_major_slice(&gx, nq, nb);
                let gyv = MatRef::from_row_major_slice(&gy, nq, nb);
                let mut ev = MatMut::from_row_major_slice_mut(&mut elem, nb, nb);
                matmul(ev.rb_mut(), Accum::Replace, gxv.transpose(), gxv, 1.0, Par::Seq);
                matmul(ev, Accum::Add, gyv.transpose(), gyv, 1.0, Par::Seq);
            }
            let (fx, fy) = (tx.first[ex], ty.first[ey]);
            for a in 0..nb {
                let (ia, ja) = (fx + a / ty.nb, fy + a % ty.nb);
                let row = (ia * ny + ja) * stride;
                let mut fa = 0.0;
                for q in 0..nq {
                    fa += fq[q] * nvals[q * nb + a];
                }
                rhs[ia * ny + ja] += fa;
                for b in 0..nb {
                    let (ib, jb) = (fx + b / ty.nb, fy + b % ty.nb);
                    let di = ib + p[0] - ia;
                    let dj = jb + p[1] - ja;
                    band[row + di * by + dj] += elem[a * nb + b];
                }
            }
        }
    }
    let matrix = band_to_csr(&band, nx, ny, p);
    Ok(LocalSystem {
        matrix,
        rhs,
        index: (0..nx * ny).collect(),
    })
}

fn band_to_csr(band: &[f64], nx: usize, ny: usize, p: [usize; 2]) -> CsrMatrix {
    let (bx, by) = (2 * p[0] + 1, 2 * p[1] + 1);
    let stride = bx * by;
    let mut row_ptr = Vec::with_capacity(nx * ny + 1);
    let mut col_idx = Vec::with_capacity(nx * ny * stride);
    let mut values = Vec::with_capacity(nx * ny * stride);
    row_ptr.push(0);
    for i in 0..nx {
        for j in 0..ny {
            let row = (i * ny + j) * stride;
            for di in 0..bx {
                let ic = i + di;
                if ic < p[0] || ic - p[0] >= nx {
                    continue;
                }
                for dj in 0..by {
                    let jc = j + dj;
                    if jc < p[1] || jc - p[1] >= ny {
                        continue;
                    }
                    col_idx.push(((ic - p[0]) * ny + (jc - p[1])) as u32);
                    values.push(band[row + di * by + dj]);
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    CsrMatrix::from_parts(nx * ny, nx * ny, row_ptr, col_idx, values).expect("band pattern is sorted")
}

/// Parameter-domain stiffness `Â = K_ξ⊗M_η + M_ξ⊗K_η` and mass `M̂ = M_ξ⊗M_η`
/// on the tensor index set left after trimming Dirichlet sides, with the
/// rank-one weight `γ` of `Â_M = Â + γ M̂ e eᵀ M̂`.
#[derive(Clone, Debug)]
pub struct ParameterOperator {
    pub dirs: [Matrices1D; 2],
    /// `[direction][0 = left, 1 = right]` ends removed.
    pub trimmed: [[bool; 2]; 2],
    pub gamma: f64,
    /// Untrimmed per-direction dimensions.
    pub full_dims: [usize; 2],
}

/// Builds the operator for a patch with Dirichlet sides `[West, East, South, North]`.
///
/// `γ = 1` for patches without any Dirichlet side, `0` otherwise.
pub fn parameter_operator(patch: &Patch, dirichlet_sides: [bool; 4]) -> Result<ParameterOperator> {
    let trimmed = [[dirichlet_sides[0], dirichlet_sides[1]], [dirichlet_sides[2], dirichlet_sides[3]]];
    let gamma = if dirichlet_sides.iter().any(|&d| d) { 0.0 } else { 1.0 };
    parameter_operator_with(patch, trimmed, gamma)
}


fn parameter_operator_with(patch: &Patch, trimmed: [[bool; 2]; 2], gamma: f64) -> Result<ParameterOperator> {
    let dirs = [0, 1].map(|d| trim(&assemble_1d(&patch.spaces[d]), trimmed[d][0], trimmed[d][1]));
    let [dx, dy] = dirs;
    Ok(ParameterOperator {
        dirs: [dx?, dy?],
        trimmed,
        gamma,
        full_dims: patch.dims(),
    })
}

impl ParameterOperator {
    /// Interior block `Â_II`: every remaining end trimmed, `γ = 0`.
    pub fn interior(&self) -> Result<ParameterOperator> {
        let mut dirs = self.dirs.clone();
        for d in 0..2 {
            dirs[d] = trim(&dirs[d], !self.trimmed[d][0], !self.trimmed[d][1])?;
        }
        Ok(ParameterOperator {
            dirs,
            trimmed: [[true; 2]; 2],
            gamma: 0.0,
            full_dims: self.full_dims,
        })
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.dirs[0].dim(), self.dirs[1].dim()]
    }

    pub fn len(&self) -> usize {
        self.dirs[0].dim() * self.dirs[1].dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tensor index (in the untrimmed patch numbering) of operator position `pos`.
    pub fn tensor_index(&self, pos: usize) -> usize {
        let ny = self.dirs[1].dim();
        let (i, j) = (pos / ny, pos % ny);
        let (oi, oj) = (usize::from(self.trimmed[0][0]), usize::from(self.trimmed[1][0]));
        (i + oi) * self.full_dims[1] + (j + oj)
    }

    /// Inverse of [`Self::tensor_index`].
    pub fn position(&self, tensor: usize) -> Option<usize> {
        let (i, j) = (tensor / self.full_dims[1], tensor % self.full_dims[1]);
        let (oi, oj) = (usize::from(self.trimmed[0][0]), usize::from(self.trimmed[1][0]));
        let [nx, ny] = self.dims();
        if i < oi || j < oj || i - oi >= nx || j - oj >= ny {
            None
        } else {
            Some((i - oi) * ny + (j - oj))
        }
    }

    /// Coefficients of the constant function 1.
    pub fn e_h(&self) -> Vec<f64> {
        vec![1.0; self.len()]
    }

    pub fn apply_stiffness(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), x.len())?;
        let n = x.len();
        let (mut out, mut t1, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let [dx, dy] = &self.dirs;
        kron_apply_into(&dx.stiffness, &dy.mass, x, &mut out, &mut tmp);
        kron_apply_into(&dx.mass, &dy.stiffness, x, &mut t1, &mut tmp);
        out.iter_mut().zip(&t1).for_each(|(o, t)| *o += t);
        Ok(out)
    }

    pub fn apply_mass(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), x.len())?;
        let n = x.len();
        let (mut out, mut tmp) = (vec![0.0; n], vec![0.0; n]);
        kron_apply_into(&self.dirs[0].mass, &self.dirs[1].mass, x, &mut out, &mut tmp);
        Ok(out)
    }

    /// `Â_M x = Â x + γ (M̂ e)(eᵀ M̂ x)`.
    pub fn apply_corrected(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.apply_stiffness(x)?;
        if self.gamma != 0.0 {
            let me = self.apply_mass(&self.e_h())?;
            let s = self.gamma * crate::linalg::dot(&me, x);
            y.iter_mut().zip(&me).for_each(|(yi, mi)| *yi += s * mi);
        }
        Ok(y)
    }

    pub fn dense_stiffness(&self) -> DenseMatrix {
        let [dx, dy] = &self.dirs;
        let mut a = dx.stiffness.kron(&dy.mass);
        a.add_scaled(1.0, &dx.mass.kron(&dy.stiffness)).expect("equal shapes");
        a
    }

    pub fn dense_mass(&self) -> DenseMatrix {
        self.dirs[0].mass.kron(&self.dirs[1].mass)
    }

    pub fn dense_corrected(&self) -> DenseMatrix {
        let mut a = self.dense_stiffness();
        if self.gamma != 0.0 {
            let me = self.dense_mass().matvec(&self.e_h());
            let n = me.len();
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] += self.gamma * me[i] * me[j];
                }
            }
        }
        a
    }
}

/// L² and H¹-seminorm errors of per-patch tensor coefficient vectors against an
/// exact solution and its gradient.
pub fn h1_l2_error(
    mp: &MultiPatch,
    coefs: &[Vec<f64>],
    exact: &dyn Fn(f64, f64) -> f64,
    exact_grad: &dyn Fn(f64, f64) -> [f64; 2],
) -> Result<(f64, f64)> {
    check_len(mp.num_patches(), coefs.len())?;
    let (mut l2, mut h1) = (0.0, 0.0);
    for (patch, c) in mp.patches().iter().zip(coefs) {
        check_len(patch.num_coefs(), c.len())?;
        let p = [patch.spaces[0].degree(), patch.spaces[1].degree()];
        let tx = DirectionTable::new(&patch.spaces[0], p[0] + 3);
        let ty = DirectionTable::new(&patch.spaces[1], p[1] + 3);
        for ex in 0..tx.num_elements() {
            for ey in 0..ty.num_elements() {
                for qx in 0..tx.nq {
                    for qy in 0..ty.nq {
                        let (xi, eta) = (tx.points[ex * tx.nq + qx], ty.points[ey * ty.nq + qy]);
                        let j = patch.map.jacobian(xi, eta);
                        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                        let w = tx.weights[ex * tx.nq + qx] * ty.weights[ey * ty.nq + qy] * det.abs();
                        let (mut u, mut g0, mut g1) = (0.0, 0.0, 0.0);
                        for a in 0..tx.nb {
                            for b in 0..ty.nb {
                                let cv = c[patch.index(tx.first[ex] + a, ty.first[ey] + b)];
                                let (va, da) = (tx.val(ex, qx, a), tx.der(ex, qx, a));
                                let (vb, db) = (ty.val(ey, qy, b), ty.der(ey, qy, b));
                                u += cv * va * vb;
                                g0 += cv * da * vb;
                                g1 += cv * va * db;
                            }
                        }
                        let gx = (j[1][1] * g0 - j[1][0] * g1) / det;
                        let gy = (-j[0][1] * g0 + j[0][0] * g1) / det;
                        let x = patch.map.eval(xi, eta);
                        let ge = exact_grad(x[0], x[1]);
                        l2 += w * (u - exact(x[0], x[1])).powi(2);
                        h1 += w * ((gx - ge[0]).powi(2) + (gy - ge[1]).powi(2));
                    }
                }
            }
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{catalog, GeometryMap};
    use crate::splines::make_space;

    fn square_patch(p: usize, r: usize, map: GeometryMap) -> Patch {
        Patch {
            map,
            spaces: [make_space(p, r, 0).unwrap(), make_space(p, r, 0).unwrap()],
        }
    }

    #[test]
    fn identity_map_gives_kronecker_sum() {
        let patch = &catalog("square1x1").unwrap().discretize(2, 2).unwrap().patches()[0].clone();
        let sys = assemble_local(patch, &|_, _| 1.0).unwrap();
        let po = parameter_operator(patch, [false; 4]).unwrap();
        let dense = po.dense_stiffness();
        let a = sys.matrix.to_dense();
        for (x, y) in a.as_slice().iter().zip(dense.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        // ∫ φ_a = (M̂ e)_a for f = 1
        let me = po.apply_mass(&po.e_h()).unwrap();
        for (x, y) in sys.rhs.iter().zip(&me) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_in_kernel_and_symmetry() {
        let mp = catalog("annulus32").unwrap().discretize(3, 1).unwrap();
        let sys = assemble_local(&mp.patches()[5], &|_, _| 0.0).unwrap();
        let ones = vec![1.0; sys.dim()];
        assert!(crate::linalg::max_abs(&sys.matrix.matvec(&ones)) < 1e-12 * sys.matrix.max_abs());
        assert!(sys.matrix.asymmetry() <= 1e-13 * sys.matrix.max_abs());
    }

    #[test]
    fn dilation_invariance() {
        let unit = square_patch(2, 1, GeometryMap::Bilinear { corners: [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] });
        let scaled = square_patch(
            2,
            1,
            GeometryMap::Bilinear { corners: [[3.0, 1.0], [6.0, 1.0], [3.0, 4.0], [6.0, 4.0]] },
        );
        let a = assemble_local(&unit, &|_, _| 0.0).unwrap().matrix;
        let b = assemble_local(&scaled, &|_, _| 0.0).unwrap().matrix;
        assert_eq!(a.nnz(), b.nnz());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn inverted_map_rejected() {
        let bad = square_patch(1, 0, GeometryMap::Bilinear { corners: [[1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 1.0]] });
        assert!(matches!(assemble_local(&bad, &|_, _| 0.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn gamma_rule_and_mass_of_constant() {
        let patch = square_patch(2, 1, GeometryMap::Bilinear { corners: [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] });
        let floating = parameter_operator(&patch, [false; 4]).unwrap();
        assert_eq!(floating.gamma, 1.0);
        let e = floating.e_h();
        let ete: f64 = crate::linalg::dot(&e, &floating.apply_mass(&e).unwrap());
        assert!((ete - 1.0).abs() < 1e-14);
        let touching = parameter_operator(&patch, [false, false, true, false]).unwrap();
        assert_eq!(touching.gamma, 0.0);
        assert_eq!(touching.dims(), [4, 3]);
        assert_eq!(touching.tensor_index(0), 1);
        assert_eq!(touching.position(1), Some(0));
        assert_eq!(touching.position(0), None);
        let p1 = square_patch(1, 0, patch.map.clone());
        assert!(parameter_operator(&p1, [true; 4]).is_err());
    }

    #[test]
    fn zero_error_for_zero_solution() {
        let mp = catalog("square2x2").unwrap().discretize(2, 1).unwrap();
        let coefs: Vec<Vec<f64>> = mp.patches().iter().map(|p| vec![0.0; p.num_coefs()]).collect();
        let (l2, h1) = h1_l2_error(&mp, &coefs, &|_, _| 0.0, &|_, _| [0.0, 0.0]).unwrap();
        assert_eq!((l2, h1), (0.0, 0.0));
    }
}
