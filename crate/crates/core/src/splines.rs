//! Univariate B-spline spaces on (0, 1) with open knot vectors.
//!
//! Everything tensor-product later on is built from the objects here: the
//! Cox–de Boor evaluation, Gauss–Legendre rules, and the 1D stiffness and mass
//! matrices that become the Kronecker factors of the parameter-domain operators.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Open knot vector with simple interior knots.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Validates the open, maximally smooth structure on [0, 1].
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Parameter("spline degree must be at least 1".into()));
        }
        let m = knots.len();
        if m < 2 * (degree + 1) {
            return Err(Error::Parameter(format!("{m} knots are too few for degree {degree}")));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Parameter("knots must be non-decreasing".into()));
        }
        if knots[..=degree].iter().any(|&k| k != 0.0) || knots[m - degree - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::Parameter("knot vector must be open on [0, 1]".into()));
        }
        let interior = &knots[degree + 1..m - degree - 1];
        if interior.iter().any(|&k| k <= 0.0 || k >= 1.0) || interior.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("interior knots must be simple and inside (0, 1)".into()));
        }
        Ok(KnotVector { degree, knots })
    }

    pub fn open(degree: usize, interior: &[f64]) -> Result<Self> {
        let mut knots = vec![0.0; degree + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn interior(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.knots.len() - self.degree - 1]
    }

    /// Index `s` of the knot span `[t_s, t_{s+1})` containing `x`; `x = 1` maps to the last span.
    pub fn find_span(&self, x: f64) -> usize {
        let n = self.num_basis();
        let p = self.degree;
        if x >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

/// Spline space of degree `p` and smoothness `C^{p-1}` on (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SplineSpace1D {
    knots: KnotVector,
    level: usize,
    extra_inner: usize,
}

/// Values or derivatives of the `p + 1` basis functions active at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveBasis {
    pub first: usize,
    pub values: Vec<f64>,
}

/// Builds the level-`r` space: `extra_inner` interior knots at level 0, then
/// `r` uniform bisections.
pub fn make_space(p: usize, r: usize, extra_inner: usize) -> Result<SplineSpace1D> {
    if p < 1 {
        return Err(Error::Parameter(format!("degree p = {p} must be >= 1")));
    }
    if extra_inner > 1 {
        return Err(Error::Parameter(format!("extra_inner = {extra_inner} must be 0 or 1")));
    }
    if r > 20 {
        return Err(Error::Parameter(format!("refinement level r = {r} is out of range")));
    }
    let elements = (1usize << r) * (1 + extra_inner);
    // dyadic breakpoints are exact in floating point
    let interior: Vec<f64> = (1..elements).map(|i| i as f64 / elements as f64).collect();
    Ok(SplineSpace1D {
        knots: KnotVector::open(p, &interior)?,
        level: r,
        extra_inner,
    })
}

impl SplineSpace1D {
    pub fn from_knots(knots: KnotVector) -> Self {
        SplineSpace1D {
            knots,
            level: 0,
            extra_inner: 0,
        }
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn dim(&self) -> usize {
        self.knots.num_basis()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn extra_inner(&self) -> usize {
        self.extra_inner
    }

    /// Distinct knot values, `0 = x_0 < … < x_E = 1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.knots.knots.clone();
        b.dedup();
        b
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Largest element length in the parameter domain.
    pub fn mesh_size(&self) -> f64 {
        self.breakpoints().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Values (`deriv_order = 0`) or first derivatives (`1`) of the active basis at `x`.
    pub fn eval_basis(&self, x: f64, deriv_order: usize) -> Result<ActiveBasis> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(x));
        }
        if deriv_order > 1 {
            return Err(Error::Parameter(format!("derivative order {deriv_order} not supported")));
        }
        let span = self.knots.find_span(x);
        let ders = basis_derivatives(&self.knots, span, x, deriv_order);
        Ok(ActiveBasis {
            first: span - self.degree(),
            values: ders.into_iter().nth(deriv_order).unwrap(),
        })
    }

    /// Values and first derivatives in one pass: `(first, values, derivatives)`.
    pub fn eval_with_derivative(&self, x: f64) -> (usize, Vec<f64>, Vec<f64>) {
        let x = x.clamp(0.0, 1.0);
        let span = self.knots.find_span(x);
        let mut d = basis_derivatives(&self.knots, span, x, 1);
        let der = d.pop().unwrap();
        let val = d.pop().unwrap();
        (span - self.degree(), val, der)
    }

    /// Evaluates the spline with coefficients `coefs` at `x`.
    pub fn evaluate(&self, coefs: &[f64], x: f64) -> Result<f64> {
        let b = self.eval_basis(x, 0)?;
        Ok(b.values.iter().enumerate().map(|(i, v)| v * coefs[b.first + i]).sum())
    }
}

/// Cox–de Boor triangular scheme with derivatives up to `nders` on span `span`.
fn basis_derivatives(kv: &KnotVector, span: usize, x: f64, nders: usize) -> Vec<Vec<f64>> {
    let p = kv.degree;
    let u = &kv.knots;
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - u[span + 1 - j];
        right[j] = u[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; p + 1]; nders + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    if nders == 0 {
        return ders;
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=nders {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = p as f64;
    for k in 1..=nders {
        for v in ders[k].iter_mut() {
            *v *= fac;
        }
        fac *= (p - k) as f64;
    }
    ders
}

/// Gauss–Legendre nodes and weights on [−1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

pub fn gauss_rule(n_points: usize) -> Result<QuadratureRule> {
    if !(1..=30).contains(&n_points) {
        return Err(Error::Parameter(format!("{n_points} quadrature points out of range 1..=30")));
    }
    let n = n_points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Stiffness and mass matrices of a 1D space.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrices1D {
    pub stiffness: DenseMatrix,
    pub mass: DenseMatrix,
}

impl Matrices1D {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }
}

/// `K1[i][j] = ∫ b_i' b_j'`, `M1[i][j] = ∫ b_i b_j` over (0, 1), with `p + 1`
/// Gauss points per element.
pub fn assemble_1d(space: &SplineSpace1D) -> Matrices1D {
    let n = space.dim();
    let p = space.degree();
    let rule = gauss_rule(p + 1).expect("degree within quadrature range");
    let mut k = DenseMatrix::zeros(n, n);
    let mut m = DenseMatrix::zeros(n, n);
    for el in space.breakpoints().windows(2) {
        for (x, w) in rule.mapped(el[0], el[1]) {
            let (first, val, der) = space.eval_with_derivative(x);
            for a in 0..=p {
                for b in 0..=p {
                    k[(first + a, first + b)] += w * der[a] * der[b];
                    m[(first + a, first + b)] += w * val[a] * val[b];
                }
            }
        }
    }
    Matrices1D { stiffness: k, mass: m }
}

/// Removes the first and/or last row and column.
pub fn trim(mats: &Matrices1D, drop_left: bool, drop_right: bool) -> Result<Matrices1D> {
    let n = mats.dim();
    let lo = usize::from(drop_left);
    let hi = n - usize::from(drop_right);
    if hi <= lo {
        return Err(Error::Parameter(format!("trimming a {n}-dimensional space leaves nothing")));
    }
    let keep: Vec<usize> = (lo..hi).collect();
    Ok(Matrices1D {
        stiffness: mats.stiffness.select(&keep, &keep),
        mass: mats.mass.select(&keep, &keep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knot_vectors_of_refined_spaces() {
        let s = make_space(1, 0, 0).unwrap();
        assert_eq!(s.knot_vector().knots(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(s.dim(), 2);
        let s = make_space(2, 1, 0).unwrap();
        assert_eq!(s.knot_vector().knots(), &[0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(s.dim(), 4);
        let s = make_space(3, 2, 0).unwrap();
        assert_eq!(s.knot_vector().interior(), &[0.25, 0.5, 0.75]);
        assert_eq!(s.dim(), 7);
        let s = make_space(2, 1, 1).unwrap();
        assert_eq!(s.knot_vector().interior(), &[0.25, 0.5, 0.75]);
        assert_eq!(s.num_elements(), 4);
    }

    #[test]
    fn invalid_parameters() {
        assert!(make_space(0, 1, 0).is_err());
        assert!(make_space(2, 1, 2).is_err());
        assert!(KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.5, 1.0, 1.0]).is_err());
    }

    #[test]
    fn hat_functions() {
        let s = make_space(1, 0, 0).unwrap();
        let b = s.eval_basis(0.5, 0).unwrap();
        assert_eq!(b.first, 0);
        assert_eq!(b.values, vec![0.5, 0.5]);
        let d = s.eval_basis(0.5, 1).unwrap();
        assert_eq!(d.values, vec![-1.0, 1.0]);
        assert!(matches!(s.eval_basis(1.5, 0), Err(Error::Domain(_))));
        assert!(matches!(s.eval_basis(-1e-9, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn endpoint_evaluation_uses_last_span() {
        let s = make_space(3, 2, 0).unwrap();
        let b = s.eval_basis(1.0, 0).unwrap();
        assert_eq!(b.first, s.dim() - 4);
        assert!((b.values[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_small_rules() {
        let g = gauss_rule(1).unwrap();
        assert_eq!(g.nodes, vec![0.0]);
        assert!((g.weights[0] - 2.0).abs() < 1e-15);
        let g = gauss_rule(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((g.nodes[0] + s).abs() < 1e-15 && (g.nodes[1] - s).abs() < 1e-15);
        assert!(g.weights.iter().all(|w| (w - 1.0).abs() < 1e-15));
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(31).is_err());
    }

    #[test]
    fn gauss_exactness() {
        for n in 1..=30 {
            let g = gauss_rule(n).unwrap();
            assert!(g.weights.iter().all(|&w| w > 0.0));
            assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // ∫ x^(2n-2) over [-1, 1] = 2 / (2n - 1)
            let deg = 2 * n - 2;
            let q: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((q - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn linear_single_element_matrices() {
        let m = assemble_1d(&make_space(1, 0, 0).unwrap());
        let k_exact = [1.0, -1.0, -1.0, 1.0];
        let m_exact = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0];
        for i in 0..4 {
            assert!((m.stiffness.as_slice()[i] - k_exact[i]).abs() < 1e-15);
            assert!((m.mass.as_slice()[i] - m_exact[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn trimming() {
        let m = assemble_1d(&make_space(1, 0, 0).unwrap());
        assert!(trim(&m, true, true).is_err());
        assert_eq!(trim(&m, false, false).unwrap(), m);
        // single interior hat on (0,1) with h = 1/2: ∫ φ'² = 4, ∫ φ² = 1/3
        let m = assemble_1d(&make_space(1, 1, 0).unwrap());
        let t = trim(&m, true, true).unwrap();
        assert_eq!(t.dim(), 1);
        assert!((t.stiffness[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((t.mass[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }
}
