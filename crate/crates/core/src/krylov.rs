//! Preconditioned CG and MINRES with zero initial guess and the relative
//! ℓ2-residual stopping rule `‖b − Ax‖ ≤ tol·‖b‖`.

use std::time::Instant;

use faer::Side;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, norm2, CsrMatrix, DenseMatrix};

pub const DEFAULT_OUTER_MAXIT: usize = 5000;
pub const DEFAULT_INNER_MAXIT: usize = 2000;
/// The recurrence-updated residual is replaced by `b − Ax` this often.
const RESIDUAL_REFRESH: usize = 50;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn is_symmetric(&self) -> bool {
        true
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    fn is_symmetric(&self) -> bool {
        self.asymmetry() <= 1e-12 * self.max_abs()
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }

    fn is_symmetric(&self) -> bool {
        self.asymmetry() <= 1e-12 * self.max_abs()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Which residual the stopping test measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StoppingNorm {
    /// Unpreconditioned ℓ2 residual.
    #[default]
    Residual,
    /// Residual in the norm induced by the preconditioner (MINRES only; CG
    /// uses `sqrt(rᵀPr)`).
    Preconditioned,
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub tol: f64,
    pub maxit: usize,
    pub stopping: StoppingNorm,
}

impl KrylovOptions {
    pub fn new(tol: f64, maxit: usize) -> Self {
        KrylovOptions { tol, maxit, stopping: StoppingNorm::Residual }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual after each iteration, in the stopping norm.
    pub residuals: Vec<f64>,
    /// Relative preconditioned residual after each iteration.
    pub precond_residuals: Vec<f64>,
    pub converged: bool,
    /// Extreme Ritz values of the preconditioned operator (CG only).
    pub ritz_bounds: Option<(f64, f64)>,
    pub time: f64,
}

impl SolveReport {
    pub fn condition_estimate(&self) -> Option<f64> {
        self.ritz_bounds.map(|(lo, hi)| hi / lo)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

fn check_dims(op: &dyn LinearOperator, prec: &dyn LinearOperator, b: &[f64]) -> Result<usize> {
    let n = op.dim();
    check_len(n, prec.dim())?;
    check_len(n, b.len())?;
    Ok(n)
}

fn true_residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
}

/// Preconditioned conjugate gradients; also estimates the extreme eigenvalues
/// of the preconditioned operator from the Lanczos tridiagonal.
pub fn pcg(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = check_dims(op, prec, b)?;
    let mut report = SolveReport::default();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::NotSpd(rz));
    }
    let rz0 = rz;
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    while report.iterations < opts.maxit {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NotSpd(pq));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        report.iterations += 1;
        if report.iterations % RESIDUAL_REFRESH == 0 {
            true_residual(op, b, &x, &mut r);
        }
        prec.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            return Err(Error::NotSpd(rz_new));
        }
        let beta = rz_new / rz;
        alphas.push(alpha);
        betas.push(beta);
        rz = rz_new;
        let res = norm2(&r) / bnorm;
        let pres = (rz / rz0).sqrt();
        report.precond_residuals.push(pres);
        let measured = match opts.stopping {
            StoppingNorm::Residual => res,
            StoppingNorm::Preconditioned => pres,
        };
        report.residuals.push(measured);
        if measured <= opts.tol {
            report.converged = true;
            break;
        }
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    report.ritz_bounds = lanczos_bounds(&alphas, &betas);
    report.time = start.elapsed().as_secs_f64();
    Ok((x, report))
}

/// Extreme eigenvalues of the Lanczos matrix built from CG coefficients.
pub fn lanczos_bounds(alphas: &[f64], betas: &[f64]) -> Option<(f64, f64)> {
    let m = alphas.len();
    if m == 0 {
        return None;
    }
    let mut t = faer::Mat::<f64>::zeros(m, m);
    for j in 0..m {
        t[(j, j)] = 1.0 / alphas[j] + if j > 0 { betas[j - 1] / alphas[j - 1] } else { 0.0 };
        if j + 1 < m {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let ev = t.as_ref().self_adjoint_eigenvalues(Side::Lower).ok()?;
    Some((ev[0], ev[m - 1]))
}

/// Preconditioned MINRES (Paige–Saunders) for symmetric, possibly indefinite
/// operators with an SPD preconditioner.
///
/// The unpreconditioned residual is carried alongside the iterate by
/// updating `A·w` together with each search direction `w`.
pub fn pminres(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = check_dims(op, prec, b)?;
    let mut report = SolveReport::default();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = vec![0.0; n];
    prec.apply(&r1, &mut y);
    let b2 = dot(&r1, &y);
    if !(b2 > 0.0) {
        return Err(Error::NotSpd(b2));
    }
    let beta1 = b2.sqrt();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    let (mut w, mut w1, mut w2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut aw, mut aw1, mut aw2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut res = b.to_vec();
    while report.iterations < opts.maxit {
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
        op.apply(&v, &mut av);
        y.copy_from_slice(&av);
        if report.iterations > 0 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec.apply(&r2, &mut y);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            return Err(Error::NotSpd(bb));
        }
        beta = bb.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        // rotate the direction triples: (w2, w1) ← (w1, w); likewise for A·w
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w, &mut w2);
        std::mem::swap(&mut aw1, &mut aw2);
        std::mem::swap(&mut aw, &mut aw2);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            aw[i] = (av[i] - oldeps * aw1[i] - delta * aw2[i]) / gamma;
        }
        axpy(phi, &w, &mut x);
        axpy(-phi, &aw, &mut res);
        report.iterations += 1;
        if report.iterations % RESIDUAL_REFRESH == 0 {
            true_residual(op, b, &x, &mut res);
        }
        let pres = phibar / beta1;
        report.precond_residuals.push(pres);
        let measured = match opts.stopping {
            StoppingNorm::Residual => norm2(&res) / bnorm,
            StoppingNorm::Preconditioned => pres,
        };
        report.residuals.push(measured);
        if measured <= opts.tol {
            report.converged = true;
            break;
        }
        if beta == 0.0 {
            // invariant subspace found: the iterate is exact
            true_residual(op, b, &x, &mut res);
            let exact = norm2(&res) / bnorm;
            *report.residuals.last_mut().unwrap() = exact;
            report.converged = exact <= opts.tol;
            break;
        }
    }
    report.time = start.elapsed().as_secs_f64();
    Ok((x, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Cg,
    Minres,
}

pub fn solve(
    method: Method,
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    match method {
        Method::Cg => pcg(op, prec, b, opts),
        Method::Minres => pminres(op, prec, b, opts),
    }
}

/// Solves one system per column of `rhs`; columns are independent.
pub fn solve_multi_rhs(
    method: Method,
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    rhs: &DenseMatrix,
    opts: &KrylovOptions,
) -> Result<(DenseMatrix, Vec<SolveReport>)> {
    check_len(op.dim(), rhs.nrows())?;
    let cols: Vec<(Vec<f64>, SolveReport)> = (0..rhs.ncols())
        .into_par_iter()
        .map(|j| solve(method, op, prec, &rhs.column(j), opts))
        .collect::<Result<_>>()?;
    let mut x = DenseMatrix::zeros(rhs.nrows(), rhs.ncols());
    let mut reports = Vec::with_capacity(cols.len());
    for (j, (col, rep)) in cols.into_iter().enumerate() {
        x.set_column(j, &col);
        reports.push(rep);
    }
    Ok((x, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> DenseMatrix {
        DenseMatrix::from_diag(d)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0];
        let opts = KrylovOptions::new(1e-10, 10);
        for method in [Method::Cg, Method::Minres] {
            let (x, rep) = solve(method, &Identity(3), &Identity(3), &b, &opts).unwrap();
            assert_eq!(rep.iterations, 1);
            assert!(x.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn perfect_preconditioner() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
        let (_, rep) = pcg(&diag(&d), &diag(&inv), &[1.0; 10], &KrylovOptions::new(1e-10, 10)).unwrap();
        assert!(rep.iterations <= 2);
        assert!((rep.condition_estimate().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn minres_on_indefinite_diagonal() {
        let a = diag(&[-2.0, -1.0, 3.0, 5.0]);
        let b = [1.0, 1.0, 1.0, 1.0];
        let (x, rep) = pminres(&a, &Identity(4), &b, &KrylovOptions::new(1e-12, 10)).unwrap();
        assert!(rep.converged && rep.iterations <= 4);
        for (xi, want) in x.iter().zip([-0.5, -1.0, 1.0 / 3.0, 0.2]) {
            assert!((xi - want).abs() < 1e-8);
        }
    }

    #[test]
    fn not_spd_detected() {
        let a = diag(&[1.0, -1.0]);
        assert!(matches!(
            pcg(&a, &Identity(2), &[0.0, 1.0], &KrylovOptions::new(1e-8, 10)),
            Err(Error::NotSpd(_))
        ));
    }

    #[test]
    fn zero_rhs_and_multi_rhs() {
        let a = diag(&[1.0, 2.0]);
        let (x, reps) = solve_multi_rhs(Method::Minres, &a, &Identity(2), &DenseMatrix::zeros(2, 3), &KrylovOptions::new(1e-8, 10)).unwrap();
        assert_eq!(x.max_abs(), 0.0);
        assert!(reps.iter().all(|r| r.iterations == 0 && r.converged));
        let (x, _) = solve_multi_rhs(Method::Cg, &Identity(3), &Identity(3), &DenseMatrix::identity(3), &KrylovOptions::new(1e-8, 10)).unwrap();
        assert_eq!(x.as_slice(), DenseMatrix::identity(3).as_slice());
    }

    fn random_spd(n: usize, lo: f64, hi: f64, seed: u64) -> DenseMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut sym = g.transpose();
        sym.add_scaled(1.0, &g).unwrap();
        let q = crate::linalg::symmetric_eigen(&sym).unwrap().vectors;
        // geometric spectrum between lo and hi
        let d: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
        q.matmul(&DenseMatrix::from_diag(&d)).unwrap().matmul(&q.transpose()).unwrap()
    }

    #[test]
    fn lanczos_condition_estimate_is_sharp() {
        let a = random_spd(60, 1.0, 500.0, 7);
        let b: Vec<f64> = (0..60).map(|i| 1.0 + (i % 7) as f64).collect();
        let (_, rep) = pcg(&a, &Identity(60), &b, &KrylovOptions::new(1e-12, 200)).unwrap();
        let (lo, hi) = rep.ritz_bounds.unwrap();
        // coefficients from near-roundoff residuals may push Ritz values slightly outside
        assert!(lo >= 1.0 - 1e-6 && hi <= 500.0 * (1.0 + 1e-6), "{lo} {hi}");
        let kappa = rep.condition_estimate().unwrap();
        assert!(kappa >= 0.9 * 500.0 && kappa <= 1.05 * 500.0, "{kappa}");
    }

    #[test]
    fn cg_and_minres_agree_on_spd() {
        let a = random_spd(40, 0.5, 50.0, 3);
        let p = DenseMatrix::from_diag(&a.diagonal().iter().map(|v| 1.0 / v).collect::<Vec<_>>());
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let opts = KrylovOptions::new(1e-11, 200);
        let (x1, r1) = pcg(&a, &p, &b, &opts).unwrap();
        let (x2, r2) = pminres(&a, &p, &b, &opts).unwrap();
        assert!(r1.converged && r2.converged);
        let want = crate::linalg::DenseLu::new(&a).unwrap().solve(&b);
        for x in [&x1, &x2] {
            let err = x.iter().zip(&want).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            assert!(err < 1e-8 * crate::linalg::max_abs(&want));
        }
    }

    #[test]
    fn minres_solves_saddle_point_system() {
        let (n, m) = (30, 6);
        let a = random_spd(n, 1.0, 20.0, 11);
        let k = DenseMatrix::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => a[(i, j)],
            (true, false) => f64::from(u8::from(i % m == j - n)),
            (false, true) => f64::from(u8::from(j % m == i - n)),
            (false, false) => 0.0,
        });
        let b: Vec<f64> = (0..n + m).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut opts = KrylovOptions::new(1e-10, 500);
        for stopping in [StoppingNorm::Residual, StoppingNorm::Preconditioned] {
            opts.stopping = stopping;
            let (x, rep) = pminres(&k, &Identity(n + m), &b, &opts).unwrap();
            assert!(rep.converged);
            assert!(rep.precond_residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let r: Vec<f64> = k.matvec(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
            assert!(crate::linalg::norm2(&r) <= 1e-8 * crate::linalg::norm2(&b));
        }
    }

    #[test]
    fn iteration_limit_reports_non_convergence() {
        let a = random_spd(50, 1.0, 1e4, 5);
        let (_, rep) = pcg(&a, &Identity(50), &[1.0; 50], &KrylovOptions::new(1e-12, 3)).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }
}
