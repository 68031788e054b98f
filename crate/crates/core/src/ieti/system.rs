use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{assemble_local, parameter_operator, LocalSystem};
use crate::error::{Error, Result};
use crate::geometry::{classify_dofs, global_numbering, DofClassification, GlobalNumbering, MultiPatch};
use crate::krylov::{pcg, pminres, FnOperator, KrylovOptions, LinearOperator, SolveReport};
use crate::linalg::{factorize, CsrMatrix, DenseMatrix, MatrixRef};

use super::jumps::{build_constraints, build_jumps, ConstraintMatrix, JumpOperator};
use super::local::{factorize_delta, ApplyClock, DeltaFactor, FreeFd, SchurSolver};
use super::primal::{assemble_primal, primal_basis_exact, primal_basis_fd, PrimalSystem};
use super::{SchurKind, SolverOptions, Variant};

/// Assembled, variant-independent data of a decomposed problem.
#[derive(Clone, Debug)]
pub struct IetiProblem {
    pub mp: MultiPatch,
    pub dofs: DofClassification,
    /// Patch systems on the free (non-Dirichlet) coefficients.
    pub locals: Vec<LocalSystem>,
    pub constraints: Vec<ConstraintMatrix>,
    pub jumps: JumpOperator,
    pub numbering: GlobalNumbering,
    pub t_assembly: f64,
}

impl IetiProblem {
    pub fn new(mp: MultiPatch, rhs: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<Self> {
        let start = Instant::now();
        let dofs = classify_dofs(&mp, mp.topology());
        let locals = mp
            .patches()
            .par_iter()
            .zip(&dofs.patches)
            .map(|(patch, pd)| {
                let full = assemble_local(patch, rhs)?;
                Ok(full.restrict(&pd.free))
            })
            .collect::<Result<Vec<_>>>()?;
        let constraints = build_constraints(&dofs);
        let jumps = build_jumps(&mp, &dofs)?;
        let numbering = global_numbering(&mp, mp.topology(), &dofs);
        Ok(IetiProblem {
            mp,
            dofs,
            locals,
            constraints,
            jumps,
            numbering,
            t_assembly: start.elapsed().as_secs_f64(),
        })
    }

    /// Dimension of the conforming global space.
    pub fn num_dofs(&self) -> usize {
        self.numbering.num_dofs
    }

    pub fn num_multipliers(&self) -> usize {
        self.jumps.num_multipliers
    }

    pub fn num_primal(&self) -> usize {
        self.dofs.num_primal
    }

    /// Scatters free-coefficient vectors into full tensor coefficient vectors.
    pub fn to_tensor(&self, free: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.mp
            .patches()
            .iter()
            .zip(&self.locals)
            .zip(free)
            .map(|((patch, local), u)| {
                let mut c = vec![0.0; patch.num_coefs()];
                for (&t, &v) in local.index.iter().zip(u) {
                    c[t] = v;
                }
                c
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Timings {
    /// Primal basis computation.
    pub psi: f64,
    /// Local solver construction (FD eigendecompositions or factorizations).
    pub setup: f64,
    /// Accumulated local solve time inside the outer iteration.
    pub apply: f64,
    /// Outer Krylov iteration.
    pub solve: f64,
    pub total: f64,
    pub psi_iterations: usize,
}

#[derive(Clone, Debug)]
enum DeltaBlock {
    Fd(FreeFd),
    Exact(Option<Arc<DeltaFactor>>),
}

#[derive(Clone, Debug)]
struct PatchSolver {
    delta: DeltaBlock,
    schur: SchurSolver,
    psi: DenseMatrix,
    /// Jump entries as (multiplier, Δ position, sign) and (multiplier, Γ position, sign).
    jump_delta: Vec<(usize, usize, f64)>,
    jump_gamma: Vec<(usize, usize, f64)>,
}

pub struct IetiSolver<'a> {
    pub problem: &'a IetiProblem,
    pub variant: Variant,
    pub opts: SolverOptions,
    patches: Vec<PatchSolver>,
    pub primal: PrimalSystem,
    offsets: Vec<usize>,
    clock: ApplyClock,
    pub timings: Timings,
}

#[derive(Clone, Debug)]
pub struct IetiSolution {
    /// Full tensor coefficients per patch (Dirichlet entries zero).
    pub coefs: Vec<Vec<f64>>,
    pub u_pi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub report: SolveReport,
    pub timings: Timings,
}

fn position_map(positions: &[usize], n: usize) -> Vec<Option<usize>> {
    let mut m = vec![None; n];
    for (i, &p) in positions.iter().enumerate() {
        m[p] = Some(i);
    }
    m
}

impl<'a> IetiSolver<'a> {
    pub fn new(problem: &'a IetiProblem, variant: Variant, opts: SolverOptions) -> Result<Self> {
        let start = Instant::now();
        let schur_kind = opts.schur.unwrap_or(variant.default_schur());
        let mp = &problem.mp;
        let n = mp.num_patches();
        let setup: Vec<(DeltaBlock, SchurSolver)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let pd = &problem.dofs.patches[k];
                let local = &problem.locals[k];
                if pd.free.is_empty() {
                    // fully clamped patch: nothing to solve for
                    return Ok((DeltaBlock::Exact(None), SchurSolver::physical(local, pd, None)?));
                }
                let po = parameter_operator(&mp.patches()[k], pd.dirichlet_sides)?;
                let delta = match variant {
                    Variant::Mfd => DeltaBlock::Fd(FreeFd::new(&po, pd)?),
                    Variant::Mlu | Variant::Cglu => DeltaBlock::Exact(factorize_delta(local, pd)?.map(Arc::new)),
                };
                let shared = match &delta {
                    DeltaBlock::Exact(f) => f.as_ref(),
                    DeltaBlock::Fd(_) => None,
                };
                let schur = match schur_kind {
                    SchurKind::Parameter => SchurSolver::parameter(&po, pd)?,
                    SchurKind::Physical => SchurSolver::physical(local, pd, shared)?,
                };
                Ok((delta, schur))
            })
            .collect::<Result<_>>()?;
        let t_setup = start.elapsed().as_secs_f64();
        let psi_start = Instant::now();
        let inner = KrylovOptions { tol: opts.psi_tol, maxit: opts.inner_maxit, stopping: opts.stopping };
        let psis: Vec<(DenseMatrix, usize)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let pd = &problem.dofs.patches[k];
                let (local, cons) = (&problem.locals[k], &problem.constraints[k]);
                if cons.rows() == 0 {
                    return Ok((DenseMatrix::zeros(cons.num_free, 0), 0));
                }
                match &setup[k].0 {
                    DeltaBlock::Fd(fd) => primal_basis_fd(local, cons, fd, &inner),
                    DeltaBlock::Exact(f) => Ok((primal_basis_exact(local, pd, cons, f.as_deref())?, 0)),
                }
            })
            .collect::<Result<_>>()?;
        let t_psi = psi_start.elapsed().as_secs_f64();
        let psi_iterations = psis.iter().map(|p| p.1).sum();
        let psis: Vec<DenseMatrix> = psis.into_iter().map(|p| p.0).collect();
        let primal = assemble_primal(&problem.locals, &psis, &problem.constraints, &problem.jumps, problem.num_primal())?;
        let mut offsets = vec![0];
        let patches = setup
            .into_iter()
            .zip(psis)
            .enumerate()
            .map(|(k, ((delta, schur), psi))| {
                let pd = &problem.dofs.patches[k];
                let dmap = pd.delta_map();
                let gmap = position_map(&pd.gamma, pd.num_free());
                let entries = &problem.jumps.per_patch[k];
                offsets.push(offsets[k] + pd.delta.len());
                PatchSolver {
                    delta,
                    schur,
                    psi,
                    jump_delta: entries.iter().map(|e| (e.lambda, dmap[e.pos].expect("multiplier on Δ"), e.sign)).collect(),
                    jump_gamma: entries.iter().map(|e| (e.lambda, gmap[e.pos].expect("multiplier on Γ"), e.sign)).collect(),
                }
            })
            .collect();
        Ok(IetiSolver {
            problem,
            variant,
            opts,
            patches,
            primal,
            offsets,
            clock: ApplyClock::default(),
            timings: Timings { psi: t_psi, setup: t_setup, psi_iterations, ..Timings::default() },
        })
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn num_delta(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_multipliers(&self) -> usize {
        self.problem.num_multipliers()
    }

    pub fn num_primal(&self) -> usize {
        self.primal.size()
    }

    /// Dimension of the saddle-point system.
    pub fn saddle_dim(&self) -> usize {
        self.num_delta() + self.num_primal() + self.num_multipliers()
    }

    pub fn psi(&self, k: usize) -> &DenseMatrix {
        &self.patches[k].psi
    }

    pub fn schur(&self, k: usize) -> &SchurSolver {
        &self.patches[k].schur
    }

    fn delta_slice<'v>(&self, k: usize, x: &'v [f64]) -> &'v [f64] {
        &x[self.offsets[k]..self.offsets[k + 1]]
    }

    fn embed(&self, k: usize, v: &[f64]) -> Vec<f64> {
        let pd = &self.problem.dofs.patches[k];
        let mut u = vec![0.0; pd.num_free()];
        for (&pos, &x) in pd.delta.iter().zip(v) {
            u[pos] = x;
        }
        u
    }

    fn restrict(&self, k: usize, u: &[f64]) -> Vec<f64> {
        self.problem.dofs.patches[k].delta.iter().map(|&p| u[p]).collect()
    }

    /// `A_ΔΔ v`.
    pub fn apply_a_delta(&self, k: usize, v: &[f64]) -> Vec<f64> {
        self.restrict(k, &self.problem.locals[k].matrix.matvec(&self.embed(k, v)))
    }

    /// Δ-block of the preconditioner: `Q Â_M⁻¹ Qᵀ` with `Q = I − ΨC` (FD), or
    /// `A_ΔΔ⁻¹` (exact).
    pub fn apply_delta_block(&self, k: usize, v: &[f64]) -> Vec<f64> {
        let ps = &self.patches[k];
        match &ps.delta {
            DeltaBlock::Fd(fd) => {
                let cons = &self.problem.constraints[k];
                let mut x = self.embed(k, v);
                let t = ps.psi.matvec_t(&x);
                for (&c, tv) in cons.corners.iter().zip(&t) {
                    x[c] -= tv;
                }
                let mut y = self.clock.time(|| fd.apply(&x));
                let c = cons.apply(&y);
                for (yi, row) in y.iter_mut().zip(0..) {
                    *yi -= crate::linalg::dot(ps.psi.row(row), &c);
                }
                self.restrict(k, &y)
            }
            DeltaBlock::Exact(f) => self.solve_delta(f.as_deref(), v),
        }
    }

    fn solve_delta(&self, f: Option<&DeltaFactor>, v: &[f64]) -> Vec<f64> {
        match f {
            Some(f) => self.clock.time(|| f.solve(v)),
            None => Vec::new(),
        }
    }

    fn exact_delta(&self, k: usize) -> Result<Option<&DeltaFactor>> {
        match &self.patches[k].delta {
            DeltaBlock::Exact(f) => Ok(f.as_deref()),
            DeltaBlock::Fd(_) => Err(Error::Parameter("exact local solves are not available for MFD".into())),
        }
    }

    /// Scaled Dirichlet preconditioner `B_Γ D⁻¹ S D⁻¹ B_Γᵀ` with `D = 2`.
    pub fn apply_scaled_dirichlet(&self, lambda: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<(usize, f64)>> = (0..self.num_patches())
            .into_par_iter()
            .map(|k| {
                let ps = &self.patches[k];
                if ps.jump_gamma.is_empty() {
                    return Vec::new();
                }
                let mut x = vec![0.0; ps.schur.gamma_len()];
                for &(l, g, s) in &ps.jump_gamma {
                    x[g] += 0.5 * s * lambda[l];
                }
                let y = ps.schur.apply(&self.problem.locals[k].matrix, &x, &self.clock);
                ps.jump_gamma.iter().map(|&(l, g, s)| (l, 0.5 * s * y[g])).collect()
            })
            .collect();
        let mut out = vec![0.0; lambda.len()];
        for part in parts {
            for (l, v) in part {
                out[l] += v;
            }
        }
        out
    }

    /// Applies the saddle-point matrix to `(u_Δ, u_Π, λ)`.
    pub fn apply_saddle(&self, x: &[f64], y: &mut [f64]) {
        let (nd, np) = (self.num_delta(), self.num_primal());
        let (xd, rest) = x.split_at(nd);
        let (xp, xl) = rest.split_at(np);
        let blocks: Vec<(Vec<f64>, Vec<(usize, f64)>)> = (0..self.num_patches())
            .into_par_iter()
            .map(|k| {
                let v = self.delta_slice(k, xd);
                let mut out = self.apply_a_delta(k, v);
                let mut jumps = Vec::with_capacity(self.patches[k].jump_delta.len());
                for &(l, d, s) in &self.patches[k].jump_delta {
                    out[d] += s * xl[l];
                    jumps.push((l, s * v[d]));
                }
                (out, jumps)
            })
            .collect();
        let yl_start = nd + np;
        y[yl_start..].fill(0.0);
        for (k, (out, jumps)) in blocks.into_iter().enumerate() {
            y[self.offsets[k]..self.offsets[k + 1]].copy_from_slice(&out);
            for (l, v) in jumps {
                y[yl_start + l] += v;
            }
        }
        let ap = self.primal.a_pi.matvec(xp);
        let btl = self.primal.b_pi.matvec_t(xl);
        for i in 0..np {
            y[nd + i] = ap[i] + btl[i];
        }
        let bp = self.primal.b_pi.matvec(xp);
        for (yi, b) in y[yl_start..].iter_mut().zip(bp) {
            *yi += b;
        }
    }

    /// Applies the block-diagonal preconditioner.
    pub fn apply_preconditioner(&self, x: &[f64], y: &mut [f64]) {
        let (nd, np) = (self.num_delta(), self.num_primal());
        let blocks: Vec<Vec<f64>> = (0..self.num_patches())
            .into_par_iter()
            .map(|k| self.apply_delta_block(k, self.delta_slice(k, &x[..nd])))
            .collect();
        for (k, b) in blocks.into_iter().enumerate() {
            y[self.offsets[k]..self.offsets[k + 1]].copy_from_slice(&b);
        }
        y[nd..nd + np].copy_from_slice(&self.primal.solve(&x[nd..nd + np]));
        y[nd + np..].copy_from_slice(&self.apply_scaled_dirichlet(&x[nd + np..]));
    }

    /// Right-hand side `(f_Δ, f_Π, 0)`.
    pub fn saddle_rhs(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.saddle_dim());
        for k in 0..self.num_patches() {
            b.extend(self.restrict(k, &self.problem.locals[k].rhs));
        }
        b.extend_from_slice(&self.primal.f_pi);
        b.resize(self.saddle_dim(), 0.0);
        b
    }

    /// `F λ = Σ B_Δ A_ΔΔ⁻¹ B_Δᵀ λ + B_Π A_Π⁻¹ B_Πᵀ λ` (exact variants only).
    pub fn apply_dual(&self, lambda: &[f64], out: &mut [f64]) {
        let parts: Vec<Vec<(usize, f64)>> = (0..self.num_patches())
            .into_par_iter()
            .map(|k| {
                let ps = &self.patches[k];
                if ps.jump_delta.is_empty() {
                    return Vec::new();
                }
                let mut v = vec![0.0; self.offsets[k + 1] - self.offsets[k]];
                for &(l, d, s) in &ps.jump_delta {
                    v[d] += s * lambda[l];
                }
                let w = self.solve_delta(self.exact_delta(k).expect("exact variant"), &v);
                ps.jump_delta.iter().map(|&(l, d, s)| (l, s * w[d])).collect()
            })
            .collect();
        out.fill(0.0);
        for part in parts {
            for (l, v) in part {
                out[l] += v;
            }
        }
        if self.num_primal() > 0 {
            let z = self.primal.solve(&self.primal.b_pi.matvec_t(lambda));
            for (o, v) in out.iter_mut().zip(self.primal.b_pi.matvec(&z)) {
                *o += v;
            }
        }
    }

    pub fn saddle_operator(&self) -> impl LinearOperator + '_ {
        FnOperator::new(self.saddle_dim(), move |x: &[f64], y: &mut [f64]| self.apply_saddle(x, y))
    }

    pub fn preconditioner(&self) -> impl LinearOperator + '_ {
        FnOperator::new(self.saddle_dim(), move |x: &[f64], y: &mut [f64]| self.apply_preconditioner(x, y))
    }

    pub fn dual_operator(&self) -> impl LinearOperator + '_ {
        FnOperator::new(self.num_multipliers(), move |x: &[f64], y: &mut [f64]| self.apply_dual(x, y))
    }

    pub fn dirichlet_preconditioner(&self) -> impl LinearOperator + '_ {
        FnOperator::new(self.num_multipliers(), move |x: &[f64], y: &mut [f64]| {
            y.copy_from_slice(&self.apply_scaled_dirichlet(x))
        })
    }

    /// Local free-coefficient vector `E u_Δ + Ψ R_c u_Π`.
    pub fn reconstruct_patch(&self, k: usize, u_delta: &[f64], u_pi: &[f64]) -> Vec<f64> {
        let mut u = self.embed(k, u_delta);
        let cons = &self.problem.constraints[k];
        let local_pi: Vec<f64> = cons.global.iter().map(|&g| u_pi[g]).collect();
        if !local_pi.is_empty() {
            for (ui, v) in u.iter_mut().zip(self.patches[k].psi.matvec(&local_pi)) {
                *ui += v;
            }
        }
        u
    }

    pub fn solve(&self) -> Result<IetiSolution> {
        let start = Instant::now();
        self.clock.reset();
        let outer = KrylovOptions { tol: self.opts.tol, maxit: self.opts.maxit, stopping: self.opts.stopping };
        let (nd, np) = (self.num_delta(), self.num_primal());
        let (u_delta, u_pi, lambda, report) = match self.variant {
            Variant::Mfd | Variant::Mlu => {
                let b = self.saddle_rhs();
                let (x, report) = pminres(&self.saddle_operator(), &self.preconditioner(), &b, &outer)?;
                (x[..nd].to_vec(), x[nd..nd + np].to_vec(), x[nd + np..].to_vec(), report)
            }
            Variant::Cglu => {
                let f_delta: Vec<Vec<f64>> =
                    (0..self.num_patches()).map(|k| self.restrict(k, &self.problem.locals[k].rhs)).collect();
                let a_inv_f: Vec<Vec<f64>> = (0..self.num_patches())
                    .into_par_iter()
                    .map(|k| Ok(self.solve_delta(self.exact_delta(k)?, &f_delta[k])))
                    .collect::<Result<_>>()?;
                let mut d = vec![0.0; self.num_multipliers()];
                for k in 0..self.num_patches() {
                    for &(l, i, s) in &self.patches[k].jump_delta {
                        d[l] += s * a_inv_f[k][i];
                    }
                }
                let pi_f = self.primal.solve(&self.primal.f_pi);
                if np > 0 {
                    for (di, v) in d.iter_mut().zip(self.primal.b_pi.matvec(&pi_f)) {
                        *di += v;
                    }
                }
                let (lambda, report) = pcg(&self.dual_operator(), &self.dirichlet_preconditioner(), &d, &outer)?;
                let btl = self.primal.b_pi.matvec_t(&lambda);
                let rhs_pi: Vec<f64> = self.primal.f_pi.iter().zip(&btl).map(|(f, b)| f - b).collect();
                let u_pi = self.primal.solve(&rhs_pi);
                let u_delta: Vec<Vec<f64>> = (0..self.num_patches())
                    .into_par_iter()
                    .map(|k| {
                        let mut r = f_delta[k].clone();
                        for &(l, i, s) in &self.patches[k].jump_delta {
                            r[i] -= s * lambda[l];
                        }
                        Ok(self.solve_delta(self.exact_delta(k)?, &r))
                    })
                    .collect::<Result<_>>()?;
                (u_delta.concat(), u_pi, lambda, report)
            }
        };
        let t_solve = start.elapsed().as_secs_f64();
        let free: Vec<Vec<f64>> = (0..self.num_patches())
            .map(|k| self.reconstruct_patch(k, self.delta_slice(k, &u_delta), &u_pi))
            .collect();
        let timings = Timings {
            apply: self.clock.seconds(),
            solve: t_solve,
            total: self.timings.setup + self.timings.psi + t_solve,
            ..self.timings
        };
        Ok(IetiSolution { coefs: self.problem.to_tensor(&free), u_pi, lambda, report, timings })
    }
}

/// Direct solve of the conforming global Galerkin system.
pub fn monolithic_solve(problem: &IetiProblem) -> Result<Vec<Vec<f64>>> {
    let n = problem.num_dofs();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (k, local) in problem.locals.iter().enumerate() {
        let map = &problem.numbering.map[k];
        let g: Vec<usize> = local.index.iter().map(|&t| map[t].expect("free coefficient numbered")).collect();
        for i in 0..local.dim() {
            rhs[g[i]] += local.rhs[i];
            for (j, v) in local.matrix.row(i) {
                triplets.push((g[i], g[j], v));
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &triplets)?;
    let u = factorize(MatrixRef::Sparse(&a), false)?.solve(&rhs);
    Ok(problem
        .mp
        .patches()
        .iter()
        .enumerate()
        .map(|(k, patch)| {
            (0..patch.num_coefs()).map(|t| problem.numbering.map[k][t].map_or(0.0, |g| u[g])).collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityReport {
    pub max_mismatch: f64,
    pub max_abs: f64,
}

/// Samples every interface trace at `samples` points from both sides.
pub fn check_continuity(mp: &MultiPatch, coefs: &[Vec<f64>], samples: usize) -> Result<ContinuityReport> {
    let mut max_mismatch: f64 = 0.0;
    let max_abs = coefs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for itf in &mp.topology().interfaces {
        let (pa, pb) = (&mp.patches()[itf.patch_a], &mp.patches()[itf.patch_b]);
        for s in 0..samples {
            let t = (s as f64 + 0.5) / samples as f64;
            let tb = if itf.reversed { 1.0 - t } else { t };
            let (xa, ya) = itf.side_a.param(t);
            let (xb, yb) = itf.side_b.param(tb);
            let va = pa.evaluate(&coefs[itf.patch_a], xa, ya)?;
            let vb = pb.evaluate(&coefs[itf.patch_b], xb, yb)?;
            max_mismatch = max_mismatch.max((va - vb).abs());
        }
    }
    Ok(ContinuityReport { max_mismatch, max_abs })
}
