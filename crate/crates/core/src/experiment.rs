//! Benchmark runs on the model problem `−Δu = 2π² sin(πx) sin(πy)` with
//! homogeneous Dirichlet data, CSV records, sweeps, and the verification suite.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::parameter_operator;
use crate::error::{Error, Result};
use crate::fastdiag::build_fd;
use crate::geometry::{catalog, MultiPatch};
use crate::ieti::{check_continuity, monolithic_solve, IetiProblem, IetiSolution, IetiSolver, SolverOptions, Variant};
use crate::krylov::LinearOperator;
use crate::linalg::{dot, DenseLu};

pub fn model_rhs(x: f64, y: f64) -> f64 {
    2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()
}

pub fn model_solution(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

pub fn model_gradient(x: f64, y: f64) -> [f64; 2] {
    [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()]
}

/// `u = sin(πx) sin(πy)` solves the model problem only on the unit square.
fn has_exact_solution(domain: &str) -> bool {
    domain.starts_with("square")
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub domain: String,
    pub p: usize,
    pub r: usize,
    pub variant: Variant,
    pub solver: SolverOptions,
    /// Worker threads for patch-parallel work; 1 gives reproducible timings.
    pub threads: usize,
    /// Timings are the fastest of this many solves.
    pub repetitions: usize,
    /// Estimated peak memory above which the run is recorded as `oom`.
    pub memory_budget: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(domain: &str, p: usize, r: usize, variant: Variant) -> Self {
        ExperimentConfig {
            domain: domain.to_string(),
            p,
            r,
            variant,
            solver: SolverOptions::default(),
            threads: 1,
            repetitions: 1,
            memory_budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Parameter("degree must be at least 1".into()));
        }
        for (name, t) in [("tol", self.solver.tol), ("psi-tol", self.solver.psi_tol)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Parameter(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if self.threads == 0 || self.repetitions == 0 {
            return Err(Error::Parameter("threads and repetitions must be positive".into()));
        }
        catalog(&self.domain).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NoConvergence,
    Oom,
    Error,
}

/// One CSV row; times in seconds.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRecord {
    pub domain: String,
    pub p: usize,
    pub r: usize,
    pub variant: String,
    pub dofs: usize,
    pub n_lambda: usize,
    pub n_pi: usize,
    pub it: usize,
    #[serde(serialize_with = "opt_float")]
    pub cond_est: Option<f64>,
    #[serde(serialize_with = "seconds")]
    pub t_psi: f64,
    #[serde(serialize_with = "seconds")]
    pub t_setup: f64,
    #[serde(serialize_with = "seconds")]
    pub t_apply: f64,
    #[serde(serialize_with = "seconds")]
    pub t_solve: f64,
    #[serde(serialize_with = "seconds")]
    pub t_total: f64,
    #[serde(serialize_with = "opt_float")]
    pub l2_err: Option<f64>,
    #[serde(serialize_with = "opt_float")]
    pub h1_err: Option<f64>,
    pub status: Status,
}

fn seconds<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:.3}"))
}

fn opt_float<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_str(&format!("{x:.6e}")),
        None => s.serialize_str(""),
    }
}

pub const CSV_HEADER: [&str; 17] = [
    "domain", "p", "r", "variant", "dofs", "n_lambda", "n_pi", "it", "cond_est", "t_psi", "t_setup", "t_apply",
    "t_solve", "t_total", "l2_err", "h1_err", "status",
];

impl BenchRecord {
    fn empty(cfg: &ExperimentConfig, status: Status) -> Self {
        BenchRecord {
            domain: cfg.domain.clone(),
            p: cfg.p,
            r: cfg.r,
            variant: cfg.variant.to_string(),
            dofs: 0,
            n_lambda: 0,
            n_pi: 0,
            it: 0,
            cond_est: None,
            t_psi: 0.0,
            t_setup: 0.0,
            t_apply: 0.0,
            t_solve: 0.0,
            t_total: 0.0,
            l2_err: None,
            h1_err: None,
            status,
        }
    }
}

/// Rough peak memory in bytes: the free stiffness matrices plus, for the
/// exact variants, one sparse Cholesky factor of `A_ΔΔ` per patch with about
/// `n (p+1)² log₂ n` entries (nested dissection on a width-`p` stencil).
pub fn estimate_memory(mp: &MultiPatch, variant: Variant) -> f64 {
    mp.patches()
        .iter()
        .map(|patch| {
            let n = patch.num_coefs() as f64;
            let p = patch.spaces[0].degree() as f64;
            let stiffness = n * (2.0 * p + 1.0).powi(2) * 12.0;
            let factor = match variant {
                Variant::Mfd => 0.0,
                Variant::Mlu | Variant::Cglu => 8.0 * n * (p + 1.0).powi(2) * n.log2().max(1.0),
            };
            1.25 * stiffness + factor
        })
        .sum()
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs one configuration; solver failures become the record's status.
pub fn run(cfg: &ExperimentConfig) -> Result<BenchRecord> {
    run_detailed(cfg).map(|(rec, _)| rec)
}

/// Like [`run`], also returning the solution when one was computed.
pub fn run_detailed(cfg: &ExperimentConfig) -> Result<(BenchRecord, Option<IetiSolution>)> {
    cfg.validate()?;
    let mp = catalog(&cfg.domain)?.discretize(cfg.p, cfg.r)?;
    if let Some(budget) = cfg.memory_budget {
        if estimate_memory(&mp, cfg.variant) > budget {
            log::warn!("{} p={} r={} {}: estimated memory above budget", cfg.domain, cfg.p, cfg.r, cfg.variant);
            return Ok((BenchRecord::empty(cfg, Status::Oom), None));
        }
    }
    with_threads(cfg.threads, || run_on(cfg, mp))?
}

fn run_on(cfg: &ExperimentConfig, mp: MultiPatch) -> Result<(BenchRecord, Option<IetiSolution>)> {
    let problem = IetiProblem::new(mp, &model_rhs)?;
    let mut rec = BenchRecord::empty(cfg, Status::Ok);
    rec.dofs = problem.num_dofs();
    rec.n_lambda = problem.num_multipliers();
    rec.n_pi = problem.num_primal();
    let mut best: Option<IetiSolution> = None;
    for _ in 0..cfg.repetitions {
        let outcome = IetiSolver::new(&problem, cfg.variant, cfg.solver).and_then(|s| s.solve());
        let sol = match outcome {
            Ok(sol) => sol,
            Err(e @ (Error::InnerSolve(_) | Error::NotSpd(_) | Error::Factorization(_))) => {
                log::error!("{} p={} r={} {}: {e}", cfg.domain, cfg.p, cfg.r, cfg.variant);
                rec.status = Status::Error;
                return Ok((rec, None));
            }
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|b| sol.timings.total < b.timings.total) {
            best = Some(sol);
        }
    }
    let sol = best.expect("at least one repetition");
    rec.it = sol.report.iterations;
    rec.cond_est = sol.report.condition_estimate();
    rec.t_psi = sol.timings.psi;
    rec.t_setup = sol.timings.setup;
    rec.t_apply = sol.timings.apply;
    rec.t_solve = sol.timings.solve;
    rec.t_total = sol.timings.total;
    if !sol.report.converged {
        rec.status = Status::NoConvergence;
        return Ok((rec, Some(sol)));
    }
    if has_exact_solution(&cfg.domain) {
        let (l2, h1) = crate::assembly::h1_l2_error(&problem.mp, &sol.coefs, &model_solution, &model_gradient)?;
        rec.l2_err = Some(l2);
        rec.h1_err = Some(h1);
    }
    Ok((rec, Some(sol)))
}

pub fn write_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub domain: String,
    pub p_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub variants: Vec<Variant>,
    pub base: ExperimentConfig,
    /// Configurations with more local coefficients than this are skipped.
    pub dof_budget: Option<usize>,
}

/// Cartesian product of runs, in `p`, `r`, variant order. `on_record` sees
/// every row as soon as it is produced.
pub fn sweep(cfg: &SweepConfig, mut on_record: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::new();
    for &p in &cfg.p_list {
        for &r in &cfg.r_list {
            if let Some(budget) = cfg.dof_budget {
                let mp = catalog(&cfg.domain)?.discretize(p, r)?;
                let dofs: usize = mp.num_local_coefs();
                if dofs > budget {
                    log::info!("skipping {} p={p} r={r}: {dofs} local coefficients above budget", cfg.domain);
                    continue;
                }
            }
            for &variant in &cfg.variants {
                let run_cfg = ExperimentConfig { domain: cfg.domain.clone(), p, r, variant, ..cfg.base.clone() };
                let rec = match run(&run_cfg) {
                    Ok(rec) => rec,
                    Err(e) => {
                        log::error!("{} p={p} r={r} {variant}: {e}", cfg.domain);
                        BenchRecord::empty(&run_cfg, Status::Error)
                    }
                };
                on_record(&rec);
                out.push(rec);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), passed, detail });
    }

    fn bound(&mut self, name: &str, value: f64, limit: f64) {
        self.push(name, value <= limit, format!("{value:.3e} (limit {limit:.0e})"));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Largest problem `verify` accepts.
pub const VERIFY_DOF_LIMIT: usize = 20_000;

fn rel_inf(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Oracle comparisons and invariants on one small configuration.
pub fn verify(domain: &str, p: usize, r: usize) -> Result<VerifyReport> {
    let mp = catalog(domain)?.discretize(p, r)?;
    if mp.num_local_coefs() > VERIFY_DOF_LIMIT {
        return Err(Error::Parameter(format!(
            "{domain} p={p} r={r} has {} coefficients; verify is limited to {VERIFY_DOF_LIMIT}",
            mp.num_local_coefs()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e71);
    let mut rep = VerifyReport::default();

    let mut pou: f64 = 0.0;
    for patch in mp.patches() {
        for space in &patch.spaces {
            for _ in 0..200 {
                let x: f64 = rng.random_range(0.0..=1.0);
                let (_, v, _) = space.eval_with_derivative(x);
                pou = pou.max((v.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    rep.bound("partition of unity", pou, 1e-12);

    let problem = IetiProblem::new(mp, &model_rhs)?;
    let mono = monolithic_solve(&problem)?;

    let mut rows = vec![Vec::new(); problem.num_multipliers()];
    for (k, entries) in problem.jumps.per_patch.iter().enumerate() {
        for e in entries {
            rows[e.lambda].push((k, e.sign));
        }
    }
    let well_formed = rows.iter().all(|r| r.len() == 2 && r[0].0 != r[1].0 && r[0].1 + r[1].1 == 0.0 && r[0].1.abs() == 1.0);
    rep.push("jump rows: one +1 and one -1 on distinct patches", well_formed, format!("{} multipliers", rows.len()));
    let mut jump = vec![0.0; problem.num_multipliers()];
    for (k, local) in problem.locals.iter().enumerate() {
        let u: Vec<f64> = local.index.iter().map(|&t| mono[k][t]).collect();
        problem.jumps.apply_patch(k, &u, &mut jump);
    }
    rep.bound("jumps of the conforming solution", crate::linalg::max_abs(&jump), 1e-14);

    let mut fd_err: f64 = 0.0;
    for (k, patch) in problem.mp.patches().iter().enumerate() {
        if problem.dofs.patches[k].free.is_empty() {
            continue;
        }
        let po = parameter_operator(patch, problem.dofs.patches[k].dirichlet_sides)?;
        let fd = build_fd(&po)?;
        let lu = DenseLu::new(&po.dense_corrected())?;
        for _ in 0..3 {
            let b = random_vec(&mut rng, po.len());
            let want = lu.solve(&b);
            let got = fd.apply(&b)?;
            let scale = crate::linalg::max_abs(&want);
            fd_err = fd_err.max(got.iter().zip(&want).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale);
        }
    }
    rep.bound("fast diagonalization vs dense inverse", fd_err, 1e-9);

    for variant in Variant::ALL {
        let solver = IetiSolver::new(&problem, variant, SolverOptions::default())?;
        let name = variant.to_string();
        let tol = if variant == Variant::Mfd { 1e-7 } else { 1e-11 };
        let (mut cpsi, mut orth): (f64, f64) = (0.0, 0.0);
        for (k, cons) in problem.constraints.iter().enumerate() {
            let psi = solver.psi(k);
            let local = &problem.locals[k];
            let scale = local.matrix.max_abs();
            for j in 0..cons.rows() {
                let col = psi.column(j);
                for (i, &c) in cons.corners.iter().enumerate() {
                    cpsi = cpsi.max((col[c] - if i == j { 1.0 } else { 0.0 }).abs());
                }
                let a_psi = local.matrix.matvec(&col);
                for _ in 0..3 {
                    let mut v = random_vec(&mut rng, cons.num_free);
                    for &c in &cons.corners {
                        v[c] = 0.0;
                    }
                    let nv = crate::linalg::norm2(&v) * crate::linalg::norm2(&col);
                    orth = orth.max(dot(&v, &a_psi).abs() / (scale * nv));
                }
            }
        }
        rep.bound(&format!("{name}: C Psi = I"), cpsi, tol);
        rep.bound(&format!("{name}: A-orthogonality of Psi"), orth, tol);

        let n = solver.saddle_dim();
        let (op, prec) = (solver.saddle_operator(), solver.preconditioner());
        let (mut min_ratio, mut asym): (f64, f64) = (f64::INFINITY, 0.0);
        for _ in 0..20 {
            let x = random_vec(&mut rng, n);
            let y = random_vec(&mut rng, n);
            let (mut px, mut py, mut mx, mut my) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            prec.apply(&x, &mut px);
            prec.apply(&y, &mut py);
            op.apply(&x, &mut mx);
            op.apply(&y, &mut my);
            min_ratio = min_ratio.min(dot(&x, &px) / dot(&x, &x));
            let s = crate::linalg::norm2(&x) * crate::linalg::norm2(&y);
            asym = asym.max((dot(&x, &py) - dot(&y, &px)).abs() / s).max((dot(&x, &my) - dot(&y, &mx)).abs() / s);
        }
        rep.push(&format!("{name}: preconditioner positive definite"), min_ratio > 0.0, format!("min xᵀPx/xᵀx = {min_ratio:.3e}"));
        let op_scale = problem.locals.iter().map(|l| l.matrix.max_abs()).fold(1.0, f64::max);
        rep.bound(&format!("{name}: operator and preconditioner symmetry"), asym / op_scale, 1e-9);

        let sol = solver.solve()?;
        rep.push(&format!("{name}: converged"), sol.report.converged, format!("{} iterations", sol.report.iterations));
        if variant != Variant::Cglu {
            let monotone = sol.report.precond_residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
            rep.push(&format!("{name}: MINRES preconditioned residual monotone"), monotone, String::new());
        }
        rep.bound(&format!("{name}: agreement with monolithic solve"), rel_inf(&sol.coefs, &mono), 1e-5);
        let cont = check_continuity(&problem.mp, &sol.coefs, 100)?;
        rep.bound(&format!("{name}: interface continuity"), cont.max_mismatch / cont.max_abs.max(1e-300), 1e-5);
        let mut corner: f64 = 0.0;
        for (k, cons) in problem.constraints.iter().enumerate() {
            for (&c, &g) in cons.corners.iter().zip(&cons.global) {
                let t = problem.locals[k].index[c];
                corner = corner.max((sol.coefs[k][t] - sol.u_pi[g]).abs());
            }
        }
        rep.bound(&format!("{name}: corner values equal primal unknowns"), corner / cont.max_abs.max(1e-300), 1e-6);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut cfg = ExperimentConfig::new("square2x2", 2, 1, Variant::Cglu);
        cfg.repetitions = 2;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.status, Status::Ok);
        assert!(rec.l2_err.is_some() && rec.cond_est.is_some());
        let mut buf = Vec::new();
        write_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.len());
        assert_eq!(&fields[..4], ["square2x2", "2", "1", "cglu"]);
        assert!(fields[9].split('.').nth(1).is_some_and(|d| d.len() == 3));
        assert_eq!(fields[16], "ok");
    }

    #[test]
    fn errors_only_on_squares() {
        let rec = run(&ExperimentConfig::new("lshape12", 1, 1, Variant::Mfd)).unwrap();
        assert!(rec.l2_err.is_none() && rec.cond_est.is_none());
    }

    #[test]
    fn invalid_configurations() {
        let mut cfg = ExperimentConfig::new("square2x2", 0, 1, Variant::Mfd);
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        cfg.p = 1;
        cfg.solver.tol = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        cfg.solver.tol = 1e-6;
        cfg.threads = 0;
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        assert!(matches!(run(&ExperimentConfig::new("torus", 1, 1, Variant::Mfd)), Err(Error::Parameter(_))));
    }

    #[test]
    fn memory_budget_marks_oom() {
        let mut cfg = ExperimentConfig::new("annulus32", 2, 1, Variant::Mlu);
        cfg.memory_budget = Some(1.0);
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.status, Status::Oom);
        assert_eq!(rec.it, 0);
    }

    #[test]
    fn memory_estimate_orders_variants() {
        let mp = catalog("annulus32").unwrap().discretize(3, 3).unwrap();
        assert!(estimate_memory(&mp, Variant::Mfd) < estimate_memory(&mp, Variant::Mlu));
    }

    #[test]
    fn sweep_order_and_budget() {
        let cfg = SweepConfig {
            domain: "square2x2".into(),
            p_list: vec![1, 2],
            r_list: vec![1, 6],
            variants: vec![Variant::Mfd, Variant::Cglu],
            base: ExperimentConfig::new("square2x2", 1, 1, Variant::Mfd),
            dof_budget: Some(500),
        };
        let mut seen = 0;
        let recs = sweep(&cfg, |_| seen += 1).unwrap();
        let keys: Vec<(usize, usize, String)> = recs.iter().map(|r| (r.p, r.r, r.variant.clone())).collect();
        assert_eq!(
            keys,
            [(1, 1, "mfd".into()), (1, 1, "cglu".into()), (2, 1, "mfd".into()), (2, 1, "cglu".into())]
        );
        assert_eq!(seen, 4);
    }

    #[test]
    fn verify_small_configurations() {
        for (domain, p, r) in [("square2x2", 2, 1), ("lshape12", 1, 1)] {
            let rep = verify(domain, p, r).unwrap();
            if let Some(c) = rep.checks.iter().find(|c| !c.passed) {
                panic!("{domain}: {} {}", c.name, c.detail);
            }
        }
        assert!(matches!(verify("annulus32", 5, 6), Err(Error::Parameter(_))));
    }
}
