//! End-to-end checks of the solvers against dense and analytic oracles.

use ieti::experiment::{model_rhs, run, ExperimentConfig};
use ieti::geometry::catalog;
use ieti::ieti::{IetiProblem, IetiSolver, SolverOptions, Variant};
use ieti::krylov::LinearOperator;
use ieti::linalg::{symmetric_eigen, DenseCholesky, DenseMatrix};

fn materialize(op: &dyn LinearOperator) -> DenseMatrix {
    let n = op.dim();
    let mut m = DenseMatrix::zeros(n, n);
    let (mut e, mut col) = (vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        m.set_column(j, &col);
        e[j] = 0.0;
    }
    m
}

#[test]
fn lanczos_estimate_matches_dense_spectrum() {
    for (domain, p, r) in [("square4x4", 2, 2), ("annulus32", 2, 1)] {
        let mp = catalog(domain).unwrap().discretize(p, r).unwrap();
        let problem = IetiProblem::new(mp, &model_rhs).unwrap();
        let solver = IetiSolver::new(&problem, Variant::Cglu, SolverOptions::default()).unwrap();
        let f = materialize(&solver.dual_operator());
        let m = materialize(&solver.dirichlet_preconditioner());
        let sym = |a: &DenseMatrix| DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let l = DenseCholesky::new(&sym(&m)).unwrap().factor().clone();
        let pre = l.transpose().matmul(&f).unwrap().matmul(&l).unwrap();
        let ev = symmetric_eigen(&sym(&pre)).unwrap().values;
        let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let kappa = hi / lo;
        let est = solver.solve().unwrap().report.condition_estimate().unwrap();
        assert!(est <= 1.05 * kappa && est >= 0.8 * kappa, "{domain}: estimate {est}, dense {kappa}");
        // scaled Dirichlet keeps the spectrum bounded below by one
        assert!(lo > 1.0 - 1e-8, "{domain}: smallest eigenvalue {lo}");
    }
}

#[test]
fn discretization_errors_converge_at_optimal_rates() {
    for p in 1..=2 {
        let errs: Vec<(f64, f64)> = (2..=4)
            .map(|r| {
                let rec = run(&ExperimentConfig::new("square2x2", p, r, Variant::Cglu)).unwrap();
                (rec.l2_err.unwrap(), rec.h1_err.unwrap())
            })
            .collect();
        for w in errs.windows(2) {
            let (l2, h1) = (w[0].0 / w[1].0, w[0].1 / w[1].1);
            let (want_l2, want_h1) = (2f64.powi(p as i32 + 1), 2f64.powi(p as i32));
            assert!((l2 / want_l2 - 1.0).abs() < 0.15, "p={p}: L2 ratio {l2}");
            assert!((h1 / want_h1 - 1.0).abs() < 0.15, "p={p}: H1 ratio {h1}");
        }
    }
}

#[test]
fn thread_count_does_not_change_iterates() {
    let mut a = ExperimentConfig::new("lshape12", 2, 2, Variant::Mfd);
    let base = run(&a).unwrap();
    a.threads = 3;
    let threaded = run(&a).unwrap();
    assert_eq!(base.it, threaded.it);
    assert_eq!(base.dofs, threaded.dofs);
}

#[test]
fn preconditioned_stopping_and_schur_override() {
    let mut cfg = ExperimentConfig::new("footprint", 2, 1, Variant::Mlu);
    let it_default = run(&cfg).unwrap().it;
    cfg.solver.stopping = ieti::krylov::StoppingNorm::Preconditioned;
    let rec = run(&cfg).unwrap();
    assert_eq!(rec.status, ieti::experiment::Status::Ok);
    cfg.solver.stopping = ieti::krylov::StoppingNorm::Residual;
    cfg.solver.schur = Some(ieti::ieti::SchurKind::Parameter);
    let it_param = run(&cfg).unwrap().it;
    // parameter-domain Schur complements only approximate the physical ones
    assert!(it_param >= it_default, "{it_param} vs {it_default}");
}
