//! Randomized invariants of the building blocks.

use ieti::assembly::parameter_operator;
use ieti::fastdiag::build_fd;
use ieti::geometry::catalog;
use ieti::linalg::{kron_apply, DenseLu, DenseMatrix};
use ieti::splines::{assemble_1d, make_space};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_is_a_nonnegative_partition_of_unity(p in 1usize..7, r in 0usize..5, extra in 0usize..2, x in 0.0f64..=1.0) {
        let space = make_space(p, r, extra).unwrap();
        let b = space.eval_basis(x, 0).unwrap();
        prop_assert_eq!(b.values.len(), p + 1);
        prop_assert!(b.values.iter().all(|&v| v >= -1e-14));
        prop_assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let d = space.eval_basis(x, 1).unwrap();
        prop_assert!(d.values.iter().sum::<f64>().abs() < 1e-9 * (1 << r) as f64 * p as f64);
    }

    #[test]
    fn one_dimensional_matrices(p in 1usize..6, r in 0usize..4) {
        let m = assemble_1d(&make_space(p, r, 0).unwrap());
        let ones = vec![1.0; m.dim()];
        let k1 = m.stiffness.matvec(&ones);
        prop_assert!(k1.iter().all(|v| v.abs() < 1e-10));
        let total: f64 = m.mass.matvec(&ones).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(m.mass.asymmetry() < 1e-14 && m.stiffness.asymmetry() < 1e-12);
    }

    #[test]
    fn kronecker_apply_matches_dense(n1 in 1usize..6, n2 in 1usize..6, seed in 0u64..1000) {
        let f = |i: usize, j: usize, s: u64| (((i * 7 + j * 13) as u64 + s) % 17) as f64 - 8.0;
        let a1 = DenseMatrix::from_fn(n1, n1, |i, j| f(i, j, seed));
        let a2 = DenseMatrix::from_fn(n2, n2, |i, j| f(j, i, seed + 3));
        let x: Vec<f64> = (0..n1 * n2).map(|i| f(i, 1, seed)).collect();
        let want = a1.kron(&a2).matvec(&x);
        let got = kron_apply(&a1, &a2, &x).unwrap();
        prop_assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn fast_diagonalization_inverts_parameter_operator(
        p in 1usize..4,
        r in 0usize..3,
        sides in proptest::array::uniform4(any::<bool>()),
        seed in 0u64..1000,
    ) {
        // two coefficients per direction cannot lose both ends
        prop_assume!(p + (1 << r) > 2 || !(sides[0] && sides[1] || sides[2] && sides[3]));
        let mp = catalog("square1x1").unwrap().discretize(p, r).unwrap();
        let po = parameter_operator(&mp.patches()[0], sides).unwrap();
        let fd = build_fd(&po).unwrap();
        let b: Vec<f64> = (0..po.len()).map(|i| ((i as u64 * 31 + seed) % 13) as f64 - 6.0).collect();
        let want = DenseLu::new(&po.dense_corrected()).unwrap().solve(&b);
        let got = fd.apply(&b).unwrap();
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(got.iter().zip(&want).all(|(a, w)| (a - w).abs() <= 1e-9 * scale));
    }

    #[test]
    fn constant_coefficients_reproduce_constants(p in 1usize..4, r in 0usize..3, xi in 0.0f64..=1.0, eta in 0.0f64..=1.0) {
        let mp = catalog("annulus32").unwrap().discretize(p, r).unwrap();
        for patch in mp.patches().iter().step_by(7) {
            let v = patch.evaluate(&vec![2.5; patch.num_coefs()], xi, eta).unwrap();
            prop_assert!((v - 2.5).abs() < 1e-12);
        }
    }
}
