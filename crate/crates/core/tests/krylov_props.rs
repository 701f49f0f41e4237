use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use proptest::prelude::*;

use lowrank_dre::grid::assemble_example;
use lowrank_dre::krylov::{expm_action, ExpmConfig};
use lowrank_dre::oracle::dense_expm;

fn dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Negative weighted graph Laplacian on a random sparse edge set, which is
/// symmetric negative semidefinite.
fn graph_laplacian(n: usize, edges: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for &(i, j, w) in edges {
        let (i, j) = (i % n, j % n);
        if i == j {
            continue;
        }
        coo.push(i, j, w);
        coo.push(j, i, w);
        coo.push(i, i, -w);
        coo.push(j, j, -w);
    }
    // Small diagonal shift keeps the matrix from being purely singular.
    for i in 0..n {
        coo.push(i, i, -0.1);
    }
    CsrMatrix::from(&coo)
}

fn general(n: usize, entries: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for &(i, j, v) in entries {
        coo.push(i % n, j % n, v);
    }
    CsrMatrix::from(&coo)
}

fn block(n: usize, k: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |i, j| vals[(i * 7 + j * 13) % vals.len()])
}

fn edges() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    proptest::collection::vec((0usize..64, 0usize..64, 0.0f64..5.0), 1..120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn semigroup(
        n in 2usize..40,
        k in 1usize..4,
        entries in proptest::collection::vec((0usize..64, 0usize..64, -3.0f64..3.0), 1..120),
        vals in proptest::collection::vec(-1.0f64..1.0, 16),
        t1 in 0.0f64..0.5,
        t2 in 0.0f64..0.5,
    ) {
        let a = general(n, &entries);
        let v = block(n, k, &vals);
        let tol = 1e-8;
        let cfg = ExpmConfig::default().with_tol(tol);
        let split = expm_action(&a, &expm_action(&a, &v, t1, &cfg).unwrap(), t2, &cfg).unwrap();
        let joint = expm_action(&a, &v, t1 + t2, &cfg).unwrap();
        let scale = v.norm().max(joint.norm()).max(split.norm());
        prop_assert!((&split - &joint).norm() <= 20.0 * tol * scale);
    }

    #[test]
    fn contraction_for_negative_semidefinite(
        n in 2usize..40,
        k in 1usize..4,
        e in edges(),
        vals in proptest::collection::vec(-1.0f64..1.0, 16),
        t in 0.0f64..2.0,
    ) {
        let a = graph_laplacian(n, &e);
        let v = block(n, k, &vals);
        let tol = 1e-6;
        for cfg in [
            ExpmConfig::default().with_tol(tol),
            ExpmConfig { block_width: 1, reorthogonalize: false, ..ExpmConfig::default().with_tol(tol) },
        ] {
            let w = expm_action(&a, &v, t, &cfg).unwrap();
            prop_assert!(w.norm() <= v.norm() * (1.0 + 10.0 * tol));
        }
    }

    #[test]
    fn transpose_path_agrees_for_symmetric(
        n in 2usize..40,
        e in edges(),
        vals in proptest::collection::vec(-1.0f64..1.0, 16),
        t in 0.0f64..1.0,
    ) {
        let a = graph_laplacian(n, &e);
        let at = a.transpose();
        let v = block(n, 2, &vals);
        let cfg = ExpmConfig::default().with_tol(1e-8);
        let w = expm_action(&a, &v, t, &cfg).unwrap();
        let wt = expm_action(&at, &v, t, &cfg).unwrap();
        prop_assert!((&w - &wt).amax() <= 1e-13 * v.amax());
    }
}

#[test]
fn matches_dense_exponential_on_examples() {
    for id in 1..=3 {
        let sys = assemble_example(id, 16, 16).unwrap();
        let ad = dense(&sys.a);
        let v = DMatrix::from_fn(sys.n(), 3, |i, j| ((i * (j + 3)) as f64 * 0.37).sin());
        for tol in [1e-4, 1e-8] {
            for t in [1e-3, 1e-2, 1e-1] {
                let want = dense_expm(&ad, t).unwrap() * &v;
                for cfg in [
                    ExpmConfig::default().with_tol(tol),
                    ExpmConfig { block_width: 1, reorthogonalize: false, ..ExpmConfig::default().with_tol(tol) },
                ] {
                    let got = expm_action(&sys.a, &v, t, &cfg).unwrap();
                    let err = (&got - &want).norm() / v.norm();
                    assert!(err <= 10.0 * tol, "ex{id} t={t} tol={tol}: {err:.2e}");
                }
            }
        }
    }
}
