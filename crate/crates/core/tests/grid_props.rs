use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;
use proptest::prelude::*;

use lowrank_dre::grid::{
    assemble_example, build_boundary_trace_output, build_laplacian_2d, build_mean_output,
    build_normal_derivative_output, laplacian, Boundary, Edge, EdgeSpec, Grid,
};

fn dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Dirichlet), Just(Boundary::Neumann)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_dirichlet_edge_gives_negative_definite_symmetric_a(
        nx in 2usize..=16,
        ny in 2usize..=16,
        edges in proptest::array::uniform4(boundary()),
    ) {
        let bc = EdgeSpec { left: edges[0], right: edges[1], bottom: edges[2], top: edges[3] };
        prop_assume!(bc.has_dirichlet());
        let a = dense(&build_laplacian_2d(nx, ny, bc).unwrap());
        prop_assert_eq!(a.nrows(), nx * ny);
        prop_assert!((&a - a.transpose()).amax() == 0.0);
        let eig = SymmetricEigen::new(a);
        prop_assert!(eig.eigenvalues.iter().all(|&l| l < 0.0));
    }

    #[test]
    fn dirichlet_spectrum_matches_formula(n in 2usize..=16) {
        let a = dense(&build_laplacian_2d(n, n, EdgeSpec::all(Boundary::Dirichlet)).unwrap());
        let h = 1.0 / (n as f64 + 1.0);
        let mut want: Vec<f64> = (1..=n)
            .flat_map(|i| (1..=n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let s = |k: usize| (k as f64 * PI * h / 2.0).sin().powi(2);
                -(4.0 / (h * h)) * (s(i) + s(j))
            })
            .collect();
        let mut got: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-10 * w.abs());
        }
    }
}

/// Least-squares slope of log(error) against log(h).
fn observed_order(hs: &[f64], errs: &[f64]) -> f64 {
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.abs().ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn assert_order(name: &str, want: f64, f: impl Fn(usize) -> (f64, f64)) {
    let (hs, errs): (Vec<f64>, Vec<f64>) = [8usize, 16, 32, 64].iter().map(|&n| f(n)).unzip();
    let p = observed_order(&hs, &errs);
    assert!((p - want).abs() <= 0.5, "{name}: observed order {p}, expected {want}");
}

#[test]
fn output_rows_converge_at_their_orders() {
    let mixed = EdgeSpec::dirichlet_left();
    assert_order("mean of sine product", 2.0, |n| {
        let g = Grid::new(n, n, EdgeSpec::all(Boundary::Dirichlet)).unwrap();
        let c = build_mean_output(&g);
        let v = (&c * g.sample(|a, b| (PI * a).sin() * (PI * b).sin()))[0];
        (g.x.h, v - 4.0 / (PI * PI))
    });
    assert_order("mean of constant", 1.0, |n| {
        let g = Grid::new(n, n, EdgeSpec::all(Boundary::Dirichlet)).unwrap();
        (g.x.h, (&build_mean_output(&g) * g.sample(|_, _| 1.0))[0] - 1.0)
    });
    assert_order("boundary trace", 1.0, |n| {
        let g = Grid::new(n, n, mixed).unwrap();
        let c = build_boundary_trace_output(&g, &[Edge::Top, Edge::Bottom]).unwrap();
        // Exact value: ∫ ξ₁² dξ₁ on the bottom edge plus 2 ∫ ξ₁² dξ₁ on top.
        let v = (&c * g.sample(|a, b| a * a * (1.0 + b * b)))[0];
        (g.x.h, v - 1.0)
    });
    assert_order("normal derivative, bottom", 1.0, |n| {
        let g = Grid::new(n, n, mixed).unwrap();
        let c = build_normal_derivative_output(&g, &[Edge::Bottom]);
        (g.y.h, (&c * g.sample(|_, b| b))[0] + 1.0)
    });
    assert_order("normal derivative, top", 1.0, |n| {
        let g = Grid::new(n, n, mixed).unwrap();
        let c = build_normal_derivative_output(&g, &[Edge::Top]);
        (g.y.h, (&c * g.sample(|_, b| b * b))[0] - 2.0)
    });
}

/// Smallest-magnitude eigenvalue by inverse iteration with CG solves.
fn smallest_eigenvalue(a: &CsrMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mul = |x: &DVector<f64>| -(a * x);
    let mut v = DVector::from_element(n, 1.0).normalize();
    let mut lambda = 0.0;
    for _ in 0..30 {
        // Solve (-A) w = v.
        let mut w = DVector::zeros(n);
        let mut r = v.clone();
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        for _ in 0..10 * n {
            let ap = mul(&p);
            let step = rr / p.dot(&ap);
            w += step * &p;
            r -= step * &ap;
            let next = r.dot(&r);
            if next.sqrt() < 1e-12 {
                break;
            }
            p = &r + (next / rr) * &p;
            rr = next;
        }
        v = w.normalize();
        lambda = -v.dot(&mul(&v));
    }
    lambda
}

#[test]
fn lowest_dirichlet_mode_approaches_continuum() {
    let g = Grid::new(64, 64, EdgeSpec::all(Boundary::Dirichlet)).unwrap();
    let l = smallest_eigenvalue(&laplacian(&g));
    let want = -2.0 * PI * PI;
    assert!((l - want).abs() <= 0.01 * want.abs(), "{l}");
}

#[test]
fn examples_are_well_formed() {
    for id in 1..=4 {
        for n in [4usize, 7] {
            let sys = assemble_example(id, n, n).unwrap();
            assert_eq!(sys.n(), n * n);
            let a = sys.a_dense();
            assert!((&a - a.transpose()).amax() == 0.0);
            assert!(a.iter().chain(sys.b.iter()).chain(sys.c.iter()).all(|v| v.is_finite()));
            assert_eq!(sys.g.nrows(), 0);
        }
    }
}
