//! End-to-end checks of the solver and analysis pipeline against dense
//! linear algebra computed independently with nalgebra.

use std::sync::Arc;

use minresfem::analysis::{error_estimator, error_vs_exact, error_vs_reference, infsup_gamma};
use minresfem::assembly::{assemble_ultraweak, SparseMatrix, SystemBlocks, TestSpace, TrialSpace};
use minresfem::mesh::{initial_square_mesh, uniform_refine, Triangulation};
use minresfem::problem::{Preset, ProblemData};
use minresfem::solve::{reduce_spd, solve_saddle, PreconditionerKind};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m.get(i, j))
}

fn mesh(preset: Preset, refinements: usize) -> Arc<Triangulation> {
    let mut m = initial_square_mesh(&preset.data().boundary);
    for _ in 0..refinements {
        m = uniform_refine(&m);
    }
    Arc::new(m)
}

fn system(
    preset: Preset,
    refinements: usize,
    p: usize,
    enriched: bool,
) -> (TrialSpace, TestSpace, SystemBlocks) {
    let m = mesh(preset, refinements);
    let trial = TrialSpace::new(&m, p).unwrap();
    let test = if enriched {
        TestSpace::enriched(&m, p).unwrap()
    } else {
        TestSpace::standard(&m, p).unwrap()
    };
    let blocks = assemble_ultraweak(&trial, &test, &preset.data()).unwrap();
    (trial, test, blocks)
}

/// `M^{-1/2}` of a symmetric positive definite matrix.
fn inverse_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    assert!(eig.eigenvalues.min() > 0.0);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn saddle_solution_matches_dense_lu() {
    for enriched in [false, true] {
        let (_, _, blocks) = system(Preset::PaperCorner, 0, 0, enriched);
        let (ny, nx) = (blocks.dim_y(), blocks.dim_x());
        let a = dense(&blocks.a);
        let b = dense(&blocks.b);
        let mut k = DMatrix::zeros(nx + ny, nx + ny);
        k.view_mut((0, 0), (ny, ny)).copy_from(&a);
        k.view_mut((0, ny), (ny, nx)).copy_from(&b);
        k.view_mut((ny, 0), (nx, ny)).copy_from(&b.transpose());
        let mut rhs = DVector::zeros(nx + ny);
        rhs.rows_mut(0, ny)
            .copy_from(&DVector::from_column_slice(&blocks.f));
        let oracle = k.lu().solve(&rhs).unwrap();
        let sol = solve_saddle(&blocks).unwrap();
        let x = DVector::from_column_slice(&sol.x);
        let y = DVector::from_column_slice(sol.y.as_ref().unwrap());
        let ox = oracle.rows(ny, nx).into_owned();
        let oy = oracle.rows(0, ny).into_owned();
        assert!((&x - &ox).norm() <= 1e-10 * ox.norm().max(1.0));
        assert!((&y - &oy).norm() <= 1e-10 * oy.norm().max(1.0));
    }
}

#[test]
fn gamma_matches_dense_svd() {
    for (p, enriched) in [(0, false), (0, true), (1, false)] {
        let (_, _, blocks) = system(Preset::PaperCorner, 0, p, enriched);
        let a = dense(&blocks.a);
        let b = dense(&blocks.b);
        let mx = dense(&blocks.mx);
        let t = inverse_sqrt(&mx) * b.transpose() * inverse_sqrt(&a);
        let sv = t.singular_values();
        let report = infsup_gamma(&blocks.a, &blocks.b, &blocks.mx).unwrap();
        assert!(
            rel(report.gamma_tilde, sv.min()) < 1e-8,
            "p={p}: {} vs {}",
            report.gamma_tilde,
            sv.min()
        );
        assert!(rel(report.gamma_max, sv.max()) < 1e-8);
    }
}

#[test]
fn estimator_is_dual_norm_of_residual() {
    let (trial, test, blocks) = system(Preset::PaperCorner, 0, 0, true);
    let sol = solve_saddle(&blocks).unwrap();
    let report = error_estimator(&sol, &test, &blocks.a).unwrap();
    let residual = DVector::from_column_slice(&blocks.f)
        - dense(&blocks.b) * DVector::from_column_slice(&sol.x);
    let oracle = (inverse_sqrt(&dense(&blocks.a)) * residual).norm();
    assert!(oracle > 1e-3);
    assert!(rel(report.estimator, oracle) < 1e-10);
    assert_eq!(report.indicators.len(), trial.mesh().n_triangles());
}

#[test]
fn zero_load_gives_zero_indicators() {
    let m = mesh(Preset::PaperCorner, 1);
    let trial = TrialSpace::new(&m, 1).unwrap();
    let test = TestSpace::enriched(&m, 1).unwrap();
    let data = ProblemData::homogeneous(Preset::PaperCorner.data().boundary);
    let blocks = assemble_ultraweak(&trial, &test, &data).unwrap();
    let sol = solve_saddle(&blocks).unwrap();
    assert!(sol.x.iter().all(|v| *v == 0.0));
    let report = error_estimator(&sol, &test, &blocks.a).unwrap();
    assert!(report.indicators.iter().all(|e| *e == 0.0));
}

#[test]
fn jacobi_reduction_minimises_its_functional() {
    let (_, _, blocks) = system(Preset::PaperCorner, 0, 1, true);
    let reduced = reduce_spd(&blocks, PreconditionerKind::Jacobi).unwrap();
    assert!(reduced.y.is_none());
    let a = dense(&blocks.a);
    let b = dense(&blocks.b);
    let f = DVector::from_column_slice(&blocks.f);
    let k = DMatrix::from_diagonal(&a.diagonal().map(|d| 1.0 / d));
    // minimiser of (Bx - f)^T K (Bx - f) by dense normal equations
    let oracle = (b.transpose() * &k * &b)
        .cholesky()
        .unwrap()
        .solve(&(b.transpose() * &k * &f));
    let x = DVector::from_column_slice(&reduced.x);
    assert!((&x - &oracle).norm() <= 1e-8 * oracle.norm());
    let saddle = DVector::from_column_slice(&solve_saddle(&blocks).unwrap().x);
    assert!(
        (&x - &saddle).norm() > 1e-6 * saddle.norm(),
        "the Jacobi solution differs from the exact one"
    );
}

#[test]
fn saddle_solution_minimises_discrete_dual_norm() {
    let (_, _, blocks) = system(Preset::ManufacturedSmooth, 1, 1, false);
    let x = solve_saddle(&blocks).unwrap().x;
    let a_inv = dense(&blocks.a).try_inverse().unwrap();
    let b = dense(&blocks.b);
    let f = DVector::from_column_slice(&blocks.f);
    let functional = |x: &DVector<f64>| {
        let r = &b * x - &f;
        (r.transpose() * &a_inv * &r)[(0, 0)]
    };
    let x = DVector::from_column_slice(&x);
    let at_x = functional(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for scale in [1e-1, 1e-3, 1e-5] {
        for _ in 0..10 {
            let d = DVector::from_fn(x.len(), |_, _| scale * rng.random_range(-1.0..1.0));
            assert!(functional(&(&x + d)) >= at_x * (1.0 - 1e-12));
        }
    }
}

#[test]
fn gamma_invariant_under_change_of_basis() {
    let (_, _, blocks) = system(Preset::PaperCorner, 0, 0, false);
    let (ny, nx) = (blocks.dim_y(), blocks.dim_x());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut random_invertible = |n: usize| {
        DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 2.0 } else { 0.0 } + rng.random_range(-0.3..0.3),
        )
    };
    let ty = random_invertible(ny);
    let tx = random_invertible(nx);
    let sparse = |m: &DMatrix<f64>| {
        let rows: Vec<f64> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        SparseMatrix::from_dense(m.nrows(), m.ncols(), &rows)
    };
    let a = ty.transpose() * dense(&blocks.a) * &ty;
    let b = ty.transpose() * dense(&blocks.b) * &tx;
    let mx = tx.transpose() * dense(&blocks.mx) * &tx;
    let a = (&a + a.transpose()) * 0.5;
    let mx = (&mx + mx.transpose()) * 0.5;
    let original = infsup_gamma(&blocks.a, &blocks.b, &blocks.mx)
        .unwrap()
        .gamma_tilde;
    let transformed = infsup_gamma(&sparse(&a), &sparse(&b), &sparse(&mx))
        .unwrap()
        .gamma_tilde;
    assert!(rel(transformed, original) < 1e-9);
}

#[test]
fn enriching_the_test_space_never_lowers_gamma() {
    for p in [0, 1] {
        for refinements in [0, 1] {
            let (_, _, standard) = system(Preset::PaperCorner, refinements, p, false);
            let (_, _, enriched) = system(Preset::PaperCorner, refinements, p, true);
            let gs = infsup_gamma(&standard.a, &standard.b, &standard.mx)
                .unwrap()
                .gamma_tilde;
            let ge = infsup_gamma(&enriched.a, &enriched.b, &enriched.mx)
                .unwrap()
                .gamma_tilde;
            assert!(ge >= gs * (1.0 - 1e-10), "p={p}: {ge} < {gs}");
        }
    }
}

#[test]
fn reference_error_tracks_exact_error() {
    let preset = Preset::ManufacturedSmooth;
    let data = preset.data();
    let exact = data.exact.clone().unwrap();
    for p in [0, 1] {
        let (trial, _, blocks) = system(preset, 2, p, false);
        let x = solve_saddle(&blocks).unwrap().x;
        let m = trial.mesh().clone();
        let (rt, xr) = minresfem::adapt::reference_solution(&m, p + 2, &data).unwrap();
        let vs_ref = error_vs_reference(&trial, &x, &rt, &xr).unwrap();
        let vs_exact = error_vs_exact(&trial, &x, &exact).unwrap();
        assert!(
            rel(vs_ref, vs_exact) < 0.10,
            "p={p}: {vs_ref} vs {vs_exact}"
        );
    }
}
