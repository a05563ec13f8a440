//! Sparse factorizations, preconditioned conjugate gradients, and the
//! saddle-point / reduced SPD solvers of the minimal-residual system.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};

use crate::assembly::{SparseMatrix, SystemBlocks};
use crate::error::{Error, Result};

/// Default relative tolerance of inner iterative solves.
pub const INNER_TOL: f64 = 1e-12;
/// Acceptance threshold for block residuals relative to `||f||`.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-9;
/// Saddle systems up to this total size are factorized directly.
pub const DIRECT_SADDLE_LIMIT: usize = 20_000;

/// A symmetric linear map `R^n -> R^n`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// `y = d .* x`
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
    }
}

/// Row-major dense symmetric matrix as an operator.
pub struct Dense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for Dense {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.data[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

/// Sparse Cholesky factorization `A = L L^T`.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "Cholesky of a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let m = a.to_faer()?;
        let llt = m
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.llt.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Solves for several right-hand sides stored as columns.
    pub fn solve_mat(&self, rhs: &mut Mat<f64>) {
        self.llt.solve_in_place(rhs.as_mut());
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Applies `A^{-1}` through a Cholesky factor.
impl LinearOperator for Cholesky {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.solve(x));
    }
}

/// `x -> B^T K B x`
pub struct NormalOperator<'a, K: LinearOperator> {
    pub b: &'a SparseMatrix,
    pub k: &'a K,
}

impl<K: LinearOperator> LinearOperator for NormalOperator<'_, K> {
    fn dim(&self) -> usize {
        self.b.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let bx = self.b.matvec(x);
        let mut kbx = vec![0.0; bx.len()];
        self.k.apply(&bx, &mut kbx);
        y.copy_from_slice(&self.b.transpose_matvec(&kbx));
    }
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `sqrt(r^T P r) / sqrt(b^T P b)`.
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients from a zero initial guess. Stops when
/// the preconditioned residual norm drops below `rel_tol` times its initial
/// value; gives up after `10 n` iterations.
pub fn pcg(
    op: &dyn LinearOperator,
    rhs: &[f64],
    precond: &dyn LinearOperator,
    rel_tol: f64,
) -> Result<PcgResult> {
    let n = op.dim();
    if rhs.len() != n || precond.dim() != n {
        return Err(Error::Dimension(format!(
            "operator {n}, preconditioner {}, right-hand side {}",
            precond.dim(),
            rhs.len()
        )));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    if rz < 0.0 {
        return Err(Error::Breakdown {
            iteration: 0,
            reason: "preconditioner is not positive definite".into(),
        });
    }
    let r0 = rz.sqrt();
    if r0 == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let max_iter = 10 * n.max(1);
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("non-positive curvature {curvature:.3e}"),
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            return Err(Error::Breakdown {
                iteration: it,
                reason: "preconditioner is not positive definite".into(),
            });
        }
        let rel = rz_new.sqrt() / r0;
        if rel <= rel_tol {
            return Ok(PcgResult {
                x,
                iterations: it,
                rel_residual: rel,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: rz.sqrt() / r0,
    })
}

/// Direct solve: Cholesky for symmetric positive definite input, sparse LU
/// otherwise, followed by iterative refinement. Fails when the residual
/// stays above `1e-10 ||rhs||`.
pub fn sparse_solve(m: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n || rhs.len() != n {
        return Err(Error::Dimension(format!(
            "{}x{} system with {} right-hand side entries",
            n,
            m.ncols(),
            rhs.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    enum Factor {
        Chol(Cholesky),
        Lu(Box<Lu<usize, f64>>),
    }
    let factor = match m.is_symmetric(1e-12).then(|| Cholesky::new(m)) {
        Some(Ok(c)) => Factor::Chol(c),
        _ => {
            let lu = m
                .to_faer()?
                .sp_lu()
                .map_err(|e| Error::Singular(format!("{e:?}")))?;
            Factor::Lu(Box::new(lu))
        }
    };
    let apply_inverse = |b: &[f64]| -> Vec<f64> {
        match &factor {
            Factor::Chol(c) => c.solve(b),
            Factor::Lu(lu) => {
                let mut v = Mat::from_fn(n, 1, |i, _| b[i]);
                lu.solve_in_place(v.as_mut());
                (0..n).map(|i| v[(i, 0)]).collect()
            }
        }
    };
    let scale = norm(rhs);
    let mut x = apply_inverse(rhs);
    let mut res = f64::INFINITY;
    for _ in 0..3 {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(
                "factorization produced non-finite values".into(),
            ));
        }
        let r: Vec<f64> = rhs.iter().zip(m.matvec(&x)).map(|(b, ax)| b - ax).collect();
        res = norm(&r);
        if res <= 1e-10 * scale {
            return Ok(x);
        }
        let dx = apply_inverse(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Err(Error::Singular(format!(
        "relative residual {:.3e} after refinement",
        res / scale.max(f64::MIN_POSITIVE)
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    /// `K = A^{-1}` through a Cholesky factorization.
    ExactInverse,
    /// `K = diag(A)^{-1}`.
    Jacobi,
}

/// Test-space preconditioner with estimated spectral bounds of `K A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreconditionerSpec {
    pub kind: PreconditionerKind,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Saddle,
    SpdReduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaddleStrategy {
    /// Direct factorization for small systems, Schur-complement CG otherwise.
    Auto,
    /// Sparse LU of the full block matrix.
    Direct,
    /// CG on `B^T A^{-1} B` preconditioned by the trial Gram matrix.
    SchurCg,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Trial coefficients.
    pub x: Vec<f64>,
    /// Test-space multipliers; absent after a Jacobi-reduced solve.
    pub y: Option<Vec<f64>>,
    pub method: SolveMethod,
    /// Iterations of the outer solver (0 for direct solves).
    pub iterations: usize,
    /// Largest block residual relative to `||f||` (saddle) or the reduced
    /// residual relative to `||B^T K f||` (reduced).
    pub residual: f64,
    pub preconditioner: Option<PreconditionerSpec>,
}

/// Solves `[[A, B], [B^T, 0]] [y; x] = [f; 0]` with the default strategy.
pub fn solve_saddle(blocks: &SystemBlocks) -> Result<SolveResult> {
    solve_saddle_with(blocks, SaddleStrategy::Auto)
}

fn inf_sup_failure(detail: impl std::fmt::Display) -> Error {
    Error::InfSup(format!("singular Schur complement: {detail}"))
}

pub fn solve_saddle_with(blocks: &SystemBlocks, strategy: SaddleStrategy) -> Result<SolveResult> {
    let (ny, nx) = (blocks.dim_y(), blocks.dim_x());
    let chol = Cholesky::new(&blocks.a)?;
    let direct = match strategy {
        SaddleStrategy::Auto => nx + ny <= DIRECT_SADDLE_LIMIT,
        SaddleStrategy::Direct => true,
        SaddleStrategy::SchurCg => false,
    };
    let (x, iterations) = if direct {
        let bt = blocks.b.transpose();
        let k = SparseMatrix::block2x2(&blocks.a, Some(&blocks.b), Some(&bt), None, nx, nx)?;
        let mut rhs = blocks.f.clone();
        rhs.resize(nx + ny, 0.0);
        let sol = sparse_solve(&k, &rhs).map_err(inf_sup_failure)?;
        (sol[ny..].to_vec(), 0)
    } else {
        let mx = Cholesky::new(&blocks.mx)?;
        let schur = NormalOperator {
            b: &blocks.b,
            k: &chol,
        };
        let rhs = blocks.b.transpose_matvec(&chol.solve(&blocks.f));
        let r = pcg(&schur, &rhs, &mx, INNER_TOL).map_err(inf_sup_failure)?;
        (r.x, r.iterations)
    };
    let bx = blocks.b.matvec(&x);
    let y = chol.solve(
        &blocks
            .f
            .iter()
            .zip(&bx)
            .map(|(f, b)| f - b)
            .collect::<Vec<_>>(),
    );
    let ay = blocks.a.matvec(&y);
    let r1: Vec<f64> = (0..ny).map(|i| ay[i] + bx[i] - blocks.f[i]).collect();
    let r2 = blocks.b.transpose_matvec(&y);
    let scale = norm(&blocks.f);
    let residual = if scale == 0.0 {
        0.0
    } else {
        norm(&r1).max(norm(&r2)) / scale
    };
    if residual > BLOCK_RESIDUAL_TOL || !residual.is_finite() {
        return Err(Error::Numerical(format!(
            "saddle-point block residual {residual:.3e} exceeds {BLOCK_RESIDUAL_TOL:.0e}"
        )));
    }
    log::debug!("saddle solve: dim_x={nx} dim_y={ny} direct={direct} iterations={iterations} residual={residual:.2e}");
    Ok(SolveResult {
        x,
        y: Some(y),
        method: SolveMethod::Saddle,
        iterations,
        residual,
        preconditioner: None,
    })
}

/// Extreme eigenvalues of a symmetric operator by Lanczos with full
/// reorthogonalization (at most `steps` iterations).
pub fn lanczos_extremes(op: &dyn LinearOperator, steps: usize) -> Result<(f64, f64)> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    let m = steps.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0)
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    for _ in 0..m {
        op.apply(&v, &mut w);
        let a = dot(&v, &w);
        alpha.push(a);
        basis.push(v.clone());
        for q in &basis {
            let c = dot(q, &w);
            w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
        }
        let b = norm(&w);
        if b <= 1e-14 * a.abs().max(1.0) || basis.len() == m {
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    let k = alpha.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("tridiagonal eigensolve failed: {e:?}")))?;
    Ok((eig[0], eig[k - 1]))
}

/// `K^{1/2} A K^{1/2}` for a diagonal `K`.
struct ScaledOperator<'a> {
    a: &'a SparseMatrix,
    sqrt_k: Vec<f64>,
}

impl LinearOperator for ScaledOperator<'_> {
    fn dim(&self) -> usize {
        self.sqrt_k.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let scaled: Vec<f64> = x.iter().zip(&self.sqrt_k).map(|(a, b)| a * b).collect();
        self.a.matvec_into(&scaled, y);
        y.iter_mut().zip(&self.sqrt_k).for_each(|(a, b)| *a *= b);
    }
}

/// Solves `B^T K B x = B^T K f` by CG preconditioned with the trial Gram
/// matrix. With `K = A^{-1}` the multipliers `y = K (f - B x)` are returned
/// as well.
pub fn reduce_spd(blocks: &SystemBlocks, kind: PreconditionerKind) -> Result<SolveResult> {
    let mx = Cholesky::new(&blocks.mx)?;
    let (x, iterations, residual, spec, y) = match kind {
        PreconditionerKind::ExactInverse => {
            let chol = Cholesky::new(&blocks.a)?;
            let kf = chol.solve(&blocks.f);
            let rhs = blocks.b.transpose_matvec(&kf);
            let op = NormalOperator {
                b: &blocks.b,
                k: &chol,
            };
            let r = pcg(&op, &rhs, &mx, INNER_TOL).map_err(inf_sup_failure)?;
            let residual = reduced_residual(&op, &r.x, &rhs);
            let bx = blocks.b.matvec(&r.x);
            let y = chol.solve(
                &blocks
                    .f
                    .iter()
                    .zip(&bx)
                    .map(|(f, b)| f - b)
                    .collect::<Vec<_>>(),
            );
            let spec = PreconditionerSpec {
                kind,
                lambda_min: 1.0,
                lambda_max: 1.0,
            };
            (r.x, r.iterations, residual, spec, Some(y))
        }
        PreconditionerKind::Jacobi => {
            let d = blocks.a.diagonal();
            if d.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                return Err(Error::NotPositiveDefinite(
                    "Gram diagonal has non-positive entries".into(),
                ));
            }
            let k = Diagonal(d.iter().map(|v| 1.0 / v).collect());
            let scaled = ScaledOperator {
                a: &blocks.a,
                sqrt_k: k.0.iter().map(|v| v.sqrt()).collect(),
            };
            let (lambda_min, lambda_max) = lanczos_extremes(&scaled, 60)?;
            if lambda_min <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "K A has eigenvalue estimate {lambda_min:.3e}"
                )));
            }
            let kf: Vec<f64> = blocks.f.iter().zip(&k.0).map(|(a, b)| a * b).collect();
            let rhs = blocks.b.transpose_matvec(&kf);
            let op = NormalOperator {
                b: &blocks.b,
                k: &k,
            };
            let r = pcg(&op, &rhs, &mx, INNER_TOL).map_err(inf_sup_failure)?;
            let residual = reduced_residual(&op, &r.x, &rhs);
            let spec = PreconditionerSpec {
                kind,
                lambda_min,
                lambda_max,
            };
            (r.x, r.iterations, residual, spec, None)
        }
    };
    if residual > BLOCK_RESIDUAL_TOL || !residual.is_finite() {
        return Err(Error::Numerical(format!(
            "reduced residual {residual:.3e} exceeds {BLOCK_RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(SolveResult {
        x,
        y,
        method: SolveMethod::SpdReduced,
        iterations,
        residual,
        preconditioner: Some(spec),
    })
}

fn reduced_residual(op: &dyn LinearOperator, x: &[f64], rhs: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    op.apply(x, &mut ax);
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let scale = norm(rhs);
    if scale == 0.0 {
        norm(&r)
    } else {
        norm(&r) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> (SparseMatrix, nalgebra::DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose() + nalgebra::DMatrix::identity(n, n) * (n as f64 * 0.1);
        let data: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
        (SparseMatrix::from_dense(n, n, &data), a)
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let id = SparseMatrix::identity(7);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.0).collect();
        let r = pcg(&id, &b, &Identity(7), 1e-10).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.x, b);
    }

    #[test]
    fn pcg_matches_dense_solve() {
        let (a, dense) = random_spd(50, 3);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let r = pcg(&a, &b, &Identity(50), 1e-10).unwrap();
        let oracle = dense
            .lu()
            .solve(&nalgebra::DVector::from_vec(b.clone()))
            .unwrap();
        let err: f64 = (0..50)
            .map(|i| (r.x[i] - oracle[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8 * oracle.norm());
    }

    #[test]
    fn exact_preconditioner_takes_one_iteration() {
        let (a, _) = random_spd(30, 5);
        let chol = Cholesky::new(&a).unwrap();
        let b = vec![1.0; 30];
        let r = pcg(&a, &b, &chol, 1e-10).unwrap();
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn negative_curvature_is_reported() {
        let m = SparseMatrix::from_diagonal(&[1.0, -1.0]);
        let err = pcg(&m, &[1.0, 1.0], &Identity(2), 1e-10).unwrap_err();
        assert!(matches!(err, Error::Breakdown { .. }));
    }

    #[test]
    fn sparse_solve_basic_cases() {
        let b = vec![1.0, -2.0, 3.0];
        assert_eq!(sparse_solve(&SparseMatrix::identity(3), &b).unwrap(), b);
        let x = sparse_solve(&SparseMatrix::from_diagonal(&[2.0, 4.0, -0.5]), &b).unwrap();
        assert_eq!(x, vec![0.5, -0.5, -6.0]);
        let (a, dense) = random_spd(100, 11);
        let b: Vec<f64> = (0..100).map(|i| (0.3 * i as f64).cos()).collect();
        let x = sparse_solve(&a, &b).unwrap();
        let oracle = dense
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_vec(b));
        for i in 0..100 {
            assert!((x[i] - oracle[i]).abs() <= 1e-10 * oracle.amax());
        }
    }

    #[test]
    fn nonsymmetric_solve_uses_lu() {
        let m = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 1, 2.0), (1, 0, 1.0), (2, 2, 3.0), (0, 0, 0.5)],
        )
        .unwrap();
        let x = sparse_solve(&m, &[1.0, 2.0, 3.0]).unwrap();
        let r = m.matvec(&x);
        assert!(
            (r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14
        );
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(sparse_solve(&m, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn indefinite_cholesky_rejected() {
        let m = SparseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            Cholesky::new(&m),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    fn small_blocks(seed: u64, nx: usize, ny: usize) -> SystemBlocks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = random_spd(ny, seed + 1);
        let bd: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = SparseMatrix::from_dense(ny, nx, &bd);
        let f: Vec<f64> = (0..ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mx =
            SparseMatrix::from_diagonal(&(0..nx).map(|i| 1.0 + i as f64 * 0.1).collect::<Vec<_>>());
        SystemBlocks::new(a, b, f, mx).unwrap()
    }

    #[test]
    fn saddle_strategies_agree_with_reduction() {
        let blocks = small_blocks(21, 6, 15);
        let direct = solve_saddle_with(&blocks, SaddleStrategy::Direct).unwrap();
        let cg = solve_saddle_with(&blocks, SaddleStrategy::SchurCg).unwrap();
        let red = reduce_spd(&blocks, PreconditionerKind::ExactInverse).unwrap();
        for i in 0..6 {
            assert!((direct.x[i] - cg.x[i]).abs() < 1e-9);
            assert!((direct.x[i] - red.x[i]).abs() < 1e-9);
        }
        assert_eq!(red.preconditioner.unwrap().lambda_min, 1.0);
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let mut blocks = small_blocks(4, 3, 8);
        blocks.f = vec![0.0; 8];
        let s = solve_saddle(&blocks).unwrap();
        assert!(s.x.iter().all(|v| *v == 0.0));
        assert!(s.y.unwrap().iter().all(|v| *v == 0.0));
        let r = reduce_spd(&blocks, PreconditionerKind::Jacobi).unwrap();
        assert!(r.x.iter().all(|v| *v == 0.0));
        assert!(r.y.is_none());
    }

    #[test]
    fn square_invertible_coupling_has_zero_multiplier() {
        let blocks = small_blocks(9, 10, 10);
        let s = solve_saddle(&blocks).unwrap();
        let y = s.y.unwrap();
        assert!(norm(&y) < 1e-9 * norm(&blocks.f));
        let bx = blocks.b.matvec(&s.x);
        for i in 0..10 {
            assert!((bx[i] - blocks.f[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_coupling_is_an_inf_sup_failure() {
        let mut blocks = small_blocks(2, 3, 6);
        blocks.b = SparseMatrix::zeros(6, 3);
        assert!(matches!(
            solve_saddle_with(&blocks, SaddleStrategy::Direct),
            Err(Error::InfSup(_))
        ));
        assert!(matches!(
            solve_saddle_with(&blocks, SaddleStrategy::SchurCg),
            Err(Error::InfSup(_)) | Ok(_)
        ));
    }

    #[test]
    fn lanczos_finds_diagonal_extremes() {
        let d: Vec<f64> = (1..=40).map(|i| i as f64 * 0.25).collect();
        let (lo, hi) = lanczos_extremes(&SparseMatrix::from_diagonal(&d), 40).unwrap();
        assert!((lo - 0.25).abs() < 1e-10);
        assert!((hi - 10.0).abs() < 1e-10);
    }
}
