//! Inf-sup constants, the built-in error estimator, the discrete Helmholtz
//! decomposition check, error norms and observed convergence rates.

use std::sync::Arc;

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::assembly::{SparseMatrix, TestSpace, TrialSpace};
use crate::error::{Error, Result};
use crate::fespace::{
    make_space, AffineMap, BasisValues, Constraint, DiscreteFunction, Family, FeSpace,
};
use crate::mesh::Triangulation;
use crate::problem::{ExactSolution, ProblemData};
use crate::quadrature::triangle_rule;
use crate::solve::{norm, Cholesky, SolveResult};

/// Trial dimensions up to this size use a dense eigensolver for the
/// inf-sup constant.
pub const DENSE_INFSUP_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfSupMethod {
    DenseEig,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct InfSupReport {
    /// `sqrt(lambda_min)` of the pencil `(B^T A^{-1} B, MX)`.
    pub gamma_tilde: f64,
    /// `sqrt(lambda_max)` of the same pencil, the discrete operator norm.
    pub gamma_max: f64,
    pub dim_x: usize,
    pub dim_y: usize,
    pub method: InfSupMethod,
    /// `||S v - lambda MX v|| / ||S v||` of the computed eigenpair.
    pub residual: f64,
}

/// Dense `B^T A^{-1} B`, built in column chunks.
pub fn dense_schur(chol: &Cholesky, b: &SparseMatrix) -> Mat<f64> {
    let (ny, nx) = (b.nrows(), b.ncols());
    let bt = b.transpose();
    const CHUNK: usize = 64;
    let starts: Vec<usize> = (0..nx).step_by(CHUNK).collect();
    let columns: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&start| {
            let k = CHUNK.min(nx - start);
            let mut z = Mat::<f64>::zeros(ny, k);
            for j in 0..k {
                let (rows, vals) = bt.row(start + j);
                for (r, v) in rows.iter().zip(vals) {
                    z[(*r, j)] = *v;
                }
            }
            chol.solve_mat(&mut z);
            // S[:, start + j] = B^T z_j
            let mut out = vec![0.0; nx * k];
            for i in 0..nx {
                let (rows, vals) = bt.row(i);
                for j in 0..k {
                    out[j * nx + i] = rows.iter().zip(vals).map(|(r, v)| v * z[(*r, j)]).sum();
                }
            }
            out
        })
        .collect();
    let mut s = Mat::zeros(nx, nx);
    for (c, &start) in starts.iter().enumerate() {
        let k = CHUNK.min(nx - start);
        for j in 0..k {
            for i in 0..nx {
                s[(i, start + j)] = columns[c][j * nx + i];
            }
        }
    }
    // symmetrize away round-off
    for i in 0..nx {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Discrete inf-sup constant `gamma~ = sqrt(lambda_min(B^T A^{-1} B, MX))`.
pub fn infsup_gamma(a: &SparseMatrix, b: &SparseMatrix, mx: &SparseMatrix) -> Result<InfSupReport> {
    let method = if b.ncols() <= DENSE_INFSUP_LIMIT {
        InfSupMethod::DenseEig
    } else {
        InfSupMethod::Lanczos
    };
    infsup_gamma_with(a, b, mx, method)
}

pub fn infsup_gamma_with(
    a: &SparseMatrix,
    b: &SparseMatrix,
    mx: &SparseMatrix,
    method: InfSupMethod,
) -> Result<InfSupReport> {
    let (ny, nx) = (b.nrows(), b.ncols());
    if a.nrows() != ny || a.ncols() != ny || mx.nrows() != nx || mx.ncols() != nx {
        return Err(Error::Dimension(
            "inf-sup blocks have inconsistent sizes".into(),
        ));
    }
    if nx == 0 {
        return Err(Error::InvalidInput("empty trial space".into()));
    }
    let chol = Cholesky::new(a)?;
    let mx_chol = Cholesky::new(mx)?;
    let (lo, hi, residual) = match method {
        InfSupMethod::DenseEig => dense_pencil(&chol, b, mx)?,
        InfSupMethod::Lanczos => lanczos_pencil(&chol, &mx_chol, b, mx)?,
    };
    Ok(InfSupReport {
        gamma_tilde: lo.max(0.0).sqrt(),
        gamma_max: hi.max(0.0).sqrt(),
        dim_x: nx,
        dim_y: ny,
        method,
        residual,
    })
}

fn dense_pencil(chol: &Cholesky, b: &SparseMatrix, mx: &SparseMatrix) -> Result<(f64, f64, f64)> {
    let nx = b.ncols();
    let s = dense_schur(chol, b);
    let m = mx.to_dense();
    let l = m
        .llt(Side::Lower)
        .map_err(|e| Error::NotPositiveDefinite(format!("trial Gram matrix: {e:?}")))?;
    let lmat = l.L().to_owned();
    // C = L^{-1} S L^{-T}
    let mut w = s.clone();
    lmat.as_ref().solve_lower_triangular_in_place(w.as_mut());
    let mut c = w.transpose().to_owned();
    lmat.as_ref().solve_lower_triangular_in_place(c.as_mut());
    for i in 0..nx {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let eig = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigensolve failed: {e:?}")))?;
    let lo = eig.S()[0];
    let hi = eig.S()[nx - 1];
    // residual of the smallest pair in the original pencil, v = L^{-T} u
    let mut v = eig.U().col(0).to_owned().as_mat().to_owned();
    lmat.as_ref()
        .transpose()
        .solve_upper_triangular_in_place(v.as_mut());
    let v: Vec<f64> = (0..nx).map(|i| v[(i, 0)]).collect();
    let sv: Vec<f64> = (0..nx)
        .map(|i| (0..nx).map(|j| s[(i, j)] * v[j]).sum())
        .collect();
    let mv = mx.matvec(&v);
    let r: Vec<f64> = sv.iter().zip(&mv).map(|(a, b)| a - lo * b).collect();
    let residual = norm(&r) / norm(&sv).max(f64::MIN_POSITIVE);
    Ok((lo, hi, residual))
}

/// Lanczos for `MX^{-1} S` in the `MX` inner product with full
/// reorthogonalization; converged when the smallest Ritz value's residual
/// bound falls below `1e-10` times the Ritz value.
fn lanczos_pencil(
    chol: &Cholesky,
    mx_chol: &Cholesky,
    b: &SparseMatrix,
    mx: &SparseMatrix,
) -> Result<(f64, f64, f64)> {
    let nx = b.ncols();
    let max_steps = nx.min(1500);
    let apply_s = |v: &[f64]| -> Vec<f64> { b.transpose_matvec(&chol.solve(&b.matvec(v))) };
    let dot = |a: &[f64], c: &[f64]| -> f64 { a.iter().zip(c).map(|(x, y)| x * y).sum() };
    // deterministic, non-degenerate start vector
    let mut v: Vec<f64> = (0..nx)
        .map(|i| 1.0 + ((i * 7919) % 113) as f64 / 113.0)
        .collect();
    let mut mv = mx.matvec(&v);
    let nrm = dot(&v, &mv).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    mv.iter_mut().for_each(|x| *x /= nrm);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut mbasis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut result = None;
    for step in 0..max_steps {
        let sv = apply_s(&v);
        let mut w = mx_chol.solve(&sv);
        let a = dot(&v, &sv);
        alpha.push(a);
        basis.push(v.clone());
        mbasis.push(mv.clone());
        // two passes of Gram-Schmidt in the MX inner product
        for _ in 0..2 {
            for (q, mq) in basis.iter().zip(&mbasis) {
                let c = dot(mq, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let mw = mx.matvec(&w);
        let bnorm = dot(&w, &mw).max(0.0).sqrt();
        let k = alpha.len();
        let exhausted = bnorm <= 1e-13 * a.abs().max(f64::MIN_POSITIVE) || k == max_steps;
        if step % 10 == 9 || exhausted {
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
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numerical(format!("tridiagonal eigensolve failed: {e:?}")))?;
            let theta = eig.S()[0];
            let bound = bnorm * eig.U()[(k - 1, 0)].abs();
            if bound <= 1e-10 * theta.abs() || exhausted {
                let hi = eig.S()[k - 1];
                let mut x = vec![0.0; nx];
                for (j, q) in basis.iter().enumerate() {
                    let c = eig.U()[(j, 0)];
                    x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += c * qi);
                }
                let sx = apply_s(&x);
                let mxx = mx.matvec(&x);
                let r: Vec<f64> = sx.iter().zip(&mxx).map(|(s, m)| s - theta * m).collect();
                result = Some((theta, hi, norm(&r) / norm(&sx).max(f64::MIN_POSITIVE)));
                break;
            }
        }
        beta.push(bnorm);
        v = w.iter().map(|x| x / bnorm).collect();
        mv = mw.iter().map(|x| x / bnorm).collect();
    }
    result.ok_or_else(|| Error::NoConvergence {
        iterations: max_steps,
        residual: f64::NAN,
    })
}

/// Element indicators and total of the built-in estimator.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    /// `eta_T = sqrt(||mu||^2_{H(div;T)} + ||lambda||^2_{H^1(T)})`.
    pub indicators: Vec<f64>,
    /// `sqrt(sum eta_T^2)`.
    pub estimator: f64,
    /// `sqrt(y^T A y)`, the same quantity from the global Gram matrix.
    pub estimator_global: f64,
    pub err_ref: Option<f64>,
    pub dofs: usize,
}

/// Evaluates the estimator from the test-space multipliers by element
/// quadrature, independently of the assembled Gram matrix `a`, and
/// cross-checks it against `y^T A y`.
pub fn error_estimator(
    sol: &SolveResult,
    test: &TestSpace,
    a: &SparseMatrix,
) -> Result<ErrorReport> {
    let y = sol.y.as_ref().ok_or_else(|| {
        Error::MissingMultipliers(
            "the solve did not produce test-space multipliers; recover them with y = A^{-1}(f - B x)".into(),
        )
    })?;
    if y.len() != test.dim() || a.nrows() != test.dim() {
        return Err(Error::Dimension(format!(
            "multipliers {}, test space {}, Gram {}",
            y.len(),
            test.dim(),
            a.nrows()
        )));
    }
    let (ymu, ylam) = test.split(y);
    let mu = DiscreteFunction::new(test.rt.clone(), ymu.to_vec())?;
    let lam = DiscreteFunction::new(test.lagrange.clone(), ylam.to_vec())?;
    let mesh = test.mesh();
    let degree = 2 * test.rt.poly_degree().max(test.lagrange.poly_degree());
    let rule = triangle_rule(degree)?;
    let points: Vec<[f64; 2]> = rule.xy().collect();
    let ref_mu = test.rt.tabulate_reference(&points);
    let ref_lam = test.lagrange.tabulate_reference(&points);
    let sq: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let map = AffineMap::of(mesh, t);
            let tm = test.rt.map_tabulation(t, &map, ref_mu.clone());
            let tl = test.lagrange.map_tabulation(t, &map, ref_lam.clone());
            let BasisValues::Vector {
                values: mv,
                divs: md,
            } = mu.combine(t, &tm, points.len())
            else {
                unreachable!()
            };
            let BasisValues::Scalar {
                values: lv,
                grads: lg,
            } = lam.combine(t, &tl, points.len())
            else {
                unreachable!()
            };
            let mut s = 0.0;
            for (q, w) in rule.weights.iter().enumerate() {
                let e = mv[q][0] * mv[q][0]
                    + mv[q][1] * mv[q][1]
                    + md[q] * md[q]
                    + lv[q] * lv[q]
                    + lg[q][0] * lg[q][0]
                    + lg[q][1] * lg[q][1];
                s += w * map.det.abs() * e;
            }
            s
        })
        .collect();
    let total: f64 = sq.iter().sum();
    let global = a.bilinear(y, y).max(0.0);
    if (total - global).abs() > 1e-8 * global.max(f64::MIN_POSITIVE) && global > 0.0 {
        return Err(Error::Numerical(format!(
            "element-wise estimator {total:.6e} disagrees with y^T A y = {global:.6e}"
        )));
    }
    Ok(ErrorReport {
        indicators: sq.iter().map(|v| v.max(0.0).sqrt()).collect(),
        estimator: total.sqrt(),
        estimator_global: global.sqrt(),
        err_ref: None,
        dofs: sol.x.len(),
    })
}

fn same_mesh(a: &Arc<Triangulation>, b: &Arc<Triangulation>) -> bool {
    Arc::ptr_eq(a, b) || (a.vertices() == b.vertices() && a.triangles() == b.triangles())
}

/// Integrates `integrand(t, x, values_a, values_b)` of two DG functions.
fn dg_pair_integral(
    a: &FeSpace,
    b: &FeSpace,
    degree: usize,
    integrand: impl Fn([f64; 2], &[f64], &[f64]) -> f64 + Sync,
    ca: &[&[f64]],
    cb: &[&[f64]],
) -> Result<f64> {
    let mesh = a.mesh();
    let rule = triangle_rule(degree)?;
    let points: Vec<[f64; 2]> = rule.xy().collect();
    let ref_a = a.tabulate_reference(&points);
    let ref_b = b.tabulate_reference(&points);
    let (na, nb) = (a.n_local(), b.n_local());
    let parts: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let map = AffineMap::of(mesh, t);
            let BasisValues::Scalar { values: va, .. } = a.map_tabulation(t, &map, ref_a.clone())
            else {
                unreachable!()
            };
            let BasisValues::Scalar { values: vb, .. } = b.map_tabulation(t, &map, ref_b.clone())
            else {
                unreachable!()
            };
            let da = a.dofmap().cell_dofs(t);
            let db = b.dofmap().cell_dofs(t);
            let mut s = 0.0;
            let mut fa = vec![0.0; ca.len()];
            let mut fb = vec![0.0; cb.len()];
            for (q, w) in rule.weights.iter().enumerate() {
                for (k, c) in ca.iter().enumerate() {
                    fa[k] = (0..na).map(|j| c[da[j].unwrap()] * va[q * na + j]).sum();
                }
                for (k, c) in cb.iter().enumerate() {
                    fb[k] = (0..nb).map(|j| c[db[j].unwrap()] * vb[q * nb + j]).sum();
                }
                s += w * map.det.abs() * integrand(map.apply(points[q]), &fa, &fb);
            }
            s
        })
        .collect();
    Ok(parts.iter().sum())
}

/// `||(p_a, u_a) - (p_b, u_b)||_{L2^2 x L2}` for two trial functions on the
/// same mesh, possibly of different degrees.
pub fn error_vs_reference(
    trial: &TrialSpace,
    x: &[f64],
    reference: &TrialSpace,
    x_ref: &[f64],
) -> Result<f64> {
    if !same_mesh(trial.mesh(), reference.mesh()) {
        return Err(Error::MeshMismatch);
    }
    if x.len() != trial.dim() || x_ref.len() != reference.dim() {
        return Err(Error::Dimension(
            "coefficient vectors do not match their trial spaces".into(),
        ));
    }
    let (px, py, u) = trial.split(x);
    let (rx, ry, ru) = reference.split(x_ref);
    let degree = 2 * trial.degree().max(reference.degree()) + 2;
    let sq = dg_pair_integral(
        &trial.scalar,
        &reference.scalar,
        degree,
        |_, a, b| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum(),
        &[px, py, u],
        &[rx, ry, ru],
    )?;
    Ok(sq.max(0.0).sqrt())
}

/// `||(p_h, u_h) - (grad u, u)||_{L2^2 x L2}`.
pub fn error_vs_exact(trial: &TrialSpace, x: &[f64], exact: &ExactSolution) -> Result<f64> {
    if x.len() != trial.dim() {
        return Err(Error::Dimension(
            "coefficient vector does not match the trial space".into(),
        ));
    }
    let (px, py, u) = trial.split(x);
    let degree = 2 * trial.degree() + 8;
    let sq = dg_pair_integral(
        &trial.scalar,
        &trial.scalar,
        degree,
        |x, a, _| {
            let g = (exact.grad)(x);
            (a[0] - g[0]).powi(2) + (a[1] - g[1]).powi(2) + (a[2] - (exact.u)(x)).powi(2)
        },
        &[px, py, u],
        &[],
    )?;
    Ok(sq.max(0.0).sqrt())
}

/// L2 distance between a scalar discrete function and a field.
pub fn l2_error_scalar(
    f: &DiscreteFunction,
    target: impl Fn([f64; 2]) -> f64 + Sync,
) -> Result<f64> {
    let space = f.space();
    let mesh = space.mesh();
    let rule = triangle_rule(2 * space.poly_degree() + 8)?;
    let points: Vec<[f64; 2]> = rule.xy().collect();
    let reference = space.tabulate_reference(&points);
    let mut sq = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = AffineMap::of(mesh, t);
        let tab = space.map_tabulation(t, &map, reference.clone());
        let BasisValues::Scalar { values, .. } = f.combine(t, &tab, points.len()) else {
            return Err(Error::InvalidInput("vector-valued function".into()));
        };
        for (q, w) in rule.weights.iter().enumerate() {
            sq += w * map.det.abs() * (values[q] - target(map.apply(points[q]))).powi(2);
        }
    }
    Ok(sq.sqrt())
}

/// L2 distance between an RT function and a vector field.
pub fn l2_error_vector(
    f: &DiscreteFunction,
    target: impl Fn([f64; 2]) -> [f64; 2] + Sync,
) -> Result<f64> {
    let space = f.space();
    let mesh = space.mesh();
    let rule = triangle_rule(2 * space.poly_degree() + 8)?;
    let points: Vec<[f64; 2]> = rule.xy().collect();
    let reference = space.tabulate_reference(&points);
    let mut sq = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = AffineMap::of(mesh, t);
        let tab = space.map_tabulation(t, &map, reference.clone());
        let BasisValues::Vector { values, .. } = f.combine(t, &tab, points.len()) else {
            return Err(Error::InvalidInput("scalar-valued function".into()));
        };
        for (q, w) in rule.weights.iter().enumerate() {
            let e = target(map.apply(points[q]));
            sq +=
                w * map.det.abs() * ((values[q][0] - e[0]).powi(2) + (values[q][1] - e[1]).powi(2));
        }
    }
    Ok(sq.sqrt())
}

/// Element-wise least-squares residual `||q - grad w||^2_T + ||div q + g||^2_T`
/// of the mild baseline, as indicators.
pub fn mild_residual_indicators(
    q: &DiscreteFunction,
    w: &DiscreteFunction,
    data: &ProblemData,
) -> Result<Vec<f64>> {
    let (qs, ws) = (q.space(), w.space());
    if !qs.same_mesh(ws) {
        return Err(Error::MeshMismatch);
    }
    let mesh = qs.mesh();
    let rule = triangle_rule(2 * qs.poly_degree().max(ws.poly_degree()) + 6)?;
    let points: Vec<[f64; 2]> = rule.xy().collect();
    let rq = qs.tabulate_reference(&points);
    let rw = ws.tabulate_reference(&points);
    let out = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let map = AffineMap::of(mesh, t);
            let BasisValues::Vector {
                values: qv,
                divs: qd,
            } = q.combine(t, &qs.map_tabulation(t, &map, rq.clone()), points.len())
            else {
                unreachable!()
            };
            let BasisValues::Scalar { grads: wg, .. } =
                w.combine(t, &ws.map_tabulation(t, &map, rw.clone()), points.len())
            else {
                unreachable!()
            };
            let mut s = 0.0;
            for (k, wt) in rule.weights.iter().enumerate() {
                let g = data
                    .source
                    .as_ref()
                    .map_or(0.0, |g| g(map.apply(points[k])));
                let e = (qv[k][0] - wg[k][0]).powi(2)
                    + (qv[k][1] - wg[k][1]).powi(2)
                    + (qd[k] + g).powi(2);
                s += wt * map.det.abs() * e;
            }
            s.sqrt()
        })
        .collect();
    Ok(out)
}

/// Outcome of the discrete Helmholtz decomposition check.
#[derive(Clone, Debug)]
pub struct HelmholtzReport {
    pub ntri: usize,
    /// Dimension of the divergence-free subspace of `RT_0 ∩ H_{0,Γ_N}(div)`.
    pub dim_rt_div0: usize,
    /// Dimension of the broken-gradient image of `CR_{Γ_D}`.
    pub dim_grad_cr: usize,
    /// `2 #T`, the dimension of piecewise-constant vector fields.
    pub dim_dg2: usize,
    /// Cosine of the smallest principal angle between the two families.
    pub max_cross_inner_product: f64,
}

impl HelmholtzReport {
    pub fn dimensions_add_up(&self) -> bool {
        self.dim_rt_div0 + self.dim_grad_cr == self.dim_dg2
    }
}

/// Singular value decomposition helper: returns `(U, sigma)` of a dense matrix.
fn left_singular(m: &Mat<f64>) -> Result<(Mat<f64>, Vec<f64>)> {
    let svd = m
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let k = m.nrows().min(m.ncols());
    let sigma = (0..k).map(|i| svd.S()[i]).collect();
    Ok((svd.U().to_owned(), sigma))
}

fn numerical_rank(sigma: &[f64]) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().filter(|s| **s > 1e-10 * smax).count()
}

/// Checks `S^{-1}_0(T)^2 = RT_{Γ_N}(div 0) ⊕ grad_T CR_{Γ_D}` on a mesh whose
/// facet tags define the boundary parts.
pub fn helmholtz_verify(mesh: &Arc<Triangulation>) -> Result<HelmholtzReport> {
    let nt = mesh.n_triangles();
    let rt = make_space(
        mesh,
        Family::RaviartThomas,
        0,
        Constraint::ZeroNormalTraceNeumann,
    )?;
    let cr = make_space(
        mesh,
        Family::CrouzeixRaviart,
        1,
        Constraint::CrouzeixRaviartDirichlet,
    )?;
    let centroid = [[1.0 / 3.0, 1.0 / 3.0]];
    // piecewise-constant fields as vectors in R^{2 #T} scaled by sqrt|T|,
    // so Euclidean products are L2 products
    let mut div = Mat::<f64>::zeros(nt, rt.dim());
    let mut rt_vals = Mat::<f64>::zeros(2 * nt, rt.dim());
    let mut cr_grads = Mat::<f64>::zeros(2 * nt, cr.dim());
    for t in 0..nt {
        let s = mesh.area(t).sqrt();
        let BasisValues::Vector { values, divs } = rt.eval_basis(t, &centroid)? else {
            unreachable!()
        };
        for (j, d) in rt.dofmap().cell_dofs(t).iter().enumerate() {
            if let Some(g) = d {
                div[(t, *g)] += s * divs[j];
                rt_vals[(2 * t, *g)] += s * values[j][0];
                rt_vals[(2 * t + 1, *g)] += s * values[j][1];
            }
        }
        let BasisValues::Scalar { grads, .. } = cr.eval_basis(t, &centroid)? else {
            unreachable!()
        };
        for (j, d) in cr.dofmap().cell_dofs(t).iter().enumerate() {
            if let Some(g) = d {
                cr_grads[(2 * t, *g)] += s * grads[j][0];
                cr_grads[(2 * t + 1, *g)] += s * grads[j][1];
            }
        }
    }
    // null space of the divergence from the full SVD of div
    let svd = div
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let k = nt.min(rt.dim());
    let sigma: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let rank = numerical_rank(&sigma);
    let v = svd.V();
    let n_null = rt.dim() - rank;
    let null = Mat::from_fn(rt.dim(), n_null, |i, j| v[(i, rank + j)]);
    let div_free = &rt_vals * &null;
    let (u1, s1) = left_singular(&div_free)?;
    let (u2, s2) = left_singular(&cr_grads)?;
    let r1 = numerical_rank(&s1);
    let r2 = numerical_rank(&s2);
    let q1 = Mat::from_fn(2 * nt, r1, |i, j| u1[(i, j)]);
    let q2 = Mat::from_fn(2 * nt, r2, |i, j| u2[(i, j)]);
    let cross = q1.transpose() * &q2;
    let max_cross = if r1 == 0 || r2 == 0 {
        0.0
    } else {
        cross
            .singular_values()
            .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?[0]
    };
    Ok(HelmholtzReport {
        ntri: nt,
        dim_rt_div0: r1,
        dim_grad_cr: r2,
        dim_dg2: 2 * nt,
        max_cross_inner_product: max_cross,
    })
}

/// Observed rates `-log(v_{i+1}/v_i) / log(N_{i+1}/N_i)` between
/// consecutive points.
pub fn eoc(trace: &[(usize, f64)]) -> Result<Vec<f64>> {
    if trace.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two points for a rate".into(),
        ));
    }
    if let Some((_, v)) = trace.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "rates need positive values, got {v}"
        )));
    }
    trace
        .windows(2)
        .map(|w| {
            let (n0, v0) = w[0];
            let (n1, v1) = w[1];
            if n1 == n0 {
                return Err(Error::InvalidInput("repeated DOF count".into()));
            }
            Ok(-(v1 / v0).ln() / (n1 as f64 / n0 as f64).ln())
        })
        .collect()
}

/// Rate between the first and last point of a window.
pub fn eoc_window(trace: &[(usize, f64)]) -> Result<f64> {
    if trace.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two points for a rate".into(),
        ));
    }
    let ends = [trace[0], trace[trace.len() - 1]];
    Ok(eoc(&ends)?[0])
}

/// Least-squares slope of `-log v` against `log N`.
pub fn eoc_fit(trace: &[(usize, f64)]) -> Result<f64> {
    eoc(trace)?;
    let n = trace.len() as f64;
    let xs: Vec<f64> = trace.iter().map(|(d, _)| (*d as f64).ln()).collect();
    let ys: Vec<f64> = trace.iter().map(|(_, v)| -v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
