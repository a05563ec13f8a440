//! Gram matrices, the ultra-weak coupling operator, load vectors and the
//! mild least-squares baseline system.

mod sparse;

use std::sync::Arc;

use rayon::prelude::*;

pub use sparse::{SparseMatrix, TripletBuilder};

use crate::error::{Error, Result};
use crate::fespace::{make_space, AffineMap, BasisValues, Constraint, Family, FeSpace};
use crate::mesh::{local_edge, FacetTag, Triangulation};
use crate::problem::ProblemData;
use crate::quadrature::{edge_rule, triangle_rule};

/// Extra quadrature exactness for non-polynomial data.
pub const DATA_QUADRATURE_ALLOWANCE: usize = 6;

/// Trial space `X = S^{-1}_p(T)^2 x S^{-1}_p(T)`. Coefficients are ordered
/// as `[p_x, p_y, u]`, each block following the scalar DG numbering.
#[derive(Clone, Debug)]
pub struct TrialSpace {
    pub scalar: Arc<FeSpace>,
}

impl TrialSpace {
    pub fn new(mesh: &Arc<Triangulation>, degree: usize) -> Result<Self> {
        Ok(Self {
            scalar: Arc::new(make_space(mesh, Family::Dg, degree, Constraint::None)?),
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        self.scalar.mesh()
    }

    pub fn degree(&self) -> usize {
        self.scalar.degree()
    }

    /// Dimension of one scalar component.
    pub fn block_dim(&self) -> usize {
        self.scalar.dim()
    }

    pub fn dim(&self) -> usize {
        3 * self.scalar.dim()
    }

    /// Splits coefficients into `(p_x, p_y, u)`.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let n = self.block_dim();
        (&x[..n], &x[n..2 * n], &x[2 * n..3 * n])
    }
}

/// Test space `Y = (RT_q x S^0_r) ∩ Y` with `RT` normal traces vanishing
/// on the Neumann part and Lagrange traces vanishing on the Dirichlet part.
/// Coefficients are ordered `[mu, lambda]`.
#[derive(Clone, Debug)]
pub struct TestSpace {
    pub rt: Arc<FeSpace>,
    pub lagrange: Arc<FeSpace>,
}

impl TestSpace {
    pub fn new(
        mesh: &Arc<Triangulation>,
        rt_degree: usize,
        lagrange_degree: usize,
    ) -> Result<Self> {
        Ok(Self {
            rt: Arc::new(make_space(
                mesh,
                Family::RaviartThomas,
                rt_degree,
                Constraint::ZeroNormalTraceNeumann,
            )?),
            lagrange: Arc::new(make_space(
                mesh,
                Family::Lagrange,
                lagrange_degree,
                Constraint::ZeroTraceDirichlet,
            )?),
        })
    }

    /// `(RT_p x S^0_{p+2}) ∩ Y`.
    pub fn standard(mesh: &Arc<Triangulation>, p: usize) -> Result<Self> {
        Self::new(mesh, p, p + 2)
    }

    /// `(RT_{p+1} x S^0_{p+3}) ∩ Y`.
    pub fn enriched(mesh: &Arc<Triangulation>, p: usize) -> Result<Self> {
        Self::new(mesh, p + 1, p + 3)
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        self.rt.mesh()
    }

    pub fn dim(&self) -> usize {
        self.rt.dim() + self.lagrange.dim()
    }

    pub fn split<'a>(&self, y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        y.split_at(self.rt.dim())
    }
}

/// Blocks of the discrete minimal-residual problem.
#[derive(Clone, Debug)]
pub struct SystemBlocks {
    /// Gram matrix of the test space.
    pub a: SparseMatrix,
    /// Coupling `B[y, x] = G(phi_x)(phi_y)`.
    pub b: SparseMatrix,
    pub f: Vec<f64>,
    /// Gram matrix of the trial space.
    pub mx: SparseMatrix,
}

impl SystemBlocks {
    pub fn new(a: SparseMatrix, b: SparseMatrix, f: Vec<f64>, mx: SparseMatrix) -> Result<Self> {
        let (ny, nx) = (b.nrows(), b.ncols());
        if a.nrows() != ny
            || a.ncols() != ny
            || f.len() != ny
            || mx.nrows() != nx
            || mx.ncols() != nx
        {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, f {}, MX {}x{}",
                a.nrows(),
                a.ncols(),
                ny,
                nx,
                f.len(),
                mx.nrows(),
                mx.ncols()
            )));
        }
        Ok(Self { a, b, f, mx })
    }

    pub fn dim_x(&self) -> usize {
        self.b.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.b.nrows()
    }
}

fn shifted(dofs: &[Option<usize>], offset: usize) -> Vec<Option<usize>> {
    dofs.iter().map(|d| d.map(|g| g + offset)).collect()
}

/// Quadrature points in reference coordinates and their weights.
fn reference_rule(degree: usize) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let rule = triangle_rule(degree)?;
    Ok((rule.xy().collect(), rule.weights))
}

/// Runs `local` on every element (in parallel when the pool allows) and
/// scatters the results in element order.
fn assemble_elements<F>(mesh: &Triangulation, nrows: usize, ncols: usize, local: F) -> SparseMatrix
where
    F: Fn(usize) -> Vec<(Vec<Option<usize>>, Vec<Option<usize>>, Vec<f64>)> + Sync,
{
    let blocks: Vec<_> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(&local)
        .collect();
    let capacity = blocks
        .iter()
        .flat_map(|b| b.iter().map(|(r, c, _)| r.len() * c.len()))
        .sum();
    let mut builder = TripletBuilder::with_capacity(nrows, ncols, capacity);
    for element in &blocks {
        for (rows, cols, values) in element {
            builder.add_local(rows, cols, values);
        }
    }
    builder.build()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GramKind {
    L2,
    H1,
    Hdiv,
}

fn gram(space: &FeSpace, kind: GramKind) -> Result<SparseMatrix> {
    let (points, weights) = reference_rule(2 * space.poly_degree())?;
    let reference = space.tabulate_reference(&points);
    let mesh = space.mesh();
    let n = space.n_local();
    Ok(assemble_elements(mesh, space.dim(), space.dim(), |t| {
        let map = AffineMap::of(mesh, t);
        let tab = space.map_tabulation(t, &map, reference.clone());
        let mut local = vec![0.0; n * n];
        for (q, w) in weights.iter().enumerate() {
            let w = w * map.det.abs();
            match &tab {
                BasisValues::Scalar { values, grads } => {
                    let v = &values[q * n..(q + 1) * n];
                    let g = &grads[q * n..(q + 1) * n];
                    for i in 0..n {
                        for j in 0..n {
                            let mut e = v[i] * v[j];
                            if kind == GramKind::H1 {
                                e += g[i][0] * g[j][0] + g[i][1] * g[j][1];
                            }
                            local[i * n + j] += w * e;
                        }
                    }
                }
                BasisValues::Vector { values, divs } => {
                    let v = &values[q * n..(q + 1) * n];
                    let d = &divs[q * n..(q + 1) * n];
                    for i in 0..n {
                        for j in 0..n {
                            let mut e = v[i][0] * v[j][0] + v[i][1] * v[j][1];
                            if kind == GramKind::Hdiv {
                                e += d[i] * d[j];
                            }
                            local[i * n + j] += w * e;
                        }
                    }
                }
            }
        }
        let dofs = space.dofmap().cell_dofs(t).to_vec();
        vec![(dofs.clone(), dofs, local)]
    }))
}

/// `∫ phi_i phi_j` (dot product for vector-valued spaces).
pub fn gram_l2(space: &FeSpace) -> Result<SparseMatrix> {
    gram(space, GramKind::L2)
}

/// `∫ grad phi_i . grad phi_j + phi_i phi_j`, with element-wise gradients.
pub fn gram_h1(space: &FeSpace) -> Result<SparseMatrix> {
    if space.is_vector() {
        return Err(Error::Unsupported(format!(
            "H1 Gram matrix of {:?} elements",
            space.family()
        )));
    }
    gram(space, GramKind::H1)
}

/// `∫ q_i . q_j + div q_i div q_j` on a Raviart-Thomas space.
pub fn gram_hdiv(space: &FeSpace) -> Result<SparseMatrix> {
    if space.family() != Family::RaviartThomas {
        return Err(Error::Unsupported(format!(
            "H(div) Gram matrix of {:?} elements",
            space.family()
        )));
    }
    gram(space, GramKind::Hdiv)
}

/// Block-diagonal Gram matrix of the test space, `H(div) x H^1`.
pub fn test_gram(test: &TestSpace) -> Result<SparseMatrix> {
    let a1 = gram_hdiv(&test.rt)?;
    let a2 = gram_h1(&test.lagrange)?;
    SparseMatrix::block2x2(&a1, None, None, Some(&a2), a2.nrows(), a2.ncols())
}

/// Block-diagonal L2 Gram matrix of the trial space.
pub fn trial_gram(trial: &TrialSpace) -> Result<SparseMatrix> {
    let m = gram_l2(&trial.scalar)?;
    let n = m.nrows();
    let mut b = TripletBuilder::with_capacity(3 * n, 3 * n, 3 * m.nnz());
    for k in 0..3 {
        for i in 0..n {
            let (cols, vals) = m.row(i);
            for (c, v) in cols.iter().zip(vals) {
                b.add(k * n + i, k * n + c, *v);
            }
        }
    }
    Ok(b.build())
}

/// Coupling matrix of `G(p, u)(mu, lambda) = ∫ p.mu + u div mu + p.grad lambda`.
pub fn ultraweak_operator(trial: &TrialSpace, test: &TestSpace) -> Result<SparseMatrix> {
    if !trial.scalar.same_mesh(&test.rt) || !trial.scalar.same_mesh(&test.lagrange) {
        return Err(Error::MeshMismatch);
    }
    if trial.scalar.family() != Family::Dg
        || test.rt.family() != Family::RaviartThomas
        || test.lagrange.family() != Family::Lagrange
    {
        return Err(Error::Unsupported(
            "ultra-weak operator needs DG trial and RT x Lagrange test spaces".into(),
        ));
    }
    let mesh = trial.mesh();
    let degree =
        trial.scalar.poly_degree() + test.rt.poly_degree().max(test.lagrange.poly_degree());
    let (points, weights) = reference_rule(degree)?;
    let ref_x = trial.scalar.tabulate_reference(&points);
    let ref_rt = test.rt.tabulate_reference(&points);
    let ref_l = test.lagrange.tabulate_reference(&points);
    let nd = trial.scalar.n_local();
    let nr = test.rt.n_local();
    let nl = test.lagrange.n_local();
    let nx = trial.block_dim();
    let rt_dim = test.rt.dim();
    Ok(assemble_elements(mesh, test.dim(), trial.dim(), |t| {
        let map = AffineMap::of(mesh, t);
        let BasisValues::Scalar { values: phi, .. } =
            trial.scalar.map_tabulation(t, &map, ref_x.clone())
        else {
            unreachable!()
        };
        let BasisValues::Vector { values: mu, divs } =
            test.rt.map_tabulation(t, &map, ref_rt.clone())
        else {
            unreachable!()
        };
        let BasisValues::Scalar { grads: dl, .. } =
            test.lagrange.map_tabulation(t, &map, ref_l.clone())
        else {
            unreachable!()
        };
        // one local block per (test component, trial component)
        let mut rt_px = vec![0.0; nr * nd];
        let mut rt_py = vec![0.0; nr * nd];
        let mut rt_u = vec![0.0; nr * nd];
        let mut l_px = vec![0.0; nl * nd];
        let mut l_py = vec![0.0; nl * nd];
        for (q, w) in weights.iter().enumerate() {
            let w = w * map.det.abs();
            let ph = &phi[q * nd..(q + 1) * nd];
            for i in 0..nr {
                let m = mu[q * nr + i];
                let d = divs[q * nr + i];
                for j in 0..nd {
                    let wp = w * ph[j];
                    rt_px[i * nd + j] += wp * m[0];
                    rt_py[i * nd + j] += wp * m[1];
                    rt_u[i * nd + j] += wp * d;
                }
            }
            for i in 0..nl {
                let g = dl[q * nl + i];
                for j in 0..nd {
                    let wp = w * ph[j];
                    l_px[i * nd + j] += wp * g[0];
                    l_py[i * nd + j] += wp * g[1];
                }
            }
        }
        let xd = trial.scalar.dofmap().cell_dofs(t);
        let rows_rt = test.rt.dofmap().cell_dofs(t).to_vec();
        let rows_l = shifted(test.lagrange.dofmap().cell_dofs(t), rt_dim);
        let (cx, cy, cu) = (xd.to_vec(), shifted(xd, nx), shifted(xd, 2 * nx));
        vec![
            (rows_rt.clone(), cx.clone(), rt_px),
            (rows_rt.clone(), cy.clone(), rt_py),
            (rows_rt, cu, rt_u),
            (rows_l.clone(), cx, l_px),
            (rows_l, cy, l_py),
        ]
    }))
}

/// Boundary facets with a given tag, as `(facet, triangle, local edge)`.
fn boundary_edges(mesh: &Triangulation, tag: FacetTag) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (f, facet) in mesh.facets().iter().enumerate() {
        if facet.tag != tag {
            continue;
        }
        let t = facet.triangles[0];
        let tf = mesh.triangle_facets(t);
        let i = (0..3)
            .find(|&i| tf[i] == f)
            .expect("facet belongs to its triangle");
        out.push((f, t, i));
    }
    out
}

/// Edge quadrature on local edge `i` of `t`: reference points, physical
/// points, weights (including the edge length) and the outward unit normal.
#[allow(clippy::type_complexity)]
fn edge_quadrature(
    mesh: &Triangulation,
    t: usize,
    i: usize,
    degree: usize,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<f64>, [f64; 2])> {
    let tri = mesh.triangles()[t];
    let (a, b) = local_edge(&tri, i);
    let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
    let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
    // triangles are counter-clockwise, so (t_y, -t_x) points outward
    let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
    let rule = edge_rule(degree)?;
    let map = AffineMap::of(mesh, t);
    let phys: Vec<[f64; 2]> = rule
        .points
        .iter()
        .map(|s| [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])])
        .collect();
    let refs = phys.iter().map(|x| map.pullback(*x)).collect();
    let weights = rule.weights.iter().map(|w| w * len).collect();
    Ok((refs, phys, weights, normal))
}

/// Load vector `f(mu, lambda) = ∫_{Γ_D} h_D mu.n + ∫ g lambda + ∫_{Γ_N} h_N lambda`.
pub fn ultraweak_rhs(test: &TestSpace, data: &ProblemData) -> Result<Vec<f64>> {
    let mesh = test.mesh();
    let rt_dim = test.rt.dim();
    let mut f = vec![0.0; test.dim()];
    if let Some(hd) = &data.dirichlet {
        let degree = test.rt.poly_degree() + DATA_QUADRATURE_ALLOWANCE;
        let n = test.rt.n_local();
        for (_, t, i) in boundary_edges(mesh, FacetTag::Dirichlet) {
            let (refs, phys, weights, normal) = edge_quadrature(mesh, t, i, degree)?;
            let BasisValues::Vector { values, .. } = test.rt.eval_basis(t, &refs)? else {
                unreachable!()
            };
            let dofs = test.rt.dofmap().cell_dofs(t);
            for (q, w) in weights.iter().enumerate() {
                let h = w * hd(phys[q]);
                for j in 0..n {
                    if let Some(g) = dofs[j] {
                        let v = values[q * n + j];
                        f[g] += h * (v[0] * normal[0] + v[1] * normal[1]);
                    }
                }
            }
        }
    }
    let n = test.lagrange.n_local();
    if let Some(hn) = &data.neumann {
        let degree = test.lagrange.poly_degree() + DATA_QUADRATURE_ALLOWANCE;
        for (_, t, i) in boundary_edges(mesh, FacetTag::Neumann) {
            let (refs, phys, weights, _) = edge_quadrature(mesh, t, i, degree)?;
            let BasisValues::Scalar { values, .. } = test.lagrange.eval_basis(t, &refs)? else {
                unreachable!()
            };
            let dofs = test.lagrange.dofmap().cell_dofs(t);
            for (q, w) in weights.iter().enumerate() {
                let h = w * hn(phys[q]);
                for j in 0..n {
                    if let Some(g) = dofs[j] {
                        f[rt_dim + g] += h * values[q * n + j];
                    }
                }
            }
        }
    }
    if let Some(g) = &data.source {
        let (points, weights) =
            reference_rule(test.lagrange.poly_degree() + DATA_QUADRATURE_ALLOWANCE)?;
        let reference = test.lagrange.tabulate_reference(&points);
        let BasisValues::Scalar { values, .. } = &reference else {
            unreachable!()
        };
        for t in 0..mesh.n_triangles() {
            let map = AffineMap::of(mesh, t);
            let dofs = test.lagrange.dofmap().cell_dofs(t);
            let signs = test.lagrange.dofmap().cell_signs(t);
            for (q, w) in weights.iter().enumerate() {
                let gw = w * map.det.abs() * g(map.apply(points[q]));
                for j in 0..n {
                    if let Some(d) = dofs[j] {
                        f[rt_dim + d] += gw * signs[j] * values[q * n + j];
                    }
                }
            }
        }
    }
    Ok(f)
}

/// All blocks of the ultra-weak minimal-residual system.
pub fn assemble_ultraweak(
    trial: &TrialSpace,
    test: &TestSpace,
    data: &ProblemData,
) -> Result<SystemBlocks> {
    let a = test_gram(test)?;
    let b = ultraweak_operator(trial, test)?;
    let f = ultraweak_rhs(test, data)?;
    let mx = trial_gram(trial)?;
    SystemBlocks::new(a, b, f, mx)
}

/// Normal equations of `min ||q - grad w||^2 + ||div q + g||^2` over
/// `(RT_p ∩ H_{0,Γ_N}(div)) x (S^0_r ∩ H^1_{0,Γ_D})`, unknowns ordered
/// `[q, w]`. Only homogeneous boundary data are supported.
pub fn mild_fosls_system(
    rt: &FeSpace,
    lagrange: &FeSpace,
    data: &ProblemData,
) -> Result<(SparseMatrix, Vec<f64>)> {
    if !data.has_homogeneous_boundary_data() {
        return Err(Error::Unsupported(
            "the mild least-squares baseline requires homogeneous boundary data".into(),
        ));
    }
    if rt.family() != Family::RaviartThomas
        || rt.constraint() != Constraint::ZeroNormalTraceNeumann
        || lagrange.family() != Family::Lagrange
        || lagrange.constraint() != Constraint::ZeroTraceDirichlet
    {
        return Err(Error::Unsupported(
            "mild baseline needs constrained RT and Lagrange spaces".into(),
        ));
    }
    if !rt.same_mesh(lagrange) {
        return Err(Error::MeshMismatch);
    }
    let mesh = rt.mesh();
    let degree = 2 * rt.poly_degree().max(lagrange.poly_degree());
    let (points, weights) = reference_rule(degree)?;
    let ref_q = rt.tabulate_reference(&points);
    let ref_w = lagrange.tabulate_reference(&points);
    let nq = rt.n_local();
    let nw = lagrange.n_local();
    let q_dim = rt.dim();
    let dim = q_dim + lagrange.dim();
    let matrix = assemble_elements(mesh, dim, dim, |t| {
        let map = AffineMap::of(mesh, t);
        let BasisValues::Vector { values: qv, divs } = rt.map_tabulation(t, &map, ref_q.clone())
        else {
            unreachable!()
        };
        let BasisValues::Scalar { grads: wg, .. } = lagrange.map_tabulation(t, &map, ref_w.clone())
        else {
            unreachable!()
        };
        let mut qq = vec![0.0; nq * nq];
        let mut qw = vec![0.0; nq * nw];
        let mut ww = vec![0.0; nw * nw];
        for (k, w) in weights.iter().enumerate() {
            let w = w * map.det.abs();
            let q = &qv[k * nq..(k + 1) * nq];
            let d = &divs[k * nq..(k + 1) * nq];
            let g = &wg[k * nw..(k + 1) * nw];
            for i in 0..nq {
                for j in 0..nq {
                    qq[i * nq + j] += w * (q[i][0] * q[j][0] + q[i][1] * q[j][1] + d[i] * d[j]);
                }
                for j in 0..nw {
                    qw[i * nw + j] -= w * (q[i][0] * g[j][0] + q[i][1] * g[j][1]);
                }
            }
            for i in 0..nw {
                for j in 0..nw {
                    ww[i * nw + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        let mut wq = vec![0.0; nw * nq];
        for i in 0..nq {
            for j in 0..nw {
                wq[j * nq + i] = qw[i * nw + j];
            }
        }
        let rq = rt.dofmap().cell_dofs(t).to_vec();
        let rw = shifted(lagrange.dofmap().cell_dofs(t), q_dim);
        vec![
            (rq.clone(), rq.clone(), qq),
            (rq.clone(), rw.clone(), qw),
            (rw.clone(), rq, wq),
            (rw.clone(), rw, ww),
        ]
    });
    let mut rhs = vec![0.0; dim];
    if let Some(g) = &data.source {
        let (points, weights) = reference_rule(rt.poly_degree() + DATA_QUADRATURE_ALLOWANCE)?;
        let reference = rt.tabulate_reference(&points);
        for t in 0..mesh.n_triangles() {
            let map = AffineMap::of(mesh, t);
            let BasisValues::Vector { divs, .. } = rt.map_tabulation(t, &map, reference.clone())
            else {
                unreachable!()
            };
            let dofs = rt.dofmap().cell_dofs(t);
            for (k, w) in weights.iter().enumerate() {
                let gw = w * map.det.abs() * g(map.apply(points[k]));
                for j in 0..nq {
                    if let Some(d) = dofs[j] {
                        rhs[d] -= gw * divs[k * nq + j];
                    }
                }
            }
        }
    }
    Ok((matrix, rhs))
}
