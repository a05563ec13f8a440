//! Finite element spaces on a [`Triangulation`]: discontinuous `S^{-1}_p`,
//! continuous Lagrange `S^0_p`, Raviart-Thomas `RT_p` and Crouzeix-Raviart.

pub mod expansion;
mod function;
pub mod reference;

use std::sync::Arc;

pub use function::{l2_project_scalar, l2_project_vector, DiscreteFunction};
pub use reference::{ScalarBasis, VectorBasis};

use crate::error::{Error, Result};
use crate::mesh::{local_edge, FacetTag, Triangulation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Discontinuous piecewise polynomials.
    Dg,
    Lagrange,
    RaviartThomas,
    CrouzeixRaviart,
}

/// Essential constraint built into a space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    None,
    /// Lagrange: zero trace on the closure of the Dirichlet boundary.
    ZeroTraceDirichlet,
    /// Raviart-Thomas: zero normal trace on the Neumann boundary.
    ZeroNormalTraceNeumann,
    /// Crouzeix-Raviart: facet means vanish on the Dirichlet boundary.
    CrouzeixRaviartDirichlet,
}

/// Reference basis of a space.
#[derive(Clone, Debug)]
pub enum ReferenceBasis {
    Scalar(ScalarBasis),
    Vector(VectorBasis),
}

/// Reference basis functions mapped to a physical element.
#[derive(Clone, Debug)]
pub enum BasisValues {
    /// `values[q * n + j]`, `grads[q * n + j]`
    Scalar {
        values: Vec<f64>,
        grads: Vec<[f64; 2]>,
    },
    /// Piola-mapped vectors and divergences.
    Vector {
        values: Vec<[f64; 2]>,
        divs: Vec<f64>,
    },
}

/// Affine map `x = p0 + J xhat` of a triangle.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    pub origin: [f64; 2],
    /// Row-major `J = [[x1-x0, x2-x0], [y1-y0, y2-y0]]`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Row-major `J^{-1}`.
    pub inv: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn of(mesh: &Triangulation, t: usize) -> Self {
        let [p0, p1, p2] = mesh.corners(t);
        let jac = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        Self {
            origin: p0,
            jac,
            det,
            inv,
        }
    }

    pub fn apply(&self, xh: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xh[0] + self.jac[0][1] * xh[1],
            self.origin[1] + self.jac[1][0] * xh[0] + self.jac[1][1] * xh[1],
        ]
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Contravariant Piola map `J v / det J`.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            (self.jac[0][0] * v[0] + self.jac[0][1] * v[1]) / self.det,
            (self.jac[1][0] * v[0] + self.jac[1][1] * v[1]) / self.det,
        ]
    }

    /// Reference coordinates of a physical point.
    pub fn pullback(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }
}

/// Cell-to-global DOF map with orientation signs.
#[derive(Clone, Debug)]
pub struct DofMap {
    n_local: usize,
    /// `None` marks a DOF removed by the essential constraint.
    dofs: Vec<Option<usize>>,
    signs: Vec<f64>,
    dim: usize,
}

impl DofMap {
    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_dofs(&self, t: usize) -> &[Option<usize>] {
        &self.dofs[t * self.n_local..(t + 1) * self.n_local]
    }

    pub fn cell_signs(&self, t: usize) -> &[f64] {
        &self.signs[t * self.n_local..(t + 1) * self.n_local]
    }

    /// Builds the map from unconstrained indices, dropping constrained ones
    /// and renumbering the rest contiguously in order of first appearance.
    fn compress(
        n_local: usize,
        full: Vec<usize>,
        signs: Vec<f64>,
        n_full: usize,
        constrained: &[bool],
    ) -> Self {
        let mut new_index = vec![usize::MAX; n_full];
        let mut next = 0;
        let dofs = full
            .iter()
            .map(|&g| {
                if constrained[g] {
                    None
                } else {
                    if new_index[g] == usize::MAX {
                        new_index[g] = next;
                        next += 1;
                    }
                    Some(new_index[g])
                }
            })
            .collect();
        Self {
            n_local,
            dofs,
            signs,
            dim: next,
        }
    }
}

/// A finite element space bound to a mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Arc<Triangulation>,
    family: Family,
    degree: usize,
    constraint: Constraint,
    basis: ReferenceBasis,
    dofmap: DofMap,
}

/// Builds a space; see [`FeSpace::new`].
pub fn make_space(
    mesh: &Arc<Triangulation>,
    family: Family,
    degree: usize,
    constraint: Constraint,
) -> Result<FeSpace> {
    FeSpace::new(mesh.clone(), family, degree, constraint)
}

impl FeSpace {
    /// Supported: DG `p <= 4`, Lagrange `1 <= p <= 8`, RT `p <= 5`, CR `p = 1`.
    pub fn new(
        mesh: Arc<Triangulation>,
        family: Family,
        degree: usize,
        constraint: Constraint,
    ) -> Result<Self> {
        let ok_degree = match family {
            Family::Dg => degree <= 4,
            Family::Lagrange => (1..=8).contains(&degree),
            Family::RaviartThomas => degree <= 5,
            Family::CrouzeixRaviart => degree == 1,
        };
        if !ok_degree {
            return Err(Error::Unsupported(format!(
                "{family:?} elements of degree {degree}"
            )));
        }
        let ok_constraint = matches!(
            (family, constraint),
            (_, Constraint::None)
                | (Family::Lagrange, Constraint::ZeroTraceDirichlet)
                | (Family::RaviartThomas, Constraint::ZeroNormalTraceNeumann)
                | (
                    Family::CrouzeixRaviart,
                    Constraint::CrouzeixRaviartDirichlet
                )
        );
        if !ok_constraint {
            return Err(Error::Unsupported(format!(
                "constraint {constraint:?} on {family:?} elements"
            )));
        }
        let basis = match family {
            Family::Dg => ReferenceBasis::Scalar(ScalarBasis::orthonormal(degree)),
            Family::Lagrange => ReferenceBasis::Scalar(ScalarBasis::lagrange(degree)),
            Family::CrouzeixRaviart => ReferenceBasis::Scalar(ScalarBasis::crouzeix_raviart()),
            Family::RaviartThomas => ReferenceBasis::Vector(VectorBasis::raviart_thomas(degree)),
        };
        let dofmap = match family {
            Family::Dg => dg_dofmap(&mesh, degree),
            Family::Lagrange => lagrange_dofmap(&mesh, degree, constraint),
            Family::RaviartThomas => rt_dofmap(&mesh, degree, constraint),
            Family::CrouzeixRaviart => cr_dofmap(&mesh, constraint),
        };
        Ok(Self {
            mesh,
            family,
            degree,
            constraint,
            basis,
            dofmap,
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn dim(&self) -> usize {
        self.dofmap.dim
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn is_vector(&self) -> bool {
        matches!(self.basis, ReferenceBasis::Vector(_))
    }

    /// Local DOF count per element.
    pub fn n_local(&self) -> usize {
        self.dofmap.n_local
    }

    /// Highest polynomial degree of the basis functions.
    pub fn poly_degree(&self) -> usize {
        match &self.basis {
            ReferenceBasis::Scalar(b) => b.poly_degree,
            ReferenceBasis::Vector(b) => b.poly_degree(),
        }
    }

    /// Whether two spaces share the same mesh object.
    pub fn same_mesh(&self, other: &FeSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    /// Reference tabulation at reference points, without orientation signs.
    pub fn tabulate_reference(&self, points: &[[f64; 2]]) -> BasisValues {
        let n = self.n_local();
        match &self.basis {
            ReferenceBasis::Scalar(b) => {
                let mut values = vec![0.0; points.len() * n];
                let mut grads = vec![[0.0; 2]; points.len() * n];
                for (q, x) in points.iter().enumerate() {
                    b.tabulate(
                        x[0],
                        x[1],
                        &mut values[q * n..(q + 1) * n],
                        &mut grads[q * n..(q + 1) * n],
                    );
                }
                BasisValues::Scalar { values, grads }
            }
            ReferenceBasis::Vector(b) => {
                let mut values = vec![[0.0; 2]; points.len() * n];
                let mut divs = vec![0.0; points.len() * n];
                for (q, x) in points.iter().enumerate() {
                    b.tabulate(
                        x[0],
                        x[1],
                        &mut values[q * n..(q + 1) * n],
                        &mut divs[q * n..(q + 1) * n],
                    );
                }
                BasisValues::Vector { values, divs }
            }
        }
    }

    /// Physical basis values on element `t` at reference points, including
    /// orientation signs. Scalar families return values and gradients; RT
    /// returns Piola-mapped vectors and divergences.
    pub fn eval_basis(&self, t: usize, points: &[[f64; 2]]) -> Result<BasisValues> {
        if t >= self.mesh.n_triangles() {
            return Err(Error::OutOfRange {
                index: t,
                len: self.mesh.n_triangles(),
            });
        }
        let map = AffineMap::of(&self.mesh, t);
        Ok(self.map_tabulation(t, &map, self.tabulate_reference(points)))
    }

    /// Maps a reference tabulation to element `t`.
    pub fn map_tabulation(&self, t: usize, map: &AffineMap, mut tab: BasisValues) -> BasisValues {
        let n = self.n_local();
        let signs = self.dofmap.cell_signs(t);
        match &mut tab {
            BasisValues::Scalar { values, grads } => {
                for (k, (v, g)) in values.iter_mut().zip(grads.iter_mut()).enumerate() {
                    let s = signs[k % n];
                    *v *= s;
                    let pg = map.grad(*g);
                    *g = [s * pg[0], s * pg[1]];
                }
            }
            BasisValues::Vector { values, divs } => {
                for (k, (v, d)) in values.iter_mut().zip(divs.iter_mut()).enumerate() {
                    let s = signs[k % n];
                    let pv = map.piola(*v);
                    *v = [s * pv[0], s * pv[1]];
                    *d *= s / map.det;
                }
            }
        }
        tab
    }
}

fn dg_dofmap(mesh: &Triangulation, p: usize) -> DofMap {
    let n = expansion::dim(p);
    let nt = mesh.n_triangles();
    DofMap {
        n_local: n,
        dofs: (0..nt * n).map(Some).collect(),
        signs: vec![1.0; nt * n],
        dim: nt * n,
    }
}

fn lagrange_dofmap(mesh: &Triangulation, p: usize, constraint: Constraint) -> DofMap {
    let nv = mesh.n_vertices();
    let nf = mesh.n_facets();
    let ne = p - 1;
    let ni = if p >= 3 { (p - 1) * (p - 2) / 2 } else { 0 };
    let n_local = expansion::dim(p);
    let n_full = nv + nf * ne + mesh.n_triangles() * ni;
    let mut full = Vec::with_capacity(mesh.n_triangles() * n_local);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        full.extend_from_slice(tri);
        let tf = mesh.triangle_facets(t);
        for i in 0..3 {
            let (a, _) = local_edge(tri, i);
            let forward = a == mesh.facets()[tf[i]].vertices[0];
            for k in 0..ne {
                let g = if forward { k } else { ne - 1 - k };
                full.push(nv + tf[i] * ne + g);
            }
        }
        for k in 0..ni {
            full.push(nv + nf * ne + t * ni + k);
        }
    }
    let mut constrained = vec![false; n_full];
    if constraint == Constraint::ZeroTraceDirichlet {
        for (f, facet) in mesh.facets().iter().enumerate() {
            if facet.tag == FacetTag::Dirichlet {
                constrained[facet.vertices[0]] = true;
                constrained[facet.vertices[1]] = true;
                for k in 0..ne {
                    constrained[nv + f * ne + k] = true;
                }
            }
        }
    }
    let signs = vec![1.0; full.len()];
    DofMap::compress(n_local, full, signs, n_full, &constrained)
}

fn rt_dofmap(mesh: &Triangulation, p: usize, constraint: Constraint) -> DofMap {
    let nf = mesh.n_facets();
    let ne = p + 1;
    let ni = p * (p + 1);
    let n_local = 3 * ne + ni;
    let n_full = nf * ne + mesh.n_triangles() * ni;
    let mut full = Vec::with_capacity(mesh.n_triangles() * n_local);
    let mut signs = Vec::with_capacity(mesh.n_triangles() * n_local);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let tf = mesh.triangle_facets(t);
        for i in 0..3 {
            let (a, _) = local_edge(tri, i);
            let forward = a == mesh.facets()[tf[i]].vertices[0];
            for k in 0..ne {
                full.push(tf[i] * ne + k);
                // reversed edge: outward normal flips and the moment
                // polynomial picks up (-1)^k
                let s = if forward || k % 2 == 1 { 1.0 } else { -1.0 };
                signs.push(if forward { 1.0 } else { s });
            }
        }
        for k in 0..ni {
            full.push(nf * ne + t * ni + k);
            signs.push(1.0);
        }
    }
    let mut constrained = vec![false; n_full];
    if constraint == Constraint::ZeroNormalTraceNeumann {
        for (f, facet) in mesh.facets().iter().enumerate() {
            if facet.tag == FacetTag::Neumann {
                for k in 0..ne {
                    constrained[f * ne + k] = true;
                }
            }
        }
    }
    DofMap::compress(n_local, full, signs, n_full, &constrained)
}

fn cr_dofmap(mesh: &Triangulation, constraint: Constraint) -> DofMap {
    let nf = mesh.n_facets();
    let mut full = Vec::with_capacity(mesh.n_triangles() * 3);
    for t in 0..mesh.n_triangles() {
        full.extend_from_slice(&mesh.triangle_facets(t));
    }
    let mut constrained = vec![false; nf];
    if constraint == Constraint::CrouzeixRaviartDirichlet {
        for (f, facet) in mesh.facets().iter().enumerate() {
            constrained[f] = facet.tag == FacetTag::Dirichlet;
        }
    }
    let signs = vec![1.0; full.len()];
    DofMap::compress(3, full, signs, nf, &constrained)
}
