use std::sync::Arc;

use super::{AffineMap, BasisValues, FeSpace};
use crate::assembly::gram_l2;
use crate::error::{Error, Result};
use crate::quadrature::triangle_rule;
use crate::solve::sparse_solve;

/// Extra quadrature exactness beyond `2p` for non-polynomial targets.
const PROJECTION_ALLOWANCE: usize = 12;

/// Coefficient vector bound to a finite element space.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let coeffs = vec![0.0; space.dim()];
        Self { space, coeffs }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Values on element `t` at reference points, as a tabulation with a
    /// single "basis function" per point: values and gradients for scalar
    /// spaces, vectors and divergences for RT.
    pub fn evaluate(&self, t: usize, points: &[[f64; 2]]) -> Result<BasisValues> {
        let tab = self.space.eval_basis(t, points)?;
        Ok(self.combine(t, &tab, points.len()))
    }

    /// Like [`evaluate`](Self::evaluate), but checks that the caller's mesh is
    /// the one the function lives on.
    pub fn evaluate_on(
        &self,
        mesh: &Arc<crate::mesh::Triangulation>,
        t: usize,
        points: &[[f64; 2]],
    ) -> Result<BasisValues> {
        if !Arc::ptr_eq(mesh, self.space.mesh()) {
            return Err(Error::MeshMismatch);
        }
        self.evaluate(t, points)
    }

    /// Combines an already mapped tabulation of this function's space.
    pub fn combine(&self, t: usize, tab: &BasisValues, n_points: usize) -> BasisValues {
        let n = self.space.n_local();
        let dofs = self.space.dofmap().cell_dofs(t);
        let local: Vec<f64> = dofs
            .iter()
            .map(|d| d.map_or(0.0, |g| self.coeffs[g]))
            .collect();
        match tab {
            BasisValues::Scalar { values, grads } => {
                let mut v = vec![0.0; n_points];
                let mut g = vec![[0.0; 2]; n_points];
                for q in 0..n_points {
                    for j in 0..n {
                        let c = local[j];
                        v[q] += c * values[q * n + j];
                        g[q][0] += c * grads[q * n + j][0];
                        g[q][1] += c * grads[q * n + j][1];
                    }
                }
                BasisValues::Scalar {
                    values: v,
                    grads: g,
                }
            }
            BasisValues::Vector { values, divs } => {
                let mut v = vec![[0.0; 2]; n_points];
                let mut d = vec![0.0; n_points];
                for q in 0..n_points {
                    for j in 0..n {
                        let c = local[j];
                        v[q][0] += c * values[q * n + j][0];
                        v[q][1] += c * values[q * n + j][1];
                        d[q] += c * divs[q * n + j];
                    }
                }
                BasisValues::Vector { values: v, divs: d }
            }
        }
    }
}

fn project(
    space: &Arc<FeSpace>,
    rhs_kernel: impl Fn([f64; 2], &BasisValues, usize, usize) -> f64,
) -> Result<DiscreteFunction> {
    let mesh = space.mesh();
    let rule = triangle_rule(2 * space.poly_degree() + PROJECTION_ALLOWANCE)?;
    let points: Vec<[f64; 2]> = rule.xy().collect();
    let reference = space.tabulate_reference(&points);
    let n = space.n_local();
    let mut rhs = vec![0.0; space.dim()];
    for t in 0..mesh.n_triangles() {
        let map = AffineMap::of(mesh, t);
        let tab = space.map_tabulation(t, &map, reference.clone());
        let dofs = space.dofmap().cell_dofs(t);
        for (q, xh) in points.iter().enumerate() {
            let w = rule.weights[q] * map.det.abs();
            let x = map.apply(*xh);
            for j in 0..n {
                if let Some(g) = dofs[j] {
                    rhs[g] += w * rhs_kernel(x, &tab, q * n + j, q);
                }
            }
        }
    }
    let mass = gram_l2(space)?;
    let coeffs = sparse_solve(&mass, &rhs)?;
    let residual: f64 = mass
        .matvec(&coeffs)
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "L2 projection residual {residual:.3e} exceeds tolerance"
        )));
    }
    DiscreteFunction::new(space.clone(), coeffs)
}

/// L2 projection of a scalar field onto a scalar space.
pub fn l2_project_scalar(
    space: &Arc<FeSpace>,
    target: impl Fn([f64; 2]) -> f64,
) -> Result<DiscreteFunction> {
    if space.is_vector() {
        return Err(Error::InvalidInput(
            "scalar projection onto a vector space".into(),
        ));
    }
    project(space, |x, tab, k, _| match tab {
        BasisValues::Scalar { values, .. } => target(x) * values[k],
        BasisValues::Vector { .. } => unreachable!(),
    })
}

/// L2 projection of a vector field onto a Raviart-Thomas space.
pub fn l2_project_vector(
    space: &Arc<FeSpace>,
    target: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<DiscreteFunction> {
    if !space.is_vector() {
        return Err(Error::InvalidInput(
            "vector projection onto a scalar space".into(),
        ));
    }
    project(space, |x, tab, k, _| match tab {
        BasisValues::Vector { values, .. } => {
            let v = target(x);
            v[0] * values[k][0] + v[1] * values[k][1]
        }
        BasisValues::Scalar { .. } => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{make_space, Constraint, Family};
    use crate::mesh::{initial_square_mesh, uniform_refine, BoundarySpec, Triangulation};
    use std::f64::consts::PI;

    fn mesh0() -> Arc<Triangulation> {
        Arc::new(initial_square_mesh(&BoundarySpec::left_neumann()))
    }

    #[test]
    fn zero_function_evaluates_to_zero() {
        let mesh = mesh0();
        let s = Arc::new(make_space(&mesh, Family::Lagrange, 3, Constraint::None).unwrap());
        let f = DiscreteFunction::zero(s);
        let BasisValues::Scalar { values, grads } =
            f.evaluate(1, &[[0.1, 0.2], [0.3, 0.3]]).unwrap()
        else {
            panic!()
        };
        assert!(values.iter().all(|v| *v == 0.0));
        assert!(grads.iter().all(|g| *g == [0.0, 0.0]));
    }

    #[test]
    fn wrong_length_rejected() {
        let mesh = mesh0();
        let s = Arc::new(make_space(&mesh, Family::Dg, 1, Constraint::None).unwrap());
        assert!(matches!(
            DiscreteFunction::new(s, vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mesh_mismatch_detected() {
        let mesh = mesh0();
        let other = mesh0();
        let s = Arc::new(make_space(&mesh, Family::Dg, 0, Constraint::None).unwrap());
        let f = DiscreteFunction::zero(s);
        assert!(matches!(
            f.evaluate_on(&other, 0, &[[0.2, 0.2]]),
            Err(Error::MeshMismatch)
        ));
    }

    #[test]
    fn projection_reproduces_members() {
        let mesh = Arc::new(uniform_refine(&mesh0()));
        // a quadratic is a member of Lagrange p = 2
        let s = Arc::new(make_space(&mesh, Family::Lagrange, 2, Constraint::None).unwrap());
        let poly = |x: [f64; 2]| 1.0 + x[0] - 2.0 * x[1] + 3.0 * x[0] * x[1] - x[1] * x[1];
        let f = l2_project_scalar(&s, poly).unwrap();
        let pts = [[0.1, 0.1], [0.6, 0.2], [0.25, 0.5]];
        for t in 0..mesh.n_triangles() {
            let map = AffineMap::of(&mesh, t);
            let BasisValues::Scalar { values, .. } = f.evaluate(t, &pts).unwrap() else {
                panic!()
            };
            for (q, xh) in pts.iter().enumerate() {
                assert!((values[q] - poly(map.apply(*xh))).abs() < 1e-12);
            }
        }
        // a linear vector field is a member of RT_1
        let rt = Arc::new(make_space(&mesh, Family::RaviartThomas, 1, Constraint::None).unwrap());
        let field = |x: [f64; 2]| [1.0 + 2.0 * x[1], x[0] - 0.5 * x[1]];
        let g = l2_project_vector(&rt, field).unwrap();
        for t in 0..mesh.n_triangles() {
            let map = AffineMap::of(&mesh, t);
            let BasisValues::Vector { values, divs } = g.evaluate(t, &pts).unwrap() else {
                panic!()
            };
            for (q, xh) in pts.iter().enumerate() {
                let e = field(map.apply(*xh));
                assert!((values[q][0] - e[0]).abs() < 1e-12);
                assert!((values[q][1] - e[1]).abs() < 1e-12);
                assert!((divs[q] + 0.5).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn dg0_projection_gives_element_means() {
        let mesh = mesh0();
        let s = Arc::new(make_space(&mesh, Family::Dg, 0, Constraint::None).unwrap());
        let f = l2_project_scalar(&s, |x| (PI * x[0]).sin()).unwrap();
        // closed-form means of sin(pi x) over the four diagonal triangles
        // (bottom, right, top, left): area 1/4, so mean = 4 * integral
        let bottom = 4.0 * 2.0 / (PI * PI);
        let left = 4.0 * (1.0 / PI - 2.0 / (PI * PI));
        let expected = [bottom, left, bottom, left];
        for t in 0..4 {
            let BasisValues::Scalar { values, .. } = f.evaluate(t, &[[0.3, 0.3]]).unwrap() else {
                panic!()
            };
            assert!(
                (values[0] - expected[t]).abs() < 1e-10,
                "t={t}: {} vs {}",
                values[0],
                expected[t]
            );
        }
    }

    #[test]
    fn projection_error_decreases() {
        let target = |x: [f64; 2]| (PI * x[0]).sin() * (2.0 * x[1]).exp();
        let mut mesh = mesh0();
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let s = Arc::new(make_space(&mesh, Family::Dg, 1, Constraint::None).unwrap());
            let f = l2_project_scalar(&s, target).unwrap();
            let err = crate::analysis::l2_error_scalar(&f, target).unwrap();
            assert!(err < last);
            last = err;
            mesh = Arc::new(uniform_refine(&mesh));
        }
    }
}
