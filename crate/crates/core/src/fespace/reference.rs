//! Reference-element bases expressed in the orthonormal expansion set.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use super::expansion::{self, dim};
use crate::quadrature::{edge_rule, triangle_rule};

/// Reference vertices; local vertex `i` of a physical triangle maps here.
pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// End points of reference edge `i` (opposite vertex `i`), traversed
/// counter-clockwise.
pub fn ref_edge(i: usize) -> ([f64; 2], [f64; 2]) {
    (REF_VERTICES[(i + 1) % 3], REF_VERTICES[(i + 2) % 3])
}

/// Outward unit normal and length of reference edge `i`.
pub fn ref_edge_normal(i: usize) -> ([f64; 2], f64) {
    let (a, b) = ref_edge(i);
    let t = [b[0] - a[0], b[1] - a[1]];
    let len = t[0].hypot(t[1]);
    ([t[1] / len, -t[0] / len], len)
}

/// Shifted Legendre polynomial `P_k(2t - 1)`.
pub fn legendre01(k: usize, t: f64) -> f64 {
    let z = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, z);
    if k == 0 {
        return 1.0;
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn invert(n: usize, a: &[f64]) -> Vec<f64> {
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let mut inv = m.full_piv_lu().inverse();
    // Newton-Schulz refinement steps: X <- X + X (I - A X)
    for _ in 0..2 {
        let mut r = -(&m * &inv);
        for i in 0..n {
            r[(i, i)] += 1.0;
        }
        inv = &inv + &inv * &r;
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    out
}

/// Scalar basis: function `j` is `sum_k coeffs[j * m + k] psi_k`.
#[derive(Clone, Debug)]
pub struct ScalarBasis {
    pub poly_degree: usize,
    pub n_dofs: usize,
    coeffs: Vec<f64>,
}

impl ScalarBasis {
    /// Orthogonal basis of `P_p` (discontinuous elements), scaled so that
    /// the constant member equals one; its mass matrix is `|T| I`.
    pub fn orthonormal(p: usize) -> Self {
        let m = dim(p);
        let mut coeffs = vec![0.0; m * m];
        for k in 0..m {
            coeffs[k * m + k] = std::f64::consts::FRAC_1_SQRT_2;
        }
        Self {
            poly_degree: p,
            n_dofs: m,
            coeffs,
        }
    }

    /// Nodal basis for the given node set, which must be unisolvent for `P_p`.
    fn nodal(p: usize, nodes: &[[f64; 2]]) -> Self {
        let m = dim(p);
        assert_eq!(nodes.len(), m);
        // V[i][k] = psi_k(x_i); coefficients C = V^{-T}
        let mut v = vec![0.0; m * m];
        for (i, x) in nodes.iter().enumerate() {
            let (vals, _) = expansion::tabulate_vec(p, x[0], x[1]);
            v[i * m..(i + 1) * m].copy_from_slice(&vals);
        }
        let inv = invert(m, &v);
        let mut coeffs = vec![0.0; m * m];
        for j in 0..m {
            for k in 0..m {
                coeffs[j * m + k] = inv[k * m + j];
            }
        }
        Self {
            poly_degree: p,
            n_dofs: m,
            coeffs,
        }
    }

    /// Continuous Lagrange element of degree `p >= 1` with equispaced nodes:
    /// vertices, then `p - 1` nodes per edge along the local edge direction,
    /// then interior nodes.
    pub fn lagrange(p: usize) -> Self {
        assert!(p >= 1);
        let mut nodes = REF_VERTICES.to_vec();
        for i in 0..3 {
            let (a, b) = ref_edge(i);
            for k in 1..p {
                let t = k as f64 / p as f64;
                nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        for j in 1..p {
            for i in 1..(p - j) {
                nodes.push([i as f64 / p as f64, j as f64 / p as f64]);
            }
        }
        Self::nodal(p, &nodes)
    }

    /// Crouzeix-Raviart element; DOF `i` is the value at the midpoint of
    /// edge `i`.
    pub fn crouzeix_raviart() -> Self {
        let nodes: Vec<[f64; 2]> = (0..3)
            .map(|i| {
                let (a, b) = ref_edge(i);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            })
            .collect();
        Self::nodal(1, &nodes)
    }

    pub fn tabulate(&self, x: f64, y: f64, values: &mut [f64], grads: &mut [[f64; 2]]) {
        let m = dim(self.poly_degree);
        let (pv, pg) = expansion::tabulate_vec(self.poly_degree, x, y);
        for j in 0..self.n_dofs {
            let c = &self.coeffs[j * m..(j + 1) * m];
            let mut v = 0.0;
            let mut g = [0.0, 0.0];
            for k in 0..m {
                v += c[k] * pv[k];
                g[0] += c[k] * pg[k][0];
                g[1] += c[k] * pg[k][1];
            }
            values[j] = v;
            grads[j] = g;
        }
    }
}

/// Raviart-Thomas element `P_p^2 + x P~_p` with facet normal moments
/// against shifted Legendre polynomials and interior moments against the
/// orthonormal basis of `P_{p-1}^2`.
///
/// Local DOF order: edge 0 moments `k = 0..=p`, edge 1, edge 2, then interior
/// moments (x-component block, then y-component block). Edge moments are
/// taken with the outward unit normal and the counter-clockwise edge
/// parameter, so a physical DOF equals the same moment on the physical edge.
#[derive(Clone, Debug)]
pub struct VectorBasis {
    pub degree: usize,
    pub n_dofs: usize,
    poly_degree: usize,
    cx: Vec<f64>,
    cy: Vec<f64>,
}

impl VectorBasis {
    pub fn raviart_thomas(p: usize) -> Self {
        let pd = p + 1;
        let m = dim(pd);
        let mp = dim(p);
        let n_dofs = (p + 1) * (p + 3);
        // prebasis in expansion coefficients (x and y components)
        let mut pre_x: Vec<Vec<f64>> = Vec::with_capacity(n_dofs);
        let mut pre_y: Vec<Vec<f64>> = Vec::with_capacity(n_dofs);
        for k in 0..mp {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            pre_x.push(e.clone());
            pre_y.push(vec![0.0; m]);
            pre_x.push(vec![0.0; m]);
            pre_y.push(e);
        }
        // x * psi_k for the degree-p members of the expansion set, which
        // complete P_p^2 to RT_p; written exactly in the degree-(p+1) set
        let rule = triangle_rule(2 * pd).expect("rule");
        for k in dim(p) - (p + 1)..mp {
            let mut px = vec![0.0; m];
            let mut py = vec![0.0; m];
            for (pt, w) in rule.xy().zip(&rule.weights) {
                let (vals, _) = expansion::tabulate_vec(pd, pt[0], pt[1]);
                for i in 0..m {
                    px[i] += w * pt[0] * vals[k] * vals[i];
                    py[i] += w * pt[1] * vals[k] * vals[i];
                }
            }
            pre_x.push(px);
            pre_y.push(py);
        }
        assert_eq!(pre_x.len(), n_dofs);

        // dual matrix D[i][j] = l_i(pre_j)
        let mut dmat = vec![0.0; n_dofs * n_dofs];
        let erule = edge_rule(2 * pd).expect("rule");
        for e in 0..3 {
            let (a, b) = ref_edge(e);
            let (nrm, len) = ref_edge_normal(e);
            for (t, w) in erule.points.iter().zip(&erule.weights) {
                let x = a[0] + t * (b[0] - a[0]);
                let y = a[1] + t * (b[1] - a[1]);
                let (vals, _) = expansion::tabulate_vec(pd, x, y);
                for j in 0..n_dofs {
                    let vx: f64 = pre_x[j].iter().zip(&vals).map(|(c, v)| c * v).sum();
                    let vy: f64 = pre_y[j].iter().zip(&vals).map(|(c, v)| c * v).sum();
                    let flux = vx * nrm[0] + vy * nrm[1];
                    for k in 0..=p {
                        let i = e * (p + 1) + k;
                        dmat[i * n_dofs + j] += w * len * flux * legendre01(k, *t);
                    }
                }
            }
        }
        if p >= 1 {
            let mi = dim(p - 1);
            let off = 3 * (p + 1);
            // interior moments against psi_k e_d; psi_k for k < dim(p-1) are
            // the leading members of the degree-(p+1) expansion set
            for j in 0..n_dofs {
                for k in 0..mi {
                    dmat[(off + k) * n_dofs + j] = pre_x[j][k];
                    dmat[(off + mi + k) * n_dofs + j] = pre_y[j][k];
                }
            }
        }
        let inv = invert(n_dofs, &dmat);
        let mut cx = vec![0.0; n_dofs * m];
        let mut cy = vec![0.0; n_dofs * m];
        for j in 0..n_dofs {
            for mm in 0..n_dofs {
                let c = inv[mm * n_dofs + j];
                if c == 0.0 {
                    continue;
                }
                for k in 0..m {
                    cx[j * m + k] += c * pre_x[mm][k];
                    cy[j * m + k] += c * pre_y[mm][k];
                }
            }
        }
        Self {
            degree: p,
            n_dofs,
            poly_degree: pd,
            cx,
            cy,
        }
    }

    /// Highest polynomial degree of the basis functions.
    pub fn poly_degree(&self) -> usize {
        self.poly_degree
    }

    pub fn tabulate(&self, x: f64, y: f64, values: &mut [[f64; 2]], divs: &mut [f64]) {
        let m = dim(self.poly_degree);
        let (pv, pg) = expansion::tabulate_vec(self.poly_degree, x, y);
        for j in 0..self.n_dofs {
            let cx = &self.cx[j * m..(j + 1) * m];
            let cy = &self.cy[j * m..(j + 1) * m];
            let mut v = [0.0, 0.0];
            let mut d = 0.0;
            for k in 0..m {
                v[0] += cx[k] * pv[k];
                v[1] += cy[k] * pv[k];
                d += cx[k] * pg[k][0] + cy[k] * pg[k][1];
            }
            values[j] = v;
            divs[j] = d;
        }
    }
}
