//! Gauss rules on the reference edge `[0,1]` and the reference triangle
//! with vertices `(0,0)`, `(1,0)`, `(0,1)`.

use crate::error::{Error, Result};

/// Highest exactness degree served by [`triangle_rule`] and [`edge_rule`].
pub const MAX_DEGREE: usize = 40;

#[derive(Clone, Debug)]
pub struct EdgeRule {
    /// Parameters in `[0, 1]`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

#[derive(Clone, Debug)]
pub struct TriangleRule {
    /// Barycentric coordinates `(1 - x - y, x, y)`.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl TriangleRule {
    /// Cartesian coordinates on the reference triangle.
    pub fn xy(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.points.iter().map(|b| [b[1], b[2]])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::Unsupported(format!(
            "quadrature exactness {degree} exceeds the maximum {MAX_DEGREE}"
        )));
    }
    Ok(())
}

/// Gauss-Legendre rule on `[0,1]` with `ceil((degree+1)/2)` points.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    check_degree(degree)?;
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(EdgeRule {
        points: x.iter().map(|z| 0.5 * (z + 1.0)).collect(),
        weights: w.iter().map(|v| 0.5 * v).collect(),
        exactness: 2 * n - 1,
    })
}

/// Collapsed-coordinate (Duffy) tensor Gauss rule on the reference
/// triangle, exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    check_degree(degree)?;
    if degree <= 1 {
        return Ok(TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            exactness: 1,
        });
    }
    // x = s, y = t (1 - s); the Jacobian (1 - s) raises the degree in s by one
    let n = (degree + 2).div_ceil(2);
    let (z, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let s = 0.5 * (z[i] + 1.0);
        for j in 0..n {
            let t = 0.5 * (z[j] + 1.0);
            let x = s;
            let y = t * (1.0 - s);
            points.push([1.0 - x - y, x, y]);
            weights.push(0.25 * w[i] * w[j] * (1.0 - s));
        }
    }
    Ok(TriangleRule {
        points,
        weights,
        exactness: 2 * n - 2,
    })
}
