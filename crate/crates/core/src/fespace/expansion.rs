//! Orthonormal polynomial basis of `P_n` on the reference triangle
//! (Dubiner/Koornwinder functions), evaluated by stable recurrences.
//!
//! Members are ordered by total degree, so the first `dim(P_m)` functions
//! span `P_m` for every `m <= n`.

/// Dimension of `P_n` in two variables.
pub const fn dim(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Position of the function with degrees `(p, q)`.
pub const fn index(p: usize, q: usize) -> usize {
    (p + q) * (p + q + 1) / 2 + q
}

fn jacobi_coefficients(a: f64, n: usize) -> (f64, f64, f64) {
    // three-term recurrence of P^(a,0)
    let n = n as f64;
    let an = (2.0 * n + 1.0 + a) * (2.0 * n + 2.0 + a) / (2.0 * (n + 1.0) * (n + 1.0 + a));
    let bn = a * a * (2.0 * n + 1.0 + a) / (2.0 * (n + 1.0) * (2.0 * n + a) * (n + 1.0 + a));
    let cn = (n + a) * n * (2.0 * n + 2.0 + a) / ((n + 1.0) * (n + 1.0 + a) * (2.0 * n + a));
    (an, bn, cn)
}

/// Values and Cartesian gradients of all `dim(n)` functions at `(x, y)`.
pub fn tabulate(n: usize, x: f64, y: f64, values: &mut [f64], grads: &mut [[f64; 2]]) {
    let m = dim(n);
    debug_assert!(values.len() >= m && grads.len() >= m);
    // work in the biunit triangle coordinates r = 2x-1, s = 2y-1;
    // derivatives are carried with respect to (r, s)
    let r = 2.0 * x - 1.0;
    let s = 2.0 * y - 1.0;
    let v = values;
    let d = grads;
    v[0] = 1.0;
    d[0] = [0.0, 0.0];
    if n == 0 {
        v[0] *= 2.0 * (0.5f64).sqrt();
        return;
    }
    let f1 = 0.5 * (1.0 + 2.0 * r + s);
    let df1 = [1.0, 0.5];
    let f3 = 0.25 * (1.0 - s) * (1.0 - s);
    let df3 = [0.0, -0.5 * (1.0 - s)];

    for p in 1..=n {
        let a = (2 * p - 1) as f64 / p as f64;
        let cur = index(p, 0);
        let prev = index(p - 1, 0);
        let mut val = a * f1 * v[prev];
        let mut der = [
            a * (df1[0] * v[prev] + f1 * d[prev][0]),
            a * (df1[1] * v[prev] + f1 * d[prev][1]),
        ];
        if p > 1 {
            let pp = index(p - 2, 0);
            let c = a - 1.0;
            val -= c * f3 * v[pp];
            der[0] -= c * (df3[0] * v[pp] + f3 * d[pp][0]);
            der[1] -= c * (df3[1] * v[pp] + f3 * d[pp][1]);
        }
        v[cur] = val;
        d[cur] = der;
    }
    for p in 0..n {
        let g = p as f64 + 0.5 + (1.5 + p as f64) * s;
        let dg = [0.0, 1.5 + p as f64];
        let base = index(p, 0);
        let cur = index(p, 1);
        v[cur] = v[base] * g;
        d[cur] = [
            d[base][0] * g + v[base] * dg[0],
            d[base][1] * g + v[base] * dg[1],
        ];
    }
    for p in 0..n.saturating_sub(1) {
        for q in 1..(n - p) {
            let (a1, a2, a3) = jacobi_coefficients((2 * p + 1) as f64, q);
            let cur = index(p, q + 1);
            let i1 = index(p, q);
            let i0 = index(p, q - 1);
            let lin = a1 * s + a2;
            v[cur] = lin * v[i1] - a3 * v[i0];
            d[cur] = [
                lin * d[i1][0] - a3 * d[i0][0],
                a1 * v[i1] + lin * d[i1][1] - a3 * d[i0][1],
            ];
        }
    }
    for p in 0..=n {
        for q in 0..=(n - p) {
            let k = index(p, q);
            // orthonormal on the reference triangle (area 1/2)
            let scale = 2.0 * ((p as f64 + 0.5) * (p + q + 1) as f64).sqrt();
            v[k] *= scale;
            // d/dx = 2 d/dr, d/dy = 2 d/ds
            d[k] = [2.0 * scale * d[k][0], 2.0 * scale * d[k][1]];
        }
    }
}

/// Convenience wrapper returning fresh vectors.
pub fn tabulate_vec(n: usize, x: f64, y: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let m = dim(n);
    let mut v = vec![0.0; m];
    let mut g = vec![[0.0; 2]; m];
    tabulate(n, x, y, &mut v, &mut g);
    (v, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::triangle_rule;

    #[test]
    fn orthonormal_up_to_degree_eight() {
        let n = 8;
        let rule = triangle_rule(2 * n).unwrap();
        let m = dim(n);
        let mut gram = vec![0.0; m * m];
        for (p, w) in rule.xy().zip(&rule.weights) {
            let (v, _) = tabulate_vec(n, p[0], p[1]);
            for i in 0..m {
                for j in 0..m {
                    gram[i * m + j] += w * v[i] * v[j];
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[i * m + j] - expect).abs() < 1e-12,
                    "({i},{j}) = {}",
                    gram[i * m + j]
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let n = 6;
        let (x, y) = (0.21, 0.37);
        let h = 1e-6;
        let (_, g) = tabulate_vec(n, x, y);
        let (vxp, _) = tabulate_vec(n, x + h, y);
        let (vxm, _) = tabulate_vec(n, x - h, y);
        let (vyp, _) = tabulate_vec(n, x, y + h);
        let (vym, _) = tabulate_vec(n, x, y - h);
        for k in 0..dim(n) {
            let fx = (vxp[k] - vxm[k]) / (2.0 * h);
            let fy = (vyp[k] - vym[k]) / (2.0 * h);
            assert!((g[k][0] - fx).abs() < 1e-6 * (1.0 + fx.abs()), "k={k}");
            assert!((g[k][1] - fy).abs() < 1e-6 * (1.0 + fy.abs()), "k={k}");
        }
    }

    #[test]
    fn hierarchical_degrees() {
        // functions beyond dim(m) are orthogonal to P_m, in particular to 1 and x
        let rule = triangle_rule(10).unwrap();
        let mut m0 = vec![0.0; dim(4)];
        let mut m1 = vec![0.0; dim(4)];
        for (p, w) in rule.xy().zip(&rule.weights) {
            let (v, _) = tabulate_vec(4, p[0], p[1]);
            for k in 0..dim(4) {
                m0[k] += w * v[k];
                m1[k] += w * v[k] * p[0];
            }
        }
        for k in 1..dim(4) {
            assert!(m0[k].abs() < 1e-13);
        }
        for k in dim(1)..dim(4) {
            assert!(m1[k].abs() < 1e-13);
        }
    }
}
