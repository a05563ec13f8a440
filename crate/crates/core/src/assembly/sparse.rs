//! Compressed sparse row matrices built from triplets.

use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Row-compressed sparse matrix with sorted, duplicate-free columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed in
/// insertion order when the matrix is built, so the result is
/// reproducible bit for bit.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Scatters a dense row-major local block; `None` indices are skipped.
    pub fn add_local(&mut self, rows: &[Option<usize>], cols: &[Option<usize>], local: &[f64]) {
        let nc = cols.len();
        for (i, r) in rows.iter().enumerate() {
            let Some(r) = *r else { continue };
            for (j, c) in cols.iter().enumerate() {
                if let Some(c) = *c {
                    self.add(r, c, local[i * nc + j]);
                }
            }
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        // stable sort keeps insertion order among duplicates
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut b = TripletBuilder::with_capacity(d.len(), d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            b.add(i, i, *v);
        }
        b.build()
    }

    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut b = TripletBuilder::with_capacity(nrows, ncols, entries.len());
        for &(r, c, v) in entries {
            if r >= nrows {
                return Err(Error::OutOfRange {
                    index: r,
                    len: nrows,
                });
            }
            if c >= ncols {
                return Err(Error::OutOfRange {
                    index: c,
                    len: ncols,
                });
            }
            b.add(r, c, v);
        }
        Ok(b.build())
    }

    /// Row-major dense input; exact zeros are dropped.
    pub fn from_dense(nrows: usize, ncols: usize, data: &[f64]) -> Self {
        let mut b = TripletBuilder::new(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = data[i * ncols + j];
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = M x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum();
        }
    }

    /// `y = M^T x`
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                b.add(*c, i, *v);
            }
        }
        b.build()
    }

    /// `x^T M y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest entry of `|M - M^T|` relative to the largest entry of `|M|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c, i)).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                trips.push(Triplet::new(i, *c, *v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| Error::Numerical(format!("sparse conversion failed: {e:?}")))
    }

    /// Stacks blocks `[[a, b], [c, d]]`; `None` blocks are zero.
    pub fn block2x2(
        a: &SparseMatrix,
        b: Option<&SparseMatrix>,
        c: Option<&SparseMatrix>,
        d: Option<&SparseMatrix>,
        n_bottom: usize,
        n_right: usize,
    ) -> Result<SparseMatrix> {
        let (n0, m0) = (a.nrows, a.ncols);
        let check = |m: &SparseMatrix, r: usize, c: usize| {
            if m.nrows != r || m.ncols != c {
                Err(Error::Dimension(format!(
                    "block is {}x{}, expected {r}x{c}",
                    m.nrows, m.ncols
                )))
            } else {
                Ok(())
            }
        };
        let mut out = TripletBuilder::new(n0 + n_bottom, m0 + n_right);
        let mut put = |m: &SparseMatrix, dr: usize, dc: usize| {
            for i in 0..m.nrows {
                let (cols, vals) = m.row(i);
                for (cc, v) in cols.iter().zip(vals) {
                    out.add(i + dr, cc + dc, *v);
                }
            }
        };
        put(a, 0, 0);
        if let Some(b) = b {
            check(b, n0, n_right)?;
            put(b, 0, m0);
        }
        if let Some(c) = c {
            check(c, n_bottom, m0)?;
            put(c, n0, 0);
        }
        if let Some(d) = d {
            check(d, n_bottom, n_right)?;
            put(d, n0, m0);
        }
        Ok(out.build())
    }

    /// MatrixMarket coordinate format (general, real).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    /// Reads the coordinate format written by [`write_matrix_market`](Self::write_matrix_market).
    pub fn read_matrix_market(text: &str) -> Result<SparseMatrix> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty MatrixMarket input".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::InvalidInput(format!("bad header `{header}`")))
            })
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::InvalidInput(format!("bad header `{header}`")));
        }
        let mut entries = Vec::with_capacity(dims[2]);
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidInput(format!("bad entry `{line}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let r: usize = parts[0].parse().map_err(|_| bad())?;
            let c: usize = parts[1].parse().map_err(|_| bad())?;
            let v: f64 = parts[2].parse().map_err(|_| bad())?;
            if r == 0 || c == 0 {
                return Err(bad());
            }
            entries.push((r - 1, c - 1, v));
        }
        SparseMatrix::from_triplets(dims[0], dims[1], &entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 1, 1.0), (1, 2, 2.0), (0, 1, 0.5), (1, 0, -1.0)],
        )
        .unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![3.0, 5.0]);
        assert_eq!(m.transpose_matvec(&[1.0, 1.0]), vec![-1.0, 1.5, 2.0]);
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matrix_market_round_trip() {
        let m =
            SparseMatrix::from_triplets(3, 2, &[(0, 0, 0.1), (2, 1, -3.25e-7), (1, 0, 1.0 / 3.0)])
                .unwrap();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let back = SparseMatrix::read_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn blocks_stack() {
        let a = SparseMatrix::identity(2);
        let b = SparseMatrix::from_triplets(2, 1, &[(1, 0, 4.0)]).unwrap();
        let bt = b.transpose();
        let k = SparseMatrix::block2x2(&a, Some(&b), Some(&bt), None, 1, 1).unwrap();
        assert_eq!(k.nrows(), 3);
        assert_eq!(k.get(1, 2), 4.0);
        assert_eq!(k.get(2, 1), 4.0);
        assert!(k.is_symmetric(0.0));
        assert!(SparseMatrix::block2x2(&a, Some(&bt), None, None, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn matvec_matches_dense(entries in proptest::collection::vec((0usize..6, 0usize..5, -10.0f64..10.0), 0..40),
                                x in proptest::collection::vec(-5.0f64..5.0, 5)) {
            let m = SparseMatrix::from_triplets(6, 5, &entries).unwrap();
            let mut dense = vec![0.0; 30];
            for &(r, c, v) in &entries {
                dense[r * 5 + c] += v;
            }
            let y = m.matvec(&x);
            for i in 0..6 {
                let e: f64 = (0..5).map(|j| dense[i * 5 + j] * x[j]).sum();
                prop_assert!((y[i] - e).abs() < 1e-12);
            }
            prop_assert_eq!(m.transpose().transpose(), m);
        }
    }
}
