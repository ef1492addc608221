//! Direct solvers used across the crate.
//!
//! [`SkylineMatrix`] holds symmetric positive definite systems in envelope
//! (profile) storage and factors them with a row-oriented Cholesky; fill is
//! confined to the envelope so no reordering is needed for the structured
//! meshes used here. [`BandedMatrix`] is a general row-sparse matrix with an
//! LU factorization using partial pivoting, used for the non-symmetric
//! space-time systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower envelope of a symmetric matrix; row `i` stores columns `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
    factored: bool,
}

impl SkylineMatrix {
    /// `first[i]` is the smallest column index coupled to row `i`.
    pub fn new(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope start beyond diagonal in row {i}");
            offset.push(total);
            total += i - f + 1;
        }
        offset.push(total);
        Self { first, offset, data: vec![0.0; total], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.data.len()
    }

    fn index(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if j > i { (j, i) } else { (i, j) };
        if c < self.first[r] {
            None
        } else {
            Some(self.offset[r] + c - self.first[r])
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.index(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to entry (i, j); only the lower triangle is stored, so callers
    /// add each symmetric pair once.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside the envelope"));
        self.data[k] += v;
    }

    /// Replaces row/column `i` by the identity (used for Dirichlet rows after lifting).
    pub fn set_identity_row(&mut self, i: usize) {
        for c in self.first[i]..i {
            let k = self.offset[i] + c - self.first[i];
            self.data[k] = 0.0;
        }
        let k = self.offset[i] + i - self.first[i];
        self.data[k] = 1.0;
        for r in i + 1..self.dim() {
            if self.first[r] <= i {
                let k = self.offset[r] + i - self.first[r];
                self.data[k] = 0.0;
            }
        }
    }

    /// y = A x using the symmetric envelope.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matrix already overwritten by its factor");
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let f = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            for (c, &a) in (f..=i).zip(row) {
                y[i] += a * x[c];
                if c != i {
                    y[c] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization A = L Lᵀ.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let dot: f64 = self.data[oi + k0 - fi..oi + j - fi]
                    .iter()
                    .zip(&self.data[oj + k0 - fj..oj + j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                let ljj = self.data[oj + j - fj];
                self.data[oi + j - fi] = (self.data[oi + j - fi] - dot) / ljj;
            }
            let sq: f64 = self.data[oi..oi + i - fi].iter().map(|v| v * v).sum();
            let d = self.data[oi + i - fi] - sq;
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Singular(format!("matrix not positive definite at row {i} (pivot {d:.3e})")));
            }
            self.data[oi + i - fi] = d.sqrt();
        }
        self.factored = true;
        Ok(())
    }

    /// Solves with a previously computed factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "call factor() first");
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (c, a) in (fi..i).zip(row) {
                y[c] -= a * xi;
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
struct SparseRow {
    start: usize,
    values: Vec<f64>,
}

impl SparseRow {
    fn get(&self, c: usize) -> f64 {
        if c < self.start {
            0.0
        } else {
            self.values.get(c - self.start).copied().unwrap_or(0.0)
        }
    }

    fn end(&self) -> usize {
        self.start + self.values.len()
    }

    fn add(&mut self, c: usize, v: f64) {
        if self.values.is_empty() {
            self.start = c;
        }
        if c < self.start {
            let shift = self.start - c;
            let mut vals = vec![0.0; shift];
            vals.extend_from_slice(&self.values);
            self.values = vals;
            self.start = c;
        }
        if c >= self.end() {
            self.values.resize(c - self.start + 1, 0.0);
        }
        self.values[c - self.start] += v;
    }

    /// self -= l * other, for columns >= from.
    fn sub_scaled(&mut self, l: f64, other: &SparseRow, from: usize) {
        let lo = other.start.max(from);
        for c in lo..other.end() {
            let v = other.values[c - other.start];
            if v != 0.0 {
                self.add(c, -l * v);
            }
        }
    }
}

/// General square matrix with rows stored as contiguous column ranges.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    rows: Vec<SparseRow>,
}

impl BandedMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { rows: vec![SparseRow { start: 0, values: Vec::new() }; n] }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.rows[i].add(j, v);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].get(j)
    }

    /// Nonzero column range of row `i` (half-open).
    pub fn row_range(&self, i: usize) -> (usize, usize) {
        let r = &self.rows[i];
        let first = r.values.iter().position(|v| *v != 0.0);
        let last = r.values.iter().rposition(|v| *v != 0.0);
        match (first, last) {
            (Some(f), Some(l)) => (r.start + f, r.start + l + 1),
            _ => (0, 0),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.values.iter().enumerate().map(|(k, v)| v * x[r.start + k]).sum()).collect()
    }

    /// Gaussian elimination with partial pivoting restricted to rows whose
    /// envelope reaches the pivot column.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut rows = self.rows.clone();
        let mut rhs = b.to_vec();
        let scale = rows.iter().flat_map(|r| r.values.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let mut piv = j;
            let mut best = rows[j].get(j).abs();
            for (r, row) in rows.iter().enumerate().skip(j + 1) {
                if row.start > j {
                    continue;
                }
                let v = row.get(j).abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= 1e-300_f64.max(scale * 1e-15) {
                return Err(Error::Singular(format!("zero pivot in column {j}")));
            }
            if piv != j {
                rows.swap(j, piv);
                rhs.swap(j, piv);
            }
            let pivot_row = rows[j].clone();
            let d = pivot_row.get(j);
            for r in j + 1..n {
                if rows[r].start > j {
                    continue;
                }
                let v = rows[r].get(j);
                if v == 0.0 {
                    continue;
                }
                let l = v / d;
                rows[r].sub_scaled(l, &pivot_row, j);
                // exact zero below the pivot
                let k = j - rows[r].start;
                rows[r].values[k] = 0.0;
                rhs[r] -= l * rhs[j];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let row = &rows[i];
            let mut s = rhs[i];
            for c in (i + 1).max(row.start)..row.end() {
                s -= row.values[c - row.start] * x[c];
            }
            x[i] = s / row.get(i);
        }
        Ok(x)
    }
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Dense solve with LU and partial pivoting.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(format!("dense {}x{} system", a.nrows(), a.ncols())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> (SkylineMatrix, DMatrix<f64>) {
        let first = (0..n).map(|i| i.saturating_sub(1)).collect();
        let mut s = SkylineMatrix::new(first);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            s.add(i, i, 2.0);
            d[(i, i)] = 2.0;
            if i > 0 {
                s.add(i, i - 1, -1.0);
                d[(i, i - 1)] = -1.0;
                d[(i - 1, i)] = -1.0;
            }
        }
        (s, d)
    }

    #[test]
    fn skyline_matches_dense_solve() {
        let (mut s, d) = laplacian_1d(12);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let y = s.mul_vec(&b);
        let yd = &d * DVector::from_vec(b.clone());
        for i in 0..12 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
        s.factor().unwrap();
        let x = s.solve(&b);
        let xd = solve_dense(&d, &DVector::from_vec(b)).unwrap();
        for i in 0..12 {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn skyline_rejects_indefinite() {
        let mut s = SkylineMatrix::new(vec![0, 0]);
        s.add(0, 0, 1.0);
        s.add(1, 0, 2.0);
        s.add(1, 1, 1.0);
        assert!(matches!(s.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn identity_row_decouples() {
        let (mut s, _) = laplacian_1d(4);
        s.set_identity_row(1);
        assert_eq!(s.get(1, 0), 0.0);
        assert_eq!(s.get(2, 1), 0.0);
        assert_eq!(s.get(1, 1), 1.0);
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // zero leading diagonal forces a row swap
        let mut m = BandedMatrix::zeros(3);
        m.add(0, 1, 1.0);
        m.add(1, 0, 2.0);
        m.add(1, 1, 1.0);
        m.add(2, 1, 1.0);
        m.add(2, 2, 3.0);
        let x_true = [1.0, -2.0, 0.5];
        let b = m.mul_vec(&x_true);
        let x = m.solve(&b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn banded_detects_singular() {
        let mut m = BandedMatrix::zeros(2);
        m.add(0, 0, 1.0);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        assert!(m.solve(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0, 100.0]));
        assert!((condition_number(&m) - 100.0).abs() < 1e-9);
    }
}
