//! Compressed-row sparse matrices and the direct solvers used for Newton steps.

use crate::error::{Error, Result};

/// Row-compressed sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicate positions are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r},{c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let rows = dense.len();
        let cols = dense.first().map_or(0, |r| r.len());
        let triplets = dense
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, &v)| (i, j, v))
            })
            .collect();
        Self::from_triplets(rows, cols, triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |e| (self.col_idx[e], self.values[e]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.rows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        out
    }
}

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// Solves `J d = r`, using banded elimination when the bandwidth is at most 2
/// and dense LU otherwise. Both use partial pivoting.
pub fn solve_linear(j: &SparseMatrix, r: &[f64]) -> Result<Vec<f64>> {
    if j.rows() != j.cols() {
        return Err(Error::InvalidArgument(format!(
            "matrix must be square, got {}x{}",
            j.rows(),
            j.cols()
        )));
    }
    if r.len() != j.rows() {
        return Err(Error::DimensionMismatch {
            expected: j.rows(),
            got: r.len(),
        });
    }
    let bw = j.bandwidth();
    if bw <= 2 {
        banded_solve(j, bw, r)
    } else {
        dense_lu_solve(j.to_dense(), r)
    }
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_lu_solve(mut a: Vec<Vec<f64>>, r: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    let norm = a
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let tol = SINGULAR_PIVOT_RATIO * norm;
    let mut x = r.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&u, &v| a[u][k].abs().total_cmp(&a[v][k].abs()))
            .unwrap();
        let pivot = a[p][k];
        if !(pivot.abs() > tol) {
            return Err(Error::Singular { column: k, pivot });
        }
        a.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / pivot;
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[i][c] -= f * a[k][c];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k][c] * x[c]).sum();
        x[k] = (x[k] - s) / a[k][k];
    }
    Ok(x)
}

/// Banded LU with partial pivoting. Row `i` stores absolute columns
/// `i - bw ..= i + 2 bw`, which holds the fill created by row swaps.
fn banded_solve(j: &SparseMatrix, bw: usize, r: &[f64]) -> Result<Vec<f64>> {
    let n = j.rows();
    let width = 3 * bw + 1;
    let mut band = vec![0.0; n * width];
    // column c of row i lives at i * width + (c + bw - i)
    let at = |i: usize, c: usize| i * width + (c + bw - i);
    for i in 0..n {
        for (c, v) in j.row(i) {
            band[at(i, c)] += v;
        }
    }
    let tol = SINGULAR_PIVOT_RATIO * j.norm_inf();
    let mut x = r.to_vec();
    for k in 0..n {
        let last_row = (k + bw).min(n - 1);
        let last_col = (k + 2 * bw).min(n - 1);
        let p = (k..=last_row)
            .max_by(|&u, &v| band[at(u, k)].abs().total_cmp(&band[at(v, k)].abs()))
            .unwrap();
        let pivot = band[at(p, k)];
        if !(pivot.abs() > tol) {
            return Err(Error::Singular { column: k, pivot });
        }
        if p != k {
            for c in k..=last_col {
                band.swap(at(k, c), at(p, c));
            }
            x.swap(k, p);
        }
        for i in k + 1..=last_row {
            let f = band[at(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            band[at(i, k)] = 0.0;
            for c in k + 1..=last_col {
                band[at(i, c)] -= f * band[at(k, c)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let last_col = (k + 2 * bw).min(n - 1);
        let s: f64 = (k + 1..=last_col).map(|c| band[at(k, c)] * x[c]).sum();
        x[k] = (x[k] - s) / band[at(k, k)];
    }
    Ok(x)
}
