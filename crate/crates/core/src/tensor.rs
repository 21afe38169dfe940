//! Sparse m-order n-dimensional real tensors.
//!
//! Entries are kept in coordinate form, sorted lexicographically by index
//! tuple and grouped by the leading (row) index. Indices are 0-based in the
//! Rust API; the text file format and all reports are 1-based.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    order: usize,
    dim: usize,
    /// `row_ptr[i]..row_ptr[i + 1]` is the range of entries with leading index `i`.
    row_ptr: Vec<usize>,
    /// Trailing indices `(i2, .., im)` of every entry, `order - 1` per entry.
    trailing: Vec<usize>,
    values: Vec<f64>,
}

fn fmt_index(idx: &[usize]) -> String {
    let one_based: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
    format!("({})", one_based.join(","))
}

impl SparseTensor {
    /// Builds a tensor from `(index tuple, value)` pairs with 0-based indices.
    ///
    /// Duplicate tuples are rejected. Exact zeros are dropped after the
    /// duplicate check so that every stored entry is nonzero.
    pub fn from_entries<I>(order: usize, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        if order < 2 {
            return Err(Error::OrderMismatch(format!("order must be >= 2, got {order}")));
        }
        if dim < 1 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        let mut list: Vec<(Vec<usize>, f64)> = Vec::new();
        for (idx, v) in entries {
            if idx.len() != order {
                return Err(Error::OrderMismatch(format!(
                    "index tuple {} has {} components, tensor order is {order}",
                    fmt_index(&idx),
                    idx.len()
                )));
            }
            if let Some(&bad) = idx.iter().find(|&&k| k >= dim) {
                return Err(Error::IndexOutOfRange(format!(
                    "component {} of {} exceeds dimension {dim}",
                    bad + 1,
                    fmt_index(&idx)
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{v} at {}", fmt_index(&idx))));
            }
            list.push((idx, v));
        }
        list.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateIndex(fmt_index(&w[0].0)));
        }
        list.retain(|(_, v)| *v != 0.0);

        let mut row_ptr = vec![0usize; dim + 1];
        let mut trailing = Vec::with_capacity(list.len() * (order - 1));
        let mut values = Vec::with_capacity(list.len());
        for (idx, v) in &list {
            row_ptr[idx[0] + 1] += 1;
            trailing.extend_from_slice(&idx[1..]);
            values.push(*v);
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseTensor {
            order,
            dim,
            row_ptr,
            trailing,
            values,
        })
    }

    /// The identity tensor: ones on the diagonal, zeros elsewhere.
    pub fn identity(order: usize, dim: usize) -> Result<Self> {
        Self::from_entries(order, dim, (0..dim).map(|i| (vec![i; order], 1.0)))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(trailing indices, value)`, in sorted order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        let k = self.order - 1;
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |e| (&self.trailing[e * k..(e + 1) * k], self.values[e]))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// All stored entries as `(full index tuple, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            self.row(i).map(move |(t, v)| {
                let mut idx = Vec::with_capacity(self.order);
                idx.push(i);
                idx.extend_from_slice(t);
                (idx, v)
            })
        })
    }

    /// Value at a full 0-based index tuple (zero when not stored).
    pub fn get(&self, idx: &[usize]) -> f64 {
        if idx.len() != self.order || idx.iter().any(|&k| k >= self.dim) {
            return 0.0;
        }
        let k = self.order - 1;
        let (lo, hi) = (self.row_ptr[idx[0]], self.row_ptr[idx[0] + 1]);
        let tail = &idx[1..];
        let mut a = lo;
        let mut b = hi;
        while a < b {
            let mid = (a + b) / 2;
            match self.trailing[mid * k..(mid + 1) * k].cmp(tail) {
                std::cmp::Ordering::Less => a = mid + 1,
                std::cmp::Ordering::Greater => b = mid,
                std::cmp::Ordering::Equal => return self.values[mid],
            }
        }
        0.0
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.get(&vec![i; self.order])
    }

    pub fn diagonals(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.diagonal(i)).collect()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    /// Row `i` of `A x^{m-1}`. The caller guarantees `x.len() == dim`.
    pub fn contract_row(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i)
            .map(|(t, v)| t.iter().fold(v, |acc, &j| acc * x[j]))
            .sum()
    }

    /// The vector `A x^{m-1}` whose i-th entry is `sum a_{i i2..im} x_{i2}..x_{im}`.
    pub fn contract(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok((0..self.dim).map(|i| self.contract_row(i, x)).collect())
    }

    /// Derivative of `x -> A x^{m-1}`.
    pub fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix> {
        self.check_dim(x.len())?;
        let mut triplets = Vec::with_capacity(self.nnz() * (self.order - 1));
        for i in 0..self.dim {
            for (t, v) in self.row(i) {
                for s in 0..t.len() {
                    let prod = t
                        .iter()
                        .enumerate()
                        .filter(|&(r, _)| r != s)
                        .fold(v, |acc, (_, &j)| acc * x[j]);
                    triplets.push((i, t[s], prod));
                }
            }
        }
        Ok(SparseMatrix::from_triplets(self.dim, self.dim, triplets))
    }

    /// Relabels indices: the result has `a'_{i1..im} = a_{pi(i1)..pi(im)}`.
    ///
    /// `pi` is a 0-based bijection on `0..dim`.
    pub fn permute(&self, pi: &[usize]) -> Result<SparseTensor> {
        self.check_dim(pi.len())?;
        let mut inverse = vec![usize::MAX; self.dim];
        for (i, &p) in pi.iter().enumerate() {
            if p >= self.dim || inverse[p] != usize::MAX {
                return Err(Error::InvalidPermutation(format!("{:?}", pi)));
            }
            inverse[p] = i;
        }
        let entries = self
            .entries()
            .map(|(idx, v)| (idx.iter().map(|&j| inverse[j]).collect(), v));
        SparseTensor::from_entries(self.order, self.dim, entries)
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Result<SparseTensor> {
        self.check_dim(scale.len())?;
        let mut out = self.clone();
        for i in 0..self.dim {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[e] *= scale[i];
            }
        }
        Ok(out)
    }

    /// `A + diag(shift)` in the tensor sense (`shift[i]` added to `a_{i..i}`).
    pub fn add_diagonal(&self, shift: &[f64]) -> Result<SparseTensor> {
        self.check_dim(shift.len())?;
        let order = self.order;
        let mut entries: Vec<(Vec<usize>, f64)> = self.entries().collect();
        let mut has_diag = vec![false; self.dim];
        for (idx, v) in entries.iter_mut() {
            let i = idx[0];
            if idx.iter().all(|&k| k == i) {
                *v += shift[i];
                has_diag[i] = true;
            }
        }
        for i in 0..self.dim {
            if !has_diag[i] && shift[i] != 0.0 {
                entries.push((vec![i; order], shift[i]));
            }
        }
        SparseTensor::from_entries(order, self.dim, entries)
    }

    /// Replaces the rows flagged in `mask` by identity rows.
    pub fn with_identity_rows(&self, mask: &[bool]) -> Result<SparseTensor> {
        self.check_dim(mask.len())?;
        let order = self.order;
        let kept = self.entries().filter(|(idx, _)| !mask[idx[0]]);
        let ident = (0..self.dim).filter(|&i| mask[i]).map(|i| (vec![i; order], 1.0));
        SparseTensor::from_entries(order, self.dim, kept.chain(ident).collect::<Vec<_>>())
    }

    /// Folds lower-order nonnegative tensors `B_p` (orders `2..m-1`) into an
    /// `m`-order `(n+1)`-dimensional tensor `A'` with
    /// `A' (x; 1)^{m-1} = (A x^{m-1} - sum_p B_p x^{p-1}; 1)`.
    ///
    /// Each `B_p` entry is split evenly over the `binomial(m-1, p-1)` ways of
    /// placing its trailing indices, in order, among the `m-1` trailing slots of
    /// `A'`; the remaining slots take the new index `n`.
    pub fn embed_lower_order(&self, lower: &[SparseTensor]) -> Result<SparseTensor> {
        let m = self.order;
        let n = self.dim;
        let mut seen_orders = Vec::new();
        for b in lower {
            if b.dim != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.dim,
                });
            }
            if b.order < 2 || b.order >= m {
                return Err(Error::OrderMismatch(format!(
                    "lower-order tensor has order {}, expected 2..{}",
                    b.order,
                    m - 1
                )));
            }
            if seen_orders.contains(&b.order) {
                return Err(Error::OrderMismatch(format!(
                    "more than one lower-order tensor of order {}",
                    b.order
                )));
            }
            seen_orders.push(b.order);
            if let Some((idx, v)) = b.entries().find(|(_, v)| *v < 0.0) {
                return Err(Error::NegativeEntry(format!("{v} at {}", fmt_index(&idx))));
            }
        }

        let mut entries: Vec<(Vec<usize>, f64)> = self.entries().collect();
        entries.push((vec![n; m], 1.0));
        for b in lower {
            let placements = combinations(m - 1, b.order - 1);
            let share = placements.len() as f64;
            for (idx, v) in b.entries() {
                for slots in &placements {
                    let mut full = vec![n; m];
                    full[0] = idx[0];
                    for (&slot, &j) in slots.iter().zip(&idx[1..]) {
                        full[1 + slot] = j;
                    }
                    entries.push((full, -v / share));
                }
            }
        }
        SparseTensor::from_entries(m, n + 1, entries)
    }
}

/// All increasing `k`-subsets of `0..n`, in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for s in start..n {
            if n - s < k - cur.len() {
                break;
            }
            cur.push(s);
            rec(s + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

impl fmt::Display for SparseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::io::format_tensor(self))
    }
}
