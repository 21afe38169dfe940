//! Seeded random instances for self-tests and property checks.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bellman::{PolicyProblem, RowChoice};
use crate::tensor::SparseTensor;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_trailing<R: Rng>(rng: &mut R, order: usize, allowed: &[usize]) -> Vec<usize> {
    (0..order - 1).map(|_| allowed[rng.random_range(0..allowed.len())]).collect()
}

/// Off-diagonal magnitudes summed in storage (sorted) order, matching the
/// order used by the dominance test.
fn storage_sum(row: &BTreeMap<Vec<usize>, f64>) -> f64 {
    row.values().fold(0.0, |s, v| s + v.abs())
}

fn assemble_rows(order: usize, n: usize, rows: Vec<(BTreeMap<Vec<usize>, f64>, f64)>) -> SparseTensor {
    let mut entries = Vec::new();
    for (i, (off, slack)) in rows.into_iter().enumerate() {
        let diag = storage_sum(&off) + slack;
        for (t, v) in off {
            let mut idx = vec![i];
            idx.extend(t);
            entries.push((idx, v));
        }
        entries.push((vec![i; order], diag));
    }
    SparseTensor::from_entries(order, n, entries).expect("generated tensor is valid")
}

/// Multiple of `1/64` in `[lo, hi)`. Sums of a few such values are exact, so
/// zero-slack rows stay exactly zero under any summation order.
fn dyadic<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let k = rng.random_range((lo * 64.0).ceil() as i64..(hi * 64.0).ceil() as i64);
    k as f64 / 64.0
}

/// Up to `max_off` random off-diagonal entries per row drawn from `allowed`,
/// each a multiple of `1/64` in `[-1, -1/16]`.
fn random_off_row<R: Rng>(rng: &mut R, order: usize, i: usize, allowed: &[usize], max_off: usize) -> BTreeMap<Vec<usize>, f64> {
    let mut off = BTreeMap::new();
    let count = rng.random_range(0..=max_off);
    for _ in 0..count {
        let t = random_trailing(rng, order, allowed);
        if t.iter().all(|&k| k == i) {
            continue;
        }
        off.insert(t, -dyadic(rng, 0.0625, 1.0));
    }
    off
}

/// Strictly diagonally dominant Z-tensor with positive diagonal.
pub fn sdd_m_tensor<R: Rng>(rng: &mut R, order: usize, n: usize) -> SparseTensor {
    let all: Vec<usize> = (0..n).collect();
    let rows = (0..n)
        .map(|i| (random_off_row(rng, order, i, &all, 2 * n), rng.random_range(0.1..2.0)))
        .collect();
    assemble_rows(order, n, rows)
}

/// Weakly diagonally dominant Z-tensor with nonnegative diagonal. Each row
/// has zero slack with probability one half. With probability one third a
/// random block of rows is closed: its rows only reference the block and
/// have zero slack, so the tensor is not w.c.d.d.
pub fn wdd_z_tensor<R: Rng>(rng: &mut R, order: usize, n: usize) -> SparseTensor {
    let all: Vec<usize> = (0..n).collect();
    let closed: Vec<usize> = if rng.random_bool(1.0 / 3.0) {
        let k = rng.random_range(1..=n);
        let mut pool = all.clone();
        for j in 0..k {
            let s = rng.random_range(j..n);
            pool.swap(j, s);
        }
        let mut c = pool[..k].to_vec();
        c.sort();
        c
    } else {
        Vec::new()
    };
    let rows = (0..n)
        .map(|i| {
            if closed.contains(&i) {
                (random_off_row(rng, order, i, &closed, 2 * n), 0.0)
            } else {
                let slack = if rng.random_bool(0.5) { 0.0 } else { dyadic(rng, 0.0625, 1.0) };
                (random_off_row(rng, order, i, &all, 2 * n), slack)
            }
        })
        .collect();
    assemble_rows(order, n, rows)
}

/// Nonnegative tensor with up to `max_nnz` entries in `[0, 1)`.
pub fn nonneg_tensor<R: Rng>(rng: &mut R, order: usize, n: usize, max_nnz: usize) -> SparseTensor {
    let mut entries = BTreeMap::new();
    for _ in 0..rng.random_range(0..=max_nnz) {
        let idx: Vec<usize> = (0..order).map(|_| rng.random_range(0..n)).collect();
        entries.insert(idx, rng.random_range(0.0..1.0));
    }
    SparseTensor::from_entries(order, n, entries).expect("generated tensor is valid")
}

/// Tensor with arbitrary-sign entries in `[-1, 1)`.
pub fn general_tensor<R: Rng>(rng: &mut R, order: usize, n: usize, max_nnz: usize) -> SparseTensor {
    let mut entries = BTreeMap::new();
    for _ in 0..rng.random_range(1..=max_nnz) {
        let idx: Vec<usize> = (0..order).map(|_| rng.random_range(0..n)).collect();
        entries.insert(idx, rng.random_range(-1.0..1.0));
    }
    SparseTensor::from_entries(order, n, entries).expect("generated tensor is valid")
}

pub fn positive_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Row-decoupled problem whose every policy is s.d.d. Z with positive
/// right-hand side. Each row gets `1..=max_choices` choices, and the total
/// policy count is kept at most `max_policies`.
pub fn policy_problem<R: Rng>(rng: &mut R, order: usize, n: usize, max_choices: usize, max_policies: usize) -> PolicyProblem {
    let all: Vec<usize> = (0..n).collect();
    let mut total = 1usize;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let remaining = max_policies / total;
        let k = rng.random_range(1..=max_choices.min(remaining).max(1));
        total *= k;
        let choices = (0..k)
            .map(|c| {
                let off = random_off_row(rng, order, i, &all, 2 * n);
                let diag = storage_sum(&off) + rng.random_range(0.1..2.0);
                let mut entries: Vec<(Vec<usize>, f64)> = off.into_iter().collect();
                entries.push((vec![i; order - 1], diag));
                RowChoice::new(format!("p{c}"), entries, rng.random_range(0.1..2.0))
            })
            .collect();
        rows.push(choices);
    }
    PolicyProblem::new(order, rows).expect("generated problem is valid")
}
