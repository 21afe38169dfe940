//! Positive solutions of `A x^{m-1} = b` for strong M-tensors `A`.
//!
//! Two independent routes: damped Newton on `F(x) = A x^{m-1} - b`, and the
//! diagonally scaled fixed-point map `u <- ((I - Â) u^{m-1} + b̂)^{[1/(m-1)]}`.

use crate::error::{Error, Result};
use crate::matrix::{self, SparseMatrix};
use crate::structure::{self, StrongM};
use crate::tensor::SparseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Newton,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Smallest Newton damping factor tried before giving up on positivity.
    pub damping_min: f64,
    /// Verify the structural hypothesis before solving.
    pub check_structure: bool,
    /// Right-hand sides with zero entries are solved with `b + eps e`,
    /// `eps = nonneg_shift * max(max b, 1)`.
    pub nonneg_shift: f64,
}

impl Default for SolveOptions {
    /// Newton with the stopping rule `|x_k - x_{k-1}| <= 1e-24 + 1e-12 |x_k|`.
    fn default() -> Self {
        SolveOptions {
            method: Method::Newton,
            abs_tol: 1e-24,
            rel_tol: 1e-12,
            max_iters: 200,
            damping_min: 1.0 / (1u64 << 30) as f64,
            check_structure: true,
            nonneg_shift: 1e-10,
        }
    }
}

impl SolveOptions {
    pub fn fixed_point() -> Self {
        SolveOptions {
            method: Method::FixedPoint,
            max_iters: 1_000_000,
            ..SolveOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.abs_tol >= 0.0
            && self.rel_tol >= 0.0
            && self.abs_tol + self.rel_tol > 0.0
            && self.max_iters > 0
            && self.damping_min > 0.0
            && self.damping_min <= 1.0
            && self.nonneg_shift > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver options {self:?}")))
        }
    }

    fn converged(&self, step: f64, x: &[f64]) -> bool {
        step <= self.abs_tol + self.rel_tol * norm_inf(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `|A x^{m-1} - b|_inf` against the caller's (unscaled, unshifted) system.
    pub residual_inf: f64,
    /// Step norm `|x_k - x_{k-1}|_inf` of every iterate.
    pub history: Vec<f64>,
    /// Set when `b` had zero entries and the shifted system was solved.
    pub nonnegative_mode: bool,
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn residual_inf(a: &SparseTensor, x: &[f64], b: &[f64]) -> Result<f64> {
    let ax = a.contract(x)?;
    Ok(ax.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs())))
}

/// Solves `J d = r`. Rows whose only entry is the diagonal are solved first
/// and their columns moved to the right-hand side, so those components come
/// out as an exact quotient.
pub fn jacobian_solve(j: &SparseMatrix, r: &[f64]) -> Result<Vec<f64>> {
    let n = j.rows();
    let single: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let mut it = j.row(i).filter(|&(_, v)| v != 0.0);
            match (it.next(), it.next()) {
                (Some((k, v)), None) if k == i => Some(v),
                _ => None,
            }
        })
        .collect();
    if single.iter().all(Option::is_none) || r.len() != n || j.cols() != n {
        return matrix::solve_linear(j, r);
    }
    let fixed: Vec<Option<f64>> = (0..n).map(|i| single[i].map(|d| r[i] / d)).collect();
    let mut rhs = r.to_vec();
    let mut triplets = Vec::with_capacity(j.nnz());
    for i in 0..n {
        for (k, v) in j.row(i) {
            match fixed[k] {
                Some(xk) if k != i => rhs[i] -= v * xk,
                _ => triplets.push((i, k, v)),
            }
        }
    }
    let mut x = matrix::solve_linear(&SparseMatrix::from_triplets(n, n, triplets), &rhs)?;
    for i in 0..n {
        if let Some(xi) = fixed[i] {
            x[i] = xi;
        }
    }
    Ok(x)
}

fn check_rhs(a: &SparseTensor, b: &[f64]) -> Result<()> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    if let Some((i, v)) = b.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "right-hand side must be nonnegative, b[{}] = {v}",
            i + 1
        )));
    }
    Ok(())
}

fn positive_diagonals(a: &SparseTensor) -> Result<Vec<f64>> {
    let d = a.diagonals();
    if let Some((row, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveDiagonal { row: row + 1, value });
    }
    Ok(d)
}

/// Returns the shifted right-hand side when `b` has zeros.
fn shifted_rhs(b: &[f64], opts: &SolveOptions) -> Option<Vec<f64>> {
    if b.iter().all(|&v| v > 0.0) {
        return None;
    }
    let eps = opts.nonneg_shift * b.iter().fold(1.0f64, |m, &v| m.max(v));
    Some(b.iter().map(|v| v + eps).collect())
}

pub fn solve(a: &SparseTensor, b: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    match opts.method {
        Method::Newton => solve_newton(a, b, opts),
        Method::FixedPoint => solve_fixed_point(a, b, opts),
    }
}

pub fn solve_newton(a: &SparseTensor, b: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    solve_newton_from(a, b, None, opts)
}

/// Default Newton start. The diagonal guess `(b_i / a_{i..i})^{1/(m-1)}` is
/// used when it makes `A x0^{m-1}` positive, which keeps `J(x0)` an
/// M-matrix for Z-tensors. Otherwise the constant vector `t e` with
/// `t = (max b / max A e^{m-1})^{1/(m-1)}` is used.
pub fn initial_guess(a: &SparseTensor, b: &[f64], diag: &[f64]) -> Result<Vec<f64>> {
    let p = 1.0 / (a.order() - 1) as f64;
    let x0: Vec<f64> = b.iter().zip(diag).map(|(bi, di)| (bi / di).powf(p)).collect();
    if a.contract(&x0)?.iter().all(|&v| v > 0.0) {
        return Ok(x0);
    }
    let ae = a.contract(&vec![1.0; a.dim()])?;
    let top = ae.iter().fold(0.0f64, |m, &v| m.max(v));
    let bmax = b.iter().fold(0.0f64, |m, &v| m.max(v));
    let t = if top > 0.0 && bmax > 0.0 { (bmax / top).powf(p) } else { 1.0 };
    Ok(vec![t; a.dim()])
}

/// Damped Newton from `x0`, or from [`initial_guess`] when `x0` is `None`.
///
/// Each step solves `J(x_k) d = -F(x_k)` and halves the step length until the
/// new iterate is strictly positive.
pub fn solve_newton_from(
    a: &SparseTensor,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    check_rhs(a, b)?;
    let diag = positive_diagonals(a)?;
    if opts.check_structure {
        let verdict = structure::strong_m_verdict(a);
        if verdict != StrongM::StrongM {
            return Err(Error::NotStrongM(format!("classifier verdict {}", verdict.as_str())));
        }
    }
    if a.order() == 2 {
        return solve_linear_case(a, b);
    }

    let shifted = shifted_rhs(b, opts);
    let rhs = shifted.as_deref().unwrap_or(b);
    let n = a.dim();
    let mut x: Vec<f64> = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x0.len(),
                });
            }
            if x0.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("Newton start must be positive".into()));
            }
            x0.to_vec()
        }
        None => initial_guess(a, rhs, &diag)?,
    };

    let mut history = Vec::new();
    for it in 1..=opts.max_iters {
        let ax = a.contract(&x)?;
        let neg_f: Vec<f64> = rhs.iter().zip(&ax).map(|(bi, v)| bi - v).collect();
        let d = jacobian_solve(&a.jacobian(&x)?, &neg_f)?;
        let mut t = 1.0;
        while (0..n).any(|i| x[i] + t * d[i] <= 0.0) {
            t *= 0.5;
            if t < opts.damping_min {
                return Err(Error::PositivityExhausted(it));
            }
        }
        let mut step = 0.0f64;
        for i in 0..n {
            let next = x[i] + t * d[i];
            step = step.max((next - x[i]).abs());
            x[i] = next;
        }
        history.push(step);
        if opts.converged(step, &x) {
            let x = settle_decoupled(a, rhs, &diag, x)?;
            let residual_inf = residual_inf(a, &x, b)?;
            return Ok(SolveReport {
                x,
                iterations: it,
                residual_inf,
                history,
                nonnegative_mode: shifted.is_some(),
            });
        }
    }
    Err(Error::MaxIterations(opts.max_iters))
}

/// Sets rows holding only a diagonal entry to their closed-form value and
/// takes one Newton step on the remaining rows. Keeps `x` if that step
/// leaves the positive orthant.
fn settle_decoupled(a: &SparseTensor, b: &[f64], diag: &[f64], x: Vec<f64>) -> Result<Vec<f64>> {
    let p = 1.0 / (a.order() - 1) as f64;
    let fixed: Vec<Option<f64>> = (0..a.dim())
        .map(|i| (a.row_nnz(i) == 1).then(|| (b[i] / diag[i]).powf(p)))
        .collect();
    if fixed.iter().zip(&x).all(|(f, xi)| f.is_none_or(|f| f == *xi)) {
        return Ok(x);
    }
    let mut y = x.clone();
    for (yi, f) in y.iter_mut().zip(&fixed) {
        if let Some(f) = f {
            *yi = *f;
        }
    }
    let ay = a.contract(&y)?;
    let neg_f: Vec<f64> = b.iter().zip(&ay).map(|(bi, v)| bi - v).collect();
    let d = jacobian_solve(&a.jacobian(&y)?, &neg_f)?;
    for i in 0..y.len() {
        if fixed[i].is_none() {
            y[i] += d[i];
        }
    }
    Ok(if y.iter().all(|&v| v > 0.0) { y } else { x })
}

/// Order 2: the Newton step is exact from any start, so solve directly.
fn solve_linear_case(a: &SparseTensor, b: &[f64]) -> Result<SolveReport> {
    let j = a.jacobian(&vec![1.0; a.dim()])?;
    let x = jacobian_solve(&j, b)?;
    let scale = norm_inf(&x);
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| **v < -1e-14 * scale) {
        return Err(Error::NotStrongM(format!("solution has negative entry x[{}] = {v}", i + 1)));
    }
    let nonnegative_mode = b.contains(&0.0);
    let residual_inf = residual_inf(a, &x, b)?;
    let step = norm_inf(&x);
    Ok(SolveReport {
        x,
        iterations: 1,
        residual_inf,
        history: vec![step],
        nonnegative_mode,
    })
}

/// Sum of the off-diagonal terms of row `i` of `A u^{m-1}`.
fn off_diagonal_row(a: &SparseTensor, i: usize, u: &[f64]) -> f64 {
    a.row(i)
        .filter(|(t, _)| !t.iter().all(|&k| k == i))
        .map(|(t, v)| t.iter().fold(v, |acc, &j| acc * u[j]))
        .sum()
}

/// Fixed-point iteration on the diagonally scaled system.
///
/// For strictly diagonally dominant `A` the plain map is iterated. For w.c.d.d.
/// `A` the shifted systems `(Â + k^{-1} I) u^{m-1} = b̂`, `k = 1e3, 1e6, 1e9, 1e12`,
/// are solved in turn, each warm-started from the previous one.
pub fn solve_fixed_point(a: &SparseTensor, b: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    check_rhs(a, b)?;
    let diag = positive_diagonals(a)?;
    let dom = structure::dominance(a);
    let shifts: Vec<f64> = if dom.is_sdd {
        vec![0.0]
    } else {
        vec![1e-3, 1e-6, 1e-9, 1e-12]
    };
    if opts.check_structure {
        let ok = structure::is_z_tensor(a) && (dom.is_sdd || structure::is_wcdd(a).is_wcdd);
        if !ok {
            return Err(Error::NotStrongM(
                "fixed-point iteration requires an s.d.d. or w.c.d.d. Z-tensor".into(),
            ));
        }
    }

    let shifted = shifted_rhs(b, opts);
    let rhs = shifted.as_deref().unwrap_or(b);
    let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let scaled = a.scale_rows(&inv)?;
    let bhat: Vec<f64> = rhs.iter().zip(&inv).map(|(bi, s)| bi * s).collect();
    let p = 1.0 / (a.order() - 1) as f64;
    let n = a.dim();

    let mut u: Vec<f64> = bhat.iter().map(|v| v.powf(p)).collect();
    let mut next = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for shift in shifts {
        let mut done = false;
        while !done {
            if iterations >= opts.max_iters {
                return Err(Error::MaxIterations(opts.max_iters));
            }
            iterations += 1;
            for (i, slot) in next.iter_mut().enumerate() {
                let radicand = (bhat[i] - off_diagonal_row(&scaled, i, &u)) / (1.0 + shift);
                if radicand < 0.0 {
                    return Err(Error::NegativeRadicand {
                        row: i + 1,
                        value: radicand,
                    });
                }
                *slot = radicand.powf(p);
            }
            let step = u.iter().zip(&next).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            std::mem::swap(&mut u, &mut next);
            history.push(step);
            done = opts.converged(step, &u);
        }
    }
    let residual_inf = residual_inf(a, &u, b)?;
    Ok(SolveReport {
        x: u,
        iterations,
        residual_inf,
        history,
        nonnegative_mode: shifted.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_m_tensor() -> SparseTensor {
        SparseTensor::from_entries(
            3,
            2,
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![0, 1, 1], -0.25),
                (vec![1, 1, 1], 1.0),
                (vec![1, 0, 0], -0.25),
            ],
        )
        .unwrap()
    }

    fn assert_close(x: &[f64], y: &[f64], tol: f64) {
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() <= tol, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn identity_newton_one_step() {
        let id = SparseTensor::identity(3, 2).unwrap();
        let r = solve_newton(&id, &[4.0, 9.0], &SolveOptions::default()).unwrap();
        assert_eq!(r.x, vec![2.0, 3.0]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn identity_fixed_point() {
        let id = SparseTensor::identity(3, 2).unwrap();
        let r = solve_fixed_point(&id, &[4.0, 9.0], &SolveOptions::fixed_point()).unwrap();
        assert_close(&r.x, &[2.0, 3.0], 1e-15);
    }

    #[test]
    fn small_m_tensor_both_methods() {
        let a = small_m_tensor();
        let b = [0.75, 0.75];
        let n = solve_newton(&a, &b, &SolveOptions::default()).unwrap();
        let f = solve_fixed_point(&a, &b, &SolveOptions::fixed_point()).unwrap();
        assert_close(&n.x, &[1.0, 1.0], 1e-12);
        assert_close(&f.x, &[1.0, 1.0], 1e-10);
        assert!(n.residual_inf <= 1e-12);
    }

    #[test]
    fn non_positive_diagonal_rejected() {
        let a = SparseTensor::from_entries(3, 2, vec![(vec![0, 0, 0], 1.0)]).unwrap();
        let e = solve_fixed_point(&a, &[1.0, 1.0], &SolveOptions::fixed_point()).unwrap_err();
        assert!(matches!(e, Error::NonPositiveDiagonal { row: 2, .. }));
    }

    #[test]
    fn not_strong_m_rejected_unless_overridden() {
        let a = SparseTensor::from_entries(
            3,
            2,
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![0, 1, 1], -1.0),
                (vec![1, 1, 1], 1.0),
                (vec![1, 0, 0], -1.0),
            ],
        )
        .unwrap();
        let e = solve_newton(&a, &[1.0, 1.0], &SolveOptions::default()).unwrap_err();
        assert!(matches!(e, Error::NotStrongM(_)));
    }

    #[test]
    fn negative_radicand_detected() {
        // strongly coupled, not dominant: plain map leaves the orthant
        let a = SparseTensor::from_entries(
            3,
            2,
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![0, 1, 1], 3.0),
                (vec![1, 1, 1], 1.0),
            ],
        )
        .unwrap();
        let opts = SolveOptions {
            check_structure: false,
            ..SolveOptions::fixed_point()
        };
        let e = solve_fixed_point(&a, &[1.0, 1.0], &opts).unwrap_err();
        assert!(matches!(e, Error::NegativeRadicand { row: 1, .. }), "{e}");
    }

    #[test]
    fn max_iterations_reported() {
        let a = small_m_tensor();
        let opts = SolveOptions {
            max_iters: 2,
            ..SolveOptions::fixed_point()
        };
        assert!(matches!(solve_fixed_point(&a, &[0.75, 0.75], &opts), Err(Error::MaxIterations(2))));
    }

    #[test]
    fn zero_rhs_entries_use_nonnegative_mode() {
        let a = small_m_tensor();
        let r = solve_newton(&a, &[0.75, 0.0], &SolveOptions::default()).unwrap();
        assert!(r.nonnegative_mode);
        assert!(r.x.iter().all(|&v| v > 0.0));
        assert!(r.residual_inf < 1e-8);
    }

    #[test]
    fn linear_order_two() {
        let a = SparseTensor::from_entries(
            2,
            2,
            vec![(vec![0, 0], 2.0), (vec![0, 1], -1.0), (vec![1, 1], 2.0), (vec![1, 0], -1.0)],
        )
        .unwrap();
        let r = solve_newton(&a, &[1.0, 1.0], &SolveOptions::default()).unwrap();
        assert_close(&r.x, &[1.0, 1.0], 1e-15);
        let f = solve_fixed_point(&a, &[1.0, 1.0], &SolveOptions::fixed_point()).unwrap();
        assert_close(&f.x, &[1.0, 1.0], 1e-10);
    }

    #[test]
    fn negative_rhs_rejected() {
        let id = SparseTensor::identity(3, 2).unwrap();
        assert!(matches!(
            solve_newton(&id, &[1.0, -1.0], &SolveOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn tridiagonal_jacobian_solve_matches_dense() {
        let n = 7;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64));
            if i > 0 {
                t.push((i, i - 1, -1.0 - 0.1 * i as f64));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.5));
            }
        }
        let j = SparseMatrix::from_triplets(n, n, t);
        let r: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let banded = jacobian_solve(&j, &r).unwrap();
        let dense = matrix::dense_lu_solve(j.to_dense(), &r).unwrap();
        assert_close(&banded, &dense, 1e-12);
    }
}
