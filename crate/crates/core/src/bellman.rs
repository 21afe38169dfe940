//! Row-decoupled Bellman problems `min_P { A(P) u^{m-1} - b(P) } = 0` over
//! finite per-row policy sets, and policy iteration with the locally optimal
//! pivot rule.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::io::{content_lines, parse_index, parse_num, parse_value};
use crate::solve::{self, norm_inf, SolveOptions};
use crate::structure::{self, StrongM};
use crate::tensor::SparseTensor;

/// One local policy of one row: the row's entries and its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct RowChoice {
    pub label: String,
    /// Trailing indices `(i2, .., im)` of every entry, `m - 1` per entry.
    trailing: Vec<usize>,
    values: Vec<f64>,
    pub rhs: f64,
}

impl RowChoice {
    /// `entries` are `(trailing indices, value)` pairs with 0-based indices.
    pub fn new(label: impl Into<String>, entries: Vec<(Vec<usize>, f64)>, rhs: f64) -> Self {
        let mut trailing = Vec::new();
        let mut values = Vec::new();
        for (t, v) in entries {
            trailing.extend(t);
            values.push(v);
        }
        RowChoice {
            label: label.into(),
            trailing,
            values,
            rhs,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        let k = if self.values.is_empty() {
            1
        } else {
            self.trailing.len() / self.values.len()
        };
        self.trailing.chunks(k).zip(self.values.iter().copied())
    }

    fn eval(&self, u: &[f64]) -> f64 {
        self.entries()
            .map(|(t, v)| t.iter().fold(v, |acc, &j| acc * u[j]))
            .sum()
    }
}

/// A policy: for each row, the index of its chosen [`RowChoice`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProblem {
    order: usize,
    rows: Vec<Vec<RowChoice>>,
}

impl PolicyProblem {
    pub fn new(order: usize, rows: Vec<Vec<RowChoice>>) -> Result<Self> {
        if order < 2 {
            return Err(Error::OrderMismatch(format!("order must be >= 2, got {order}")));
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("problem has no rows".into()));
        }
        for (i, choices) in rows.iter().enumerate() {
            if choices.is_empty() {
                return Err(Error::InvalidArgument(format!("row {} has an empty policy set", i + 1)));
            }
            for c in choices {
                if c.trailing.len() != c.values.len() * (order - 1) {
                    return Err(Error::OrderMismatch(format!(
                        "row {} policy '{}' has entries of the wrong order",
                        i + 1,
                        c.label
                    )));
                }
                if !c.rhs.is_finite() || c.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("row {} policy '{}'", i + 1, c.label)));
                }
                if let Some(&j) = c.trailing.iter().find(|&&j| j >= n) {
                    return Err(Error::IndexOutOfRange(format!(
                        "row {} policy '{}' references index {}",
                        i + 1,
                        c.label,
                        j + 1
                    )));
                }
                let mut keys: Vec<&[usize]> = c.entries().map(|(t, _)| t).collect();
                keys.sort();
                if keys.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::DuplicateIndex(format!("row {} policy '{}'", i + 1, c.label)));
                }
            }
        }
        Ok(PolicyProblem { order, rows })
    }

    /// A problem with a single policy per row, taken from `A` and `b`.
    pub fn single(a: &SparseTensor, b: &[f64]) -> Result<Self> {
        if b.len() != a.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                got: b.len(),
            });
        }
        let rows = (0..a.dim())
            .map(|i| vec![RowChoice::new("0", a.row(i).map(|(t, v)| (t.to_vec(), v)).collect(), b[i])])
            .collect();
        PolicyProblem::new(a.order(), rows)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn choices(&self, i: usize) -> &[RowChoice] {
        &self.rows[i]
    }

    /// `prod |P_i|`, or `None` if it overflows.
    pub fn policy_count(&self) -> Option<u128> {
        self.rows
            .iter()
            .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
    }

    pub fn labels(&self, p: &Policy) -> Vec<&str> {
        p.0.iter()
            .enumerate()
            .map(|(i, &k)| self.rows[i][k].label.as_str())
            .collect()
    }

    fn check_policy(&self, p: &Policy) -> Result<()> {
        if p.0.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.0.len(),
            });
        }
        if let Some((i, &k)) = p.0.iter().enumerate().find(|(i, &k)| k >= self.rows[*i].len()) {
            return Err(Error::IndexOutOfRange(format!("policy index {k} in row {}", i + 1)));
        }
        Ok(())
    }

    /// `(A(P), b(P))`.
    pub fn assemble(&self, p: &Policy) -> Result<(SparseTensor, Vec<f64>)> {
        self.check_policy(p)?;
        let mut entries = Vec::new();
        let mut b = Vec::with_capacity(self.dim());
        for (i, &k) in p.0.iter().enumerate() {
            let c = &self.rows[i][k];
            for (t, v) in c.entries() {
                let mut idx = Vec::with_capacity(self.order);
                idx.push(i);
                idx.extend_from_slice(t);
                entries.push((idx, v));
            }
            b.push(c.rhs);
        }
        Ok((SparseTensor::from_entries(self.order, self.dim(), entries)?, b))
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Row residuals `(A(P) u^{m-1} - b(P))_i` for every local policy of every row.
    pub fn local_residuals(&self, u: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(u)?;
        Ok(self
            .rows
            .iter()
            .map(|choices| choices.iter().map(|c| c.eval(u) - c.rhs).collect())
            .collect())
    }

    /// Rowwise minimum of the local residuals and the first minimizing policy.
    pub fn bellman_residual_with_policy(&self, u: &[f64]) -> Result<(Vec<f64>, Policy)> {
        let local = self.local_residuals(u)?;
        let mut res = Vec::with_capacity(self.dim());
        let mut pol = Vec::with_capacity(self.dim());
        for row in &local {
            let (k, v) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best });
            res.push(v);
            pol.push(k);
        }
        Ok((res, Policy(pol)))
    }

    /// `min_P { A(P) u^{m-1} - b(P) }`, taken rowwise.
    pub fn bellman_residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.bellman_residual_with_policy(u)?.0)
    }

    /// Picks the next policy: the rowwise argmin at `u_prev` (ties to the
    /// smallest index) if unvisited; otherwise that policy with the first row
    /// admitting an unvisited alternative moved to its next label cyclically;
    /// otherwise the next unvisited policy in mixed-radix order.
    pub fn pivot_locally_optimal(&self, u_prev: &[f64], visited: &HashSet<Policy>) -> Result<Policy> {
        let (_, best) = self.bellman_residual_with_policy(u_prev)?;
        if !visited.contains(&best) {
            return Ok(best);
        }
        if let Some(total) = self.policy_count() {
            if visited.len() as u128 >= total {
                return Err(Error::NoSolutionFound);
            }
        }
        for i in 0..self.dim() {
            let len = self.rows[i].len();
            for shift in 1..len {
                let mut cand = best.clone();
                cand.0[i] = (best.0[i] + shift) % len;
                if !visited.contains(&cand) {
                    return Ok(cand);
                }
            }
        }
        let mut cand = best.clone();
        loop {
            let mut carry = true;
            for i in 0..self.dim() {
                if !carry {
                    break;
                }
                cand.0[i] += 1;
                carry = cand.0[i] == self.rows[i].len();
                if carry {
                    cand.0[i] = 0;
                }
            }
            if cand == best {
                return Err(Error::NoSolutionFound);
            }
            if !visited.contains(&cand) {
                return Ok(cand);
            }
        }
    }

    pub fn max_rhs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .fold(0.0, |m, c| m.max(c.rhs.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOptions {
    pub solve: SolveOptions,
    /// Bellman residual tolerance; `None` means `1e-8 (1 + max |b|)`.
    pub outer_tol: Option<f64>,
    /// Start each Newton solve from the previous outer iterate.
    pub warm_start: bool,
    /// Check that each visited `A(P)` is a strong M-tensor.
    pub check_structure: bool,
    pub max_outer: Option<usize>,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions {
            solve: SolveOptions::default(),
            outer_tol: None,
            warm_start: false,
            check_structure: true,
            max_outer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterIterate {
    pub policy: Policy,
    pub u: Vec<f64>,
    pub inner_iterations: usize,
    /// `|min_P {A(P) u^{m-1} - b(P)}|_inf` at this iterate.
    pub residual_inf: f64,
    /// `|u_k - u_{k-1}|_inf`, with `u_0 = 0`.
    pub change_inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanReport {
    pub u: Vec<f64>,
    pub final_policy: Policy,
    pub outer_iterations: usize,
    pub inner_iteration_counts: Vec<usize>,
    pub residual_inf: f64,
    pub visited_policy_count: usize,
    pub trace: Vec<OuterIterate>,
}

impl BellmanReport {
    pub fn mean_inner_iterations(&self) -> f64 {
        if self.inner_iteration_counts.is_empty() {
            return 0.0;
        }
        self.inner_iteration_counts.iter().sum::<usize>() as f64 / self.inner_iteration_counts.len() as f64
    }
}

/// Policy iteration: pick a policy, solve `A(P^k) u^{m-1} = b(P^k)`, stop once
/// the Bellman residual is below tolerance.
pub fn policy_iteration(problem: &PolicyProblem, opts: &IterationOptions) -> Result<BellmanReport> {
    let n = problem.dim();
    let outer_tol = opts.outer_tol.unwrap_or(1e-8 * (1.0 + problem.max_rhs()));
    let solve_opts = SolveOptions {
        check_structure: false,
        ..opts.solve.clone()
    };
    let limit = opts.max_outer.unwrap_or(usize::MAX);
    let mut visited: HashSet<Policy> = HashSet::new();
    let mut u_prev = vec![0.0; n];
    let mut trace: Vec<OuterIterate> = Vec::new();

    while trace.len() < limit {
        let policy = problem.pivot_locally_optimal(&u_prev, &visited)?;
        visited.insert(policy.clone());
        let (a, b) = problem.assemble(&policy)?;
        if opts.check_structure {
            let verdict = structure::strong_m_verdict(&a);
            if verdict != StrongM::StrongM {
                return Err(Error::NotStrongM(format!(
                    "A(P) at outer iteration {} has verdict {}",
                    trace.len() + 1,
                    verdict.as_str()
                )));
            }
        }
        let warm = opts.warm_start && !trace.is_empty() && u_prev.iter().all(|&v| v > 0.0);
        let sol = solve::solve_newton_from(&a, &b, warm.then_some(u_prev.as_slice()), &solve_opts)?;
        let u = sol.x;
        let residual_inf = norm_inf(&problem.bellman_residual(&u)?);
        let change_inf = u.iter().zip(&u_prev).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        trace.push(OuterIterate {
            policy,
            u: u.clone(),
            inner_iterations: sol.iterations,
            residual_inf,
            change_inf,
        });
        if residual_inf <= outer_tol {
            let last = trace.last().unwrap();
            return Ok(BellmanReport {
                u,
                final_policy: last.policy.clone(),
                outer_iterations: trace.len(),
                inner_iteration_counts: trace.iter().map(|t| t.inner_iterations).collect(),
                residual_inf,
                visited_policy_count: visited.len(),
                trace,
            });
        }
        u_prev = u;
    }
    Err(Error::MaxIterations(limit))
}

/// True iff `u_star >= u_k - 1e-10` componentwise.
pub fn verify_domination(problem: &PolicyProblem, u_star: &[f64], u_k: &[f64], policy_k: &Policy) -> bool {
    if u_star.len() != problem.dim() || u_k.len() != problem.dim() || problem.check_policy(policy_k).is_err() {
        return false;
    }
    u_star.iter().zip(u_k).all(|(s, k)| *s >= k - 1e-10)
}

/// Problem file:
///
/// ```text
/// problem <m> <n>
/// row <i>
/// policy <label> <b_i> <nnz>
/// <i2> .. <im> <value>        (nnz lines, 1-based trailing indices)
/// ```
///
/// Every row `1..=n` appears once, followed by one or more policy blocks.
pub fn parse_problem(text: &str) -> Result<PolicyProblem> {
    let mut lines = content_lines(text).peekable();
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty problem file".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "problem" {
        return Err(Error::Parse {
            line: hline,
            msg: "malformed header, expected 'problem <m> <n>'".into(),
        });
    }
    let order: usize = parse_num(toks[1], hline, "order")?;
    let n: usize = parse_num(toks[2], hline, "dimension")?;
    if order < 2 || n < 1 {
        return Err(Error::Parse {
            line: hline,
            msg: format!("malformed header: order {order}, dimension {n}"),
        });
    }
    let mut rows: Vec<Option<Vec<RowChoice>>> = vec![None; n];
    let mut current: Option<usize> = None;
    while let Some((ln, l)) = lines.next() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "row" if toks.len() == 2 => {
                let i = parse_index(toks[1], n, ln)?;
                if rows[i].is_some() {
                    return Err(Error::DuplicateIndex(format!("row {} at line {ln}", i + 1)));
                }
                rows[i] = Some(Vec::new());
                current = Some(i);
            }
            "policy" if toks.len() == 4 => {
                let i = current.ok_or(Error::Parse {
                    line: ln,
                    msg: "policy block before any row".into(),
                })?;
                let rhs = parse_value(toks[2], ln)?;
                let nnz: usize = parse_num(toks[3], ln, "entry count")?;
                let mut entries = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    let (eln, el) = lines.next().ok_or(Error::Parse {
                        line: ln,
                        msg: "unexpected end of file inside policy block".into(),
                    })?;
                    let et: Vec<&str> = el.split_whitespace().collect();
                    if et.len() != order {
                        return Err(Error::Parse {
                            line: eln,
                            msg: format!("expected {} trailing indices and a value", order - 1),
                        });
                    }
                    let idx = et[..order - 1]
                        .iter()
                        .map(|t| parse_index(t, n, eln))
                        .collect::<Result<Vec<_>>>()?;
                    entries.push((idx, parse_value(et[order - 1], eln)?));
                }
                rows[i]
                    .as_mut()
                    .unwrap()
                    .push(RowChoice::new(toks[1], entries, rhs));
            }
            _ => {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("unexpected line '{l}'"),
                })
            }
        }
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or(Error::Parse {
                line: 0,
                msg: format!("row {} missing", i + 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyProblem::new(order, rows)
}

impl fmt::Display for PolicyProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use crate::io::{fmt_float, EXACT_DIGITS};
        writeln!(f, "problem {} {}", self.order, self.dim())?;
        for (i, choices) in self.rows.iter().enumerate() {
            writeln!(f, "row {}", i + 1)?;
            for c in choices {
                writeln!(f, "policy {} {} {}", c.label, fmt_float(c.rhs, EXACT_DIGITS), c.values.len())?;
                for (t, v) in c.entries() {
                    for j in t {
                        write!(f, "{} ", j + 1)?;
                    }
                    writeln!(f, "{}", fmt_float(v, EXACT_DIGITS))?;
                }
            }
        }
        Ok(())
    }
}
