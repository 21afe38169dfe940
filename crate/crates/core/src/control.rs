//! One-dimensional optimal control on `[0, 1]` with Dirichlet data `g`.
//!
//! Two discretizations of the same equation are provided. The OD scheme
//! eliminates the `γ` control in closed form and yields an order-3 Bellman
//! equation whose policies are the drift labels `λ`. The DO scheme samples
//! `γ` on a uniform grid of `[0, γ_max]` and yields a classical order-2
//! Bellman equation over `Γ × Λ`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bellman::{policy_iteration, BellmanReport, IterationOptions, PolicyProblem, RowChoice};
use crate::error::{Error, Result};
use crate::io::{content_lines, fmt_float, parse_num, parse_value, write_atomic};

/// Coefficients of the control problem. `sigma` and `mu` depend on the
/// drift label `λ`; the others depend on `x` only.
pub trait Model: Sync {
    fn controls(&self) -> &[f64];
    fn sigma(&self, x: f64, lambda: f64) -> f64;
    fn mu(&self, x: f64, lambda: f64) -> f64;
    fn alpha(&self, x: f64) -> f64;
    fn beta(&self, x: f64) -> f64;
    fn eta(&self, x: f64) -> f64;
    fn g(&self, x: f64) -> f64;
}

/// `σ = 0.2`, `μ = 0.04 λ`, `α = 2 - x`, `β = 1 + x`, `η = 0.04`, `g = 1`,
/// `Λ = {-1, 1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Param1;

impl Model for Param1 {
    fn controls(&self) -> &[f64] {
        &[-1.0, 1.0]
    }
    fn sigma(&self, _x: f64, _lambda: f64) -> f64 {
        0.2
    }
    fn mu(&self, _x: f64, lambda: f64) -> f64 {
        0.04 * lambda
    }
    fn alpha(&self, x: f64) -> f64 {
        2.0 - x
    }
    fn beta(&self, x: f64) -> f64 {
        1.0 + x
    }
    fn eta(&self, _x: f64) -> f64 {
        0.04
    }
    fn g(&self, _x: f64) -> f64 {
        1.0
    }
}

/// `σ = 0.3 (1 - λ)`, `μ = 0.04 λ`, `α = β = g = 1`, `η = 1` on `x <= 1/2`
/// and `0` beyond, `Λ = {0, 1}`. Degenerate diffusion and vanishing discount
/// make the OD tensors weakly but not strictly diagonally dominant.
#[derive(Debug, Clone, Copy, Default)]
pub struct Param2;

impl Model for Param2 {
    fn controls(&self) -> &[f64] {
        &[0.0, 1.0]
    }
    fn sigma(&self, _x: f64, lambda: f64) -> f64 {
        0.3 * (1.0 - lambda)
    }
    fn mu(&self, _x: f64, lambda: f64) -> f64 {
        0.04 * lambda
    }
    fn alpha(&self, _x: f64) -> f64 {
        1.0
    }
    fn beta(&self, _x: f64) -> f64 {
        1.0
    }
    fn eta(&self, x: f64) -> f64 {
        if x <= 0.5 {
            1.0
        } else {
            0.0
        }
    }
    fn g(&self, _x: f64) -> f64 {
        1.0
    }
}

/// `(lo, hi, coefficients)` of one polynomial piece.
type Piece = (f64, f64, Vec<f64>);

/// Piecewise polynomial on `[lo, hi]`; the first matching piece wins.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise {
    pieces: Vec<Piece>,
}

impl Piecewise {
    pub fn constant(c: f64) -> Self {
        Piecewise {
            pieces: vec![(f64::NEG_INFINITY, f64::INFINITY, vec![c])],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .find(|(lo, hi, _)| *lo <= x && x <= *hi)
            .map(|(_, _, c)| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci))
            .unwrap_or(f64::NAN)
    }

    fn covers_unit_interval(&self) -> bool {
        let mut x = 0.0;
        loop {
            let reach = self
                .pieces
                .iter()
                .filter(|(lo, hi, _)| *lo <= x && x <= *hi)
                .map(|(_, hi, _)| *hi)
                .fold(f64::NEG_INFINITY, f64::max);
            if reach >= 1.0 {
                return true;
            }
            if reach <= x {
                return false;
            }
            x = reach;
        }
    }
}

/// Coefficients read from a piecewise-polynomial file:
///
/// ```text
/// controls -1 1
/// gamma_max 2
/// fn sigma            # applies to every control
/// piece 0 1 0.2
/// fn mu 1             # only for control 1
/// piece 0 1 0.04
/// fn mu -1
/// piece 0 1 -0.04
/// fn eta
/// piece 0 0.5 1
/// piece 0.5 1 0
/// ```
///
/// `piece lo hi c0 c1 ..` is `c0 + c1 x + ..` on `[lo, hi]`. Functions are
/// `sigma`, `mu`, `alpha`, `beta`, `eta`, `g`; each must cover `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseModel {
    controls: Vec<f64>,
    pub gamma_max: Option<f64>,
    sigma: Vec<Piecewise>,
    mu: Vec<Piecewise>,
    alpha: Piecewise,
    beta: Piecewise,
    eta: Piecewise,
    g: Piecewise,
}

impl PiecewiseModel {
    fn label_index(&self, lambda: f64) -> usize {
        self.controls.iter().position(|&c| c == lambda).unwrap_or(0)
    }
}

impl Model for PiecewiseModel {
    fn controls(&self) -> &[f64] {
        &self.controls
    }
    fn sigma(&self, x: f64, lambda: f64) -> f64 {
        self.sigma[self.label_index(lambda)].eval(x)
    }
    fn mu(&self, x: f64, lambda: f64) -> f64 {
        self.mu[self.label_index(lambda)].eval(x)
    }
    fn alpha(&self, x: f64) -> f64 {
        self.alpha.eval(x)
    }
    fn beta(&self, x: f64) -> f64 {
        self.beta.eval(x)
    }
    fn eta(&self, x: f64) -> f64 {
        self.eta.eval(x)
    }
    fn g(&self, x: f64) -> f64 {
        self.g.eval(x)
    }
}

pub fn parse_coefficients(text: &str) -> Result<PiecewiseModel> {
    const NAMES: [&str; 6] = ["sigma", "mu", "alpha", "beta", "eta", "g"];
    let mut controls: Option<Vec<f64>> = None;
    let mut gamma_max = None;
    // (function, control label) -> pieces
    let mut funcs: Vec<(String, Option<f64>, Vec<Piece>)> = Vec::new();
    for (ln, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "controls" if toks.len() >= 2 => {
                let c = toks[1..].iter().map(|t| parse_value(t, ln)).collect::<Result<Vec<_>>>()?;
                controls = Some(c);
            }
            "gamma_max" if toks.len() == 2 => gamma_max = Some(parse_value(toks[1], ln)?),
            "fn" if toks.len() == 2 || toks.len() == 3 => {
                if !NAMES.contains(&toks[1]) {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("unknown function '{}'", toks[1]),
                    });
                }
                let label = toks.get(2).map(|t| parse_value(t, ln)).transpose()?;
                if label.is_some() && toks[1] != "sigma" && toks[1] != "mu" {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("'{}' does not depend on the control", toks[1]),
                    });
                }
                funcs.push((toks[1].to_string(), label, Vec::new()));
            }
            "piece" if toks.len() >= 4 => {
                let f = funcs.last_mut().ok_or(Error::Parse {
                    line: ln,
                    msg: "piece before any fn".into(),
                })?;
                let lo = parse_value(toks[1], ln)?;
                let hi = parse_value(toks[2], ln)?;
                if !(lo < hi) {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("empty piece [{lo}, {hi}]"),
                    });
                }
                let c = toks[3..].iter().map(|t| parse_value(t, ln)).collect::<Result<Vec<_>>>()?;
                f.2.push((lo, hi, c));
            }
            _ => {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("unexpected line '{l}'"),
                })
            }
        }
    }
    let controls = controls.ok_or(Error::Parse {
        line: 0,
        msg: "missing 'controls' line".into(),
    })?;
    let find = |name: &str, label: Option<f64>| -> Result<Piecewise> {
        let hit = funcs
            .iter()
            .find(|(n, l, _)| n == name && *l == label)
            .or_else(|| funcs.iter().find(|(n, l, _)| n == name && l.is_none()));
        let pieces = match hit {
            Some((_, _, p)) => p.clone(),
            None => {
                let which = label.map_or(String::new(), |l| format!(" for control {l}"));
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("function '{name}' not defined{which}"),
                });
            }
        };
        let pw = Piecewise { pieces };
        if !pw.covers_unit_interval() {
            return Err(Error::InvalidArgument(format!("function '{name}' does not cover [0, 1]")));
        }
        Ok(pw)
    };
    let sigma = controls.iter().map(|&c| find("sigma", Some(c))).collect::<Result<Vec<_>>>()?;
    let mu = controls.iter().map(|&c| find("mu", Some(c))).collect::<Result<Vec<_>>>()?;
    Ok(PiecewiseModel {
        gamma_max,
        sigma,
        mu,
        alpha: find("alpha", None)?,
        beta: find("beta", None)?,
        eta: find("eta", None)?,
        g: find("g", None)?,
        controls,
    })
}

/// Checks `α, β, g > 0` and `η >= 0` on the grid nodes.
pub fn validate_model(model: &dyn Model, grid: &Grid) -> Result<()> {
    if model.controls().is_empty() {
        return Err(Error::InvalidArgument("empty control set".into()));
    }
    for i in 0..=grid.m {
        let x = grid.x(i);
        let vals = [model.alpha(x), model.beta(x), model.g(x)];
        if vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha, beta and g must be positive at x = {x}")));
        }
        let eta = model.eta(x);
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be nonnegative at x = {x}")));
        }
        for &l in model.controls() {
            if !model.sigma(x, l).is_finite() || !model.mu(x, l).is_finite() {
                return Err(Error::NonFinite(format!("sigma or mu at x = {x}, control {l}")));
            }
        }
    }
    Ok(())
}

/// Uniform grid `x_i = i / M`, `i = 0..=M`, with `M` even.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub m: usize,
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("M must be even and >= 2, got {m}")));
        }
        Ok(Grid { m })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.m as f64
    }

    pub fn nodes(&self) -> usize {
        self.m + 1
    }

    pub fn midpoint(&self) -> usize {
        self.m / 2
    }
}

/// Coefficients of `(L u)_i` on `(u_{i-1}, u_i, u_{i+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub lower: f64,
    pub center: f64,
    pub upper: f64,
}

/// Upwind stencil: `σ²/2` times the centered second difference plus the
/// one-sided first difference chosen by the sign of `μ`.
pub fn upwind_row(model: &dyn Model, grid: &Grid, i: usize, lambda: f64) -> Result<Stencil> {
    if i == 0 || i >= grid.m {
        return Err(Error::IndexOutOfRange(format!("stencil row {i} is not interior (M = {})", grid.m)));
    }
    let x = grid.x(i);
    let dx = grid.dx();
    let s = model.sigma(x, lambda);
    let mu = model.mu(x, lambda);
    let diff = 0.5 * s * s / (dx * dx);
    let lower = diff + if mu < 0.0 { -mu / dx } else { 0.0 };
    let upper = diff + if mu >= 0.0 { mu / dx } else { 0.0 };
    Ok(Stencil {
        lower,
        center: -(lower + upper),
        upper,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Od,
    Do,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Od => "od",
            Scheme::Do => "do",
        }
    }
}

/// Assembly options shared by both schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOptions {
    /// Number of `γ` intervals for DO; `None` means `M / k_ratio`.
    pub k: Option<usize>,
    pub k_ratio: usize,
    pub gamma_max: f64,
    /// Add `Δx` to the diagonal of every interior row.
    pub regularize: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            k: None,
            k_ratio: 32,
            gamma_max: 2.0,
            regularize: false,
        }
    }
}

impl SchemeOptions {
    pub fn k_for(&self, grid: &Grid) -> usize {
        self.k.unwrap_or((grid.m / self.k_ratio.max(1)).max(1))
    }
}

/// An assembled scheme with the meaning of each policy index.
#[derive(Debug, Clone)]
pub struct SchemeProblem {
    pub scheme: Scheme,
    pub grid: Grid,
    pub problem: PolicyProblem,
    /// `(γ, λ)` for each interior policy index; `γ` is NaN for OD.
    pub policy_values: Vec<(f64, f64)>,
}

/// Order-3 OD tensor rows. Off-diagonal weights are split evenly between the
/// two index orders, and the diagonal is their running sum plus `η_i`, so a
/// row with `η_i = 0` has exactly zero dominance slack.
pub fn assemble_od(model: &dyn Model, grid: &Grid, opts: &SchemeOptions) -> Result<SchemeProblem> {
    validate_model(model, grid)?;
    let m = grid.m;
    let dx = grid.dx();
    let mut rows = Vec::with_capacity(grid.nodes());
    for i in 0..=m {
        let x = grid.x(i);
        if i == 0 || i == m {
            let g = model.g(x);
            rows.push(vec![RowChoice::new("boundary", vec![(vec![i, i], 1.0)], g * g)]);
            continue;
        }
        let rhs = 0.5 * model.beta(x).powi(2) / model.alpha(x);
        let shift = model.eta(x) + if opts.regularize { dx } else { 0.0 };
        let mut choices = Vec::with_capacity(model.controls().len());
        for &lambda in model.controls() {
            let st = upwind_row(model, grid, i, lambda)?;
            let lo = 0.5 * st.lower;
            let up = 0.5 * st.upper;
            let off = lo + lo + up + up;
            let entries = vec![
                (vec![i - 1, i], -lo),
                (vec![i, i - 1], -lo),
                (vec![i, i], off + shift),
                (vec![i, i + 1], -up),
                (vec![i + 1, i], -up),
            ];
            choices.push(RowChoice::new(fmt_label(lambda), entries, rhs));
        }
        rows.push(choices);
    }
    let policy_values = model.controls().iter().map(|&l| (f64::NAN, l)).collect();
    Ok(SchemeProblem {
        scheme: Scheme::Od,
        grid: *grid,
        problem: PolicyProblem::new(3, rows)?,
        policy_values,
    })
}

/// Uniform partition `0 = γ_0 < .. < γ_K = γ_max`.
pub fn gamma_partition(k: usize, gamma_max: f64) -> Vec<f64> {
    (0..=k).map(|j| gamma_max * j as f64 / k as f64).collect()
}

/// Order-2 DO matrix rows over `Γ × Λ`, `γ` varying slowest.
pub fn assemble_do(model: &dyn Model, grid: &Grid, opts: &SchemeOptions) -> Result<SchemeProblem> {
    validate_model(model, grid)?;
    let k = opts.k_for(grid);
    if k == 0 || !(opts.gamma_max > 0.0) {
        return Err(Error::InvalidArgument("DO needs K >= 1 and gamma_max > 0".into()));
    }
    let gammas = gamma_partition(k, opts.gamma_max);
    let m = grid.m;
    let dx = grid.dx();
    let mut rows = Vec::with_capacity(grid.nodes());
    for i in 0..=m {
        let x = grid.x(i);
        if i == 0 || i == m {
            rows.push(vec![RowChoice::new("boundary", vec![(vec![i], 1.0)], model.g(x))]);
            continue;
        }
        let (alpha, beta) = (model.alpha(x), model.beta(x));
        let shift = model.eta(x) + if opts.regularize { dx } else { 0.0 };
        let stencils = model
            .controls()
            .iter()
            .map(|&l| upwind_row(model, grid, i, l))
            .collect::<Result<Vec<_>>>()?;
        let mut choices = Vec::with_capacity(gammas.len() * stencils.len());
        for &gamma in &gammas {
            for (st, &lambda) in stencils.iter().zip(model.controls()) {
                let diag = (st.lower + st.upper) + (shift + 0.5 * alpha * gamma * gamma);
                let entries = vec![(vec![i - 1], -st.lower), (vec![i], diag), (vec![i + 1], -st.upper)];
                let label = format!("{},{}", fmt_label(gamma), fmt_label(lambda));
                choices.push(RowChoice::new(label, entries, beta * gamma));
            }
        }
        rows.push(choices);
    }
    let policy_values = gammas
        .iter()
        .flat_map(|&g| model.controls().iter().map(move |&l| (g, l)))
        .collect();
    Ok(SchemeProblem {
        scheme: Scheme::Do,
        grid: *grid,
        problem: PolicyProblem::new(2, rows)?,
        policy_values,
    })
}

fn fmt_label(v: f64) -> String {
    format!("{v}")
}

pub fn assemble(model: &dyn Model, grid: &Grid, scheme: Scheme, opts: &SchemeOptions) -> Result<SchemeProblem> {
    match scheme {
        Scheme::Od => assemble_od(model, grid, opts),
        Scheme::Do => assemble_do(model, grid, opts),
    }
}

/// Solution of one scheme at one grid level.
#[derive(Debug, Clone)]
pub struct SchemeSolution {
    pub grid: Grid,
    pub u: Vec<f64>,
    /// Optimal `γ_i`: `β_i / (α_i u_i)` for OD, the chosen label for DO. NaN on the boundary.
    pub gamma: Vec<f64>,
    /// Optimal `λ_i`; NaN on the boundary.
    pub lambda: Vec<f64>,
    pub report: BellmanReport,
}

pub fn solve_scheme(model: &dyn Model, sp: &SchemeProblem, opts: &IterationOptions) -> Result<SchemeSolution> {
    let report = policy_iteration(&sp.problem, opts)?;
    let grid = sp.grid;
    let n = grid.nodes();
    let mut gamma = vec![f64::NAN; n];
    let mut lambda = vec![f64::NAN; n];
    for i in 1..grid.m {
        let (g, l) = sp.policy_values[report.final_policy.0[i]];
        lambda[i] = l;
        gamma[i] = match sp.scheme {
            Scheme::Od => {
                let x = grid.x(i);
                model.beta(x) / (model.alpha(x) * report.u[i])
            }
            Scheme::Do => g,
        };
    }
    Ok(SchemeSolution {
        grid,
        u: report.u.clone(),
        gamma,
        lambda,
        report,
    })
}

/// Rowwise `max_λ {(L u)_i - η_i u_i + β_i² / (2 α_i u_i)}` at interior rows.
pub fn od_equation_residual(model: &dyn Model, grid: &Grid, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != grid.nodes() {
        return Err(Error::DimensionMismatch {
            expected: grid.nodes(),
            got: u.len(),
        });
    }
    (1..grid.m)
        .map(|i| {
            let x = grid.x(i);
            let src = 0.5 * model.beta(x).powi(2) / (model.alpha(x) * u[i]) - model.eta(x) * u[i];
            model.controls().iter().try_fold(f64::NEG_INFINITY, |best, &l| {
                let st = upwind_row(model, grid, i, l)?;
                let lu = st.lower * u[i - 1] + st.center * u[i] + st.upper * u[i + 1];
                Ok(best.max(lu + src))
            })
        })
        .collect()
}

/// `sup_x max(sqrt(β² / (2 α η)), g)` over `10^4` uniform samples of `[0, 1]`;
/// infinite if `η` vanishes at any sample.
pub fn stability_bound(model: &dyn Model) -> f64 {
    const SAMPLES: usize = 10_000;
    let mut bound = 0.0f64;
    for s in 0..SAMPLES {
        let x = s as f64 / (SAMPLES - 1) as f64;
        let eta = model.eta(x);
        if !(eta > 0.0) {
            return f64::INFINITY;
        }
        let r = (0.5 * model.beta(x).powi(2) / (model.alpha(x) * eta)).sqrt();
        bound = bound.max(r).max(model.g(x));
    }
    bound
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub m: usize,
    /// Number of `γ` intervals, DO only.
    pub k: Option<usize>,
    pub value: f64,
    pub rel_err: f64,
    pub ratio: Option<f64>,
    pub its: usize,
    /// Mean Newton iterations per policy solve, OD only.
    pub inner_its: Option<f64>,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub scheme: Scheme,
    pub scheme_opts: SchemeOptions,
    pub iteration: IterationOptions,
    /// Fail when a solution exceeds a finite stability bound.
    pub check_stability: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            scheme: Scheme::Od,
            scheme_opts: SchemeOptions::default(),
            iteration: IterationOptions::default(),
            check_stability: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study {
    pub rows: Vec<ExperimentRow>,
    pub solutions: Vec<SchemeSolution>,
    /// OD midpoint value at twice the finest level.
    pub reference: f64,
}

/// Doubling sequence `lo, 2 lo, .., hi`.
pub fn doubling_levels(lo: usize, hi: usize) -> Result<Vec<usize>> {
    if lo < 2 || !lo.is_multiple_of(2) || hi < lo {
        return Err(Error::InvalidArgument(format!("invalid level range {lo}:{hi}")));
    }
    let mut v = vec![lo];
    while *v.last().unwrap() < hi {
        v.push(v.last().unwrap() * 2);
    }
    if *v.last().unwrap() != hi {
        return Err(Error::InvalidArgument(format!("{hi} is not {lo} times a power of two")));
    }
    Ok(v)
}

fn check_stability(model: &dyn Model, u: &[f64]) -> Result<()> {
    let bound = stability_bound(model);
    if bound.is_finite() {
        let max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_u > bound + 1e-8 {
            return Err(Error::StabilityViolation { max_u, bound });
        }
    }
    Ok(())
}

/// Solves every level, then fills the error columns against the OD solution
/// at twice the finest level.
pub fn run_convergence_study(model: &dyn Model, levels: &[usize], opts: &StudyOptions) -> Result<Study> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    let mut solutions = Vec::with_capacity(levels.len());
    for &m in levels {
        let grid = Grid::new(m)?;
        let start = Instant::now();
        let sp = assemble(model, &grid, opts.scheme, &opts.scheme_opts)?;
        let sol = solve_scheme(model, &sp, &opts.iteration)?;
        let time = start.elapsed().as_secs_f64();
        if opts.check_stability {
            check_stability(model, &sol.u)?;
        }
        rows.push(ExperimentRow {
            m,
            k: (opts.scheme == Scheme::Do).then(|| opts.scheme_opts.k_for(&grid)),
            value: sol.u[grid.midpoint()],
            rel_err: f64::NAN,
            ratio: None,
            its: sol.report.outer_iterations,
            inner_its: (opts.scheme == Scheme::Od).then(|| sol.report.mean_inner_iterations()),
            time,
        });
        solutions.push(sol);
    }
    let finest = *levels.iter().max().unwrap();
    let ref_grid = Grid::new(2 * finest)?;
    let ref_opts = SchemeOptions {
        regularize: false,
        ..opts.scheme_opts.clone()
    };
    let ref_sp = assemble_od(model, &ref_grid, &ref_opts)?;
    let ref_sol = solve_scheme(model, &ref_sp, &opts.iteration)?;
    let reference = ref_sol.u[ref_grid.midpoint()];
    for row in rows.iter_mut() {
        row.rel_err = ((row.value - reference) / reference).abs();
    }
    for j in 2..rows.len() {
        let d1 = rows[j - 1].value - rows[j - 2].value;
        let d2 = rows[j].value - rows[j - 1].value;
        rows[j].ratio = Some(d1 / d2);
    }
    Ok(Study {
        rows,
        solutions,
        reference,
    })
}

pub const TABLE_HEADER: &str = "M,K,value,rel_err,ratio,its,inner_its,time";

/// CSV with [`TABLE_HEADER`]; undefined cells are left empty.
pub fn format_table(rows: &[ExperimentRow], digits: usize) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for r in rows {
        let k = r.k.map_or(String::new(), |k| k.to_string());
        let ratio = r.ratio.map_or(String::new(), |v| fmt_float(v, digits));
        let inner = r.inner_its.map_or(String::new(), |v| fmt_float(v, digits));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.m,
            k,
            fmt_float(r.value, digits),
            fmt_float(r.rel_err, digits),
            ratio,
            r.its,
            inner,
            fmt_float(r.time, 3)
        );
    }
    s
}

fn cell(v: f64, digits: usize) -> String {
    if v.is_finite() {
        fmt_float(v, digits)
    } else {
        String::new()
    }
}

/// CSV `x,u,gamma,lambda` with one line per node.
pub fn format_solution_csv(sol: &SchemeSolution, digits: usize) -> String {
    let mut s = String::from("x,u,gamma,lambda\n");
    for i in 0..sol.grid.nodes() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_float(sol.grid.x(i), digits),
            fmt_float(sol.u[i], digits),
            cell(sol.gamma[i], digits),
            cell(sol.lambda[i], digits)
        );
    }
    s
}

/// Three stacked panels: `u`, `γ` and `λ` against `x`.
pub fn format_solution_svg(sol: &SchemeSolution) -> String {
    const W: f64 = 640.0;
    const H: f64 = 200.0;
    const PAD: f64 = 40.0;
    let xs: Vec<f64> = (0..sol.grid.nodes()).map(|i| sol.grid.x(i)).collect();
    let panels: [(&str, &[f64]); 3] = [("u", &sol.u), ("gamma", &sol.gamma), ("lambda", &sol.lambda)];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" font-family="sans-serif" font-size="12">"#,
        3.0 * H
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, (name, ys)) in panels.iter().enumerate() {
        let top = p as f64 * H;
        let finite: Vec<f64> = ys.iter().copied().filter(|v| v.is_finite()).collect();
        let (mut lo, mut hi) = finite
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let px = |x: f64| PAD + x * (W - 2.0 * PAD);
        let py = |y: f64| top + H - PAD / 2.0 - (y - lo) / (hi - lo) * (H - 1.5 * PAD);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
            top + PAD,
            W - 2.0 * PAD,
            H - 1.5 * PAD
        );
        let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{name}  [{lo:.4}, {hi:.4}]</text>"#, top + PAD - 6.0);
        let mut seg = String::new();
        for (x, y) in xs.iter().zip(ys.iter()) {
            if y.is_finite() {
                let _ = write!(seg, "{:.2},{:.2} ", px(*x), py(*y));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            seg.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `solution_M<M>.csv` and `solution_M<M>.svg` into `dir`.
pub fn emit_plots(sol: &SchemeSolution, dir: &Path, digits: usize) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("solution_M{}.csv", sol.grid.m));
    let svg = dir.join(format!("solution_M{}.svg", sol.grid.m));
    write_atomic(&csv, format_solution_csv(sol, digits).as_bytes())?;
    write_atomic(&svg, format_solution_svg(sol).as_bytes())?;
    Ok((csv, svg))
}

pub fn parse_levels(spec: &str) -> Result<Vec<usize>> {
    let err = || Error::InvalidArgument(format!("invalid levels '{spec}', expected LO:HI or a comma list"));
    if let Some((lo, hi)) = spec.split_once(':') {
        let lo = parse_num(lo.trim(), 0, "level").map_err(|_| err())?;
        let hi = parse_num(hi.trim(), 0, "level").map_err(|_| err())?;
        return doubling_levels(lo, hi);
    }
    let v = spec
        .split(',')
        .map(|t| parse_num::<usize>(t.trim(), 0, "level").map_err(|_| err()))
        .collect::<Result<Vec<_>>>()?;
    for &m in &v {
        Grid::new(m)?;
    }
    Ok(v)
}
