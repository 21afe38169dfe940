//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code.
//!
//! Exit codes: 0 success; `classify` returns 2 for a non-strong-M verdict and
//! 3 when undecidable; errors map through [`Error::exit_code`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bellman::{self, IterationOptions};
use crate::control::{self, Model, Param1, Param2, Scheme, SchemeOptions, StudyOptions};
use crate::error::{Error, Result};
use crate::io::{self, fmt_float};
use crate::solve::{self, Method, SolveOptions};
use crate::structure::{self, ClassifyOptions, StrongM};

/// Environment variable holding the number of significant digits in output files.
pub const DIGITS_ENV: &str = "TENSOR_BELLMAN_DIGITS";

#[derive(Debug, Parser)]
#[command(name = "tensor-bellman", version, about = "Tensor Bellman equations: classify, solve, policy iteration, control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Newton,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Od,
    Do,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural report for a tensor file (exit 0 strong M, 2 not, 3 undecidable).
    Classify {
        tensor: PathBuf,
        /// Slack tolerance for the dominance test.
        #[arg(long, default_value_t = 0.0)]
        slack_eps: f64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve A x^{m-1} = b for the positive solution.
    Solve {
        tensor: PathBuf,
        rhs: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Newton)]
        method: MethodArg,
        /// Cross-check against the other method; fail unless they agree to 1e-8.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        abs_tol: Option<f64>,
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Skip the strong M-tensor check.
        #[arg(long)]
        no_check: bool,
        /// Solution vector file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON solve report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Policy iteration on a problem file.
    Bellman {
        problem: PathBuf,
        #[arg(long)]
        outer_tol: Option<f64>,
        #[arg(long)]
        abs_tol: Option<f64>,
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Start each policy solve from the previous iterate.
        #[arg(long)]
        warm_start: bool,
        /// Print the per-iteration residual trace.
        #[arg(short, long)]
        verbose: bool,
        /// Solution vector file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Final policy, one `row label` line per row.
        #[arg(long)]
        policy_out: Option<PathBuf>,
        /// JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Convergence study for the control problem.
    Experiment {
        #[arg(long, value_enum, default_value_t = SchemeArg::Od)]
        scheme: SchemeArg,
        /// Built-in coefficient set (1 or 2).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        param: u8,
        /// Piecewise-polynomial coefficient file; overrides --param.
        #[arg(long)]
        coeffs: Option<PathBuf>,
        /// `LO:HI` doubling range or a comma list of even M.
        #[arg(long, default_value = "32:1024")]
        levels: String,
        #[arg(long)]
        gamma_max: Option<f64>,
        #[arg(long, default_value_t = 32)]
        k_ratio: usize,
        /// Add dx to every interior diagonal.
        #[arg(long)]
        regularize: bool,
        #[arg(long)]
        outer_tol: Option<f64>,
        #[arg(long)]
        warm_start: bool,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Randomized consistency checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances per check.
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
}

/// Significant digits from [`DIGITS_ENV`], default 17.
pub fn output_digits() -> Result<usize> {
    match std::env::var(DIGITS_ENV) {
        Err(_) => Ok(io::EXACT_DIGITS),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(d) if (1..=17).contains(&d) => Ok(d),
            _ => Err(Error::InvalidArgument(format!("{DIGITS_ENV} must be an integer in 1..=17, got '{v}'"))),
        },
    }
}

fn check_tol(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(t) if !(t >= 0.0) || !t.is_finite() => Err(Error::InvalidArgument(format!("{name} must be a nonnegative number"))),
        _ => Ok(()),
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn solve_options(abs_tol: Option<f64>, rel_tol: Option<f64>) -> Result<SolveOptions> {
    check_tol("--abs-tol", abs_tol)?;
    check_tol("--rel-tol", rel_tol)?;
    let mut o = SolveOptions::default();
    if let Some(t) = abs_tol {
        o.abs_tol = t;
    }
    if let Some(t) = rel_tol {
        o.rel_tol = t;
    }
    Ok(o)
}

/// Runs one command. Messages go to `out`; errors go to `err` as
/// `error <message>` followed by `kind: <kind>`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error {e}");
            let _ = writeln!(err, "kind: {}", e.kind());
            e.exit_code()
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    let digits = output_digits()?;
    match cmd {
        Command::Classify { tensor, slack_eps, out: path } => cmd_classify(&tensor, slack_eps, path.as_deref(), out),
        Command::Solve {
            tensor,
            rhs,
            method,
            verify,
            abs_tol,
            rel_tol,
            max_iters,
            no_check,
            out: path,
            report,
        } => {
            let mut opts = solve_options(abs_tol, rel_tol)?;
            opts.method = match method {
                MethodArg::Newton => Method::Newton,
                MethodArg::FixedPoint => Method::FixedPoint,
            };
            if opts.method == Method::FixedPoint {
                opts.max_iters = SolveOptions::fixed_point().max_iters;
            }
            if let Some(k) = max_iters {
                opts.max_iters = k;
            }
            opts.check_structure = !no_check;
            cmd_solve(&tensor, &rhs, &opts, verify, path.as_deref(), report.as_deref(), digits, out)
        }
        Command::Bellman {
            problem,
            outer_tol,
            abs_tol,
            rel_tol,
            warm_start,
            verbose,
            out: path,
            policy_out,
            report,
        } => {
            check_tol("--outer-tol", outer_tol)?;
            let opts = IterationOptions {
                solve: solve_options(abs_tol, rel_tol)?,
                outer_tol,
                warm_start,
                ..IterationOptions::default()
            };
            cmd_bellman(&problem, &opts, verbose, path.as_deref(), policy_out.as_deref(), report.as_deref(), digits, out)
        }
        Command::Experiment {
            scheme,
            param,
            coeffs,
            levels,
            gamma_max,
            k_ratio,
            regularize,
            outer_tol,
            warm_start,
            out: dir,
        } => {
            check_tol("--outer-tol", outer_tol)?;
            let file_model = coeffs.as_deref().map(|p| control::parse_coefficients(&io::read_text(p)?)).transpose()?;
            let gamma_max = gamma_max.or(file_model.as_ref().and_then(|m| m.gamma_max)).unwrap_or(2.0);
            if !(gamma_max > 0.0) || !gamma_max.is_finite() || k_ratio == 0 {
                return Err(Error::InvalidArgument("--gamma-max must be positive and --k-ratio at least 1".into()));
            }
            let model: Box<dyn Model> = match file_model {
                Some(m) => Box::new(m),
                None if param == 1 => Box::new(Param1),
                None => Box::new(Param2),
            };
            let opts = StudyOptions {
                scheme: match scheme {
                    SchemeArg::Od => Scheme::Od,
                    SchemeArg::Do => Scheme::Do,
                },
                scheme_opts: SchemeOptions {
                    k: None,
                    k_ratio,
                    gamma_max,
                    regularize,
                },
                iteration: IterationOptions {
                    outer_tol,
                    warm_start,
                    ..IterationOptions::default()
                },
                check_stability: true,
            };
            let levels = control::parse_levels(&levels)?;
            cmd_experiment(model.as_ref(), &levels, &opts, &dir, digits, out)
        }
        Command::Selftest { seed, count } => cmd_selftest(seed, count, out),
    }
}

pub fn cmd_classify(path: &Path, slack_eps: f64, report: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    check_tol("--slack-eps", Some(slack_eps))?;
    let a = io::read_tensor(path)?;
    let rep = structure::classify_with(&a, &ClassifyOptions { slack_eps })?;
    emit(out, report, &pretty(&rep.to_json()))?;
    Ok(match rep.strong_m_decision {
        StrongM::StrongM => 0,
        StrongM::NotStrongM => 2,
        StrongM::Undecidable => 3,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_solve(
    tensor: &Path,
    rhs: &Path,
    opts: &SolveOptions,
    verify: bool,
    path: Option<&Path>,
    report: Option<&Path>,
    digits: usize,
    out: &mut dyn Write,
) -> Result<i32> {
    let a = io::read_tensor(tensor)?;
    let b = io::read_vec(rhs)?;
    let sol = solve::solve(&a, &b, opts)?;
    let mut agreement = None;
    if verify {
        let other = match opts.method {
            Method::Newton => SolveOptions {
                method: Method::FixedPoint,
                max_iters: SolveOptions::fixed_point().max_iters,
                ..opts.clone()
            },
            Method::FixedPoint => SolveOptions {
                method: Method::Newton,
                max_iters: SolveOptions::default().max_iters,
                ..opts.clone()
            },
        };
        let alt = solve::solve(&a, &b, &other)?;
        let gap = sol.x.iter().zip(&alt.x).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if !(gap <= 1e-8) {
            return Err(Error::VerificationFailed(format!("newton and fixed_point differ by {gap:e}")));
        }
        agreement = Some(gap);
    }
    let rep = json!({
        "method": match opts.method { Method::Newton => "newton", Method::FixedPoint => "fixed_point" },
        "iterations": sol.iterations,
        "residual_inf": sol.residual_inf,
        "nonnegative_mode": sol.nonnegative_mode,
        "history": sol.history,
        "verify_max_difference": agreement,
    });
    let text = io::format_vec_digits(&sol.x, digits);
    if let Some(r) = report {
        io::write_atomic(r, pretty(&rep).as_bytes())?;
    }
    emit(out, path, &text)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bellman(
    problem: &Path,
    opts: &IterationOptions,
    verbose: bool,
    path: Option<&Path>,
    policy_out: Option<&Path>,
    report: Option<&Path>,
    digits: usize,
    out: &mut dyn Write,
) -> Result<i32> {
    let p = bellman::parse_problem(&io::read_text(problem)?)?;
    let rep = bellman::policy_iteration(&p, opts)?;
    if verbose {
        for (k, it) in rep.trace.iter().enumerate() {
            let _ = writeln!(
                out,
                "iter {} residual {} change {} inner {}",
                k + 1,
                fmt_float(it.residual_inf, 6),
                fmt_float(it.change_inf, 6),
                it.inner_iterations
            );
        }
    }
    let labels = p.labels(&rep.final_policy);
    let policy_text: String = labels.iter().enumerate().map(|(i, l)| format!("{} {l}\n", i + 1)).collect();
    let json_rep = json!({
        "outer_iterations": rep.outer_iterations,
        "inner_iteration_counts": rep.inner_iteration_counts,
        "residual_inf": rep.residual_inf,
        "visited_policy_count": rep.visited_policy_count,
        "final_policy": labels,
    });
    if let Some(pp) = policy_out {
        io::write_atomic(pp, policy_text.as_bytes())?;
    }
    if let Some(r) = report {
        io::write_atomic(r, pretty(&json_rep).as_bytes())?;
    }
    emit(out, path, &io::format_vec_digits(&rep.u, digits))?;
    Ok(0)
}

pub fn cmd_experiment(
    model: &dyn Model,
    levels: &[usize],
    opts: &StudyOptions,
    dir: &Path,
    digits: usize,
    out: &mut dyn Write,
) -> Result<i32> {
    let study = control::run_convergence_study(model, levels, opts)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = control::format_table(&study.rows, digits);
    for sol in &study.solutions {
        control::emit_plots(sol, dir, digits)?;
    }
    io::write_atomic(&dir.join("table.csv"), table.as_bytes())?;
    let _ = out.write_all(table.as_bytes());
    Ok(0)
}

/// One named randomized check.
pub struct SelftestResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Randomized consistency checks over `count` instances each.
pub fn selftest(seed: u64, count: usize) -> Vec<SelftestResult> {
    use crate::random;
    let mut results = Vec::new();
    let mut rng = random::rng(seed);

    // newton vs fixed point
    let mut worst = 0.0f64;
    let mut failures = 0;
    for k in 0..count {
        let order = 2 + k % 3;
        let n = 1 + k % 5;
        let a = random::sdd_m_tensor(&mut rng, order, n);
        let b = random::positive_vec(&mut rng, n, 0.1, 2.0);
        match (
            solve::solve_newton(&a, &b, &SolveOptions::default()),
            solve::solve_fixed_point(&a, &b, &SolveOptions::fixed_point()),
        ) {
            (Ok(x), Ok(y)) => worst = worst.max(x.x.iter().zip(&y.x).fold(0.0, |m, (p, q)| m.max((p - q).abs()))),
            _ => failures += 1,
        }
    }
    results.push(SelftestResult {
        name: "newton_matches_fixed_point",
        passed: failures == 0 && worst <= 1e-8,
        detail: format!("max difference {worst:e}, failures {failures}"),
    });

    // strong M decision certificates
    let mut bad = 0;
    for k in 0..count {
        let n = 1 + k % 6;
        let a = random::wdd_z_tensor(&mut rng, 3, n);
        let ok = match structure::decide_strong_m(&a) {
            Ok(d) => match d.verdict {
                StrongM::NotStrongM => d.zero_eigvec.is_some_and(|z| {
                    let scale = solve::norm_inf(&z).max(1.0).powi(2);
                    a.contract(&z).map(|r| solve::norm_inf(&r) <= 1e-10 * scale).unwrap_or(false)
                }),
                StrongM::StrongM => solve::solve_newton(&a, &vec![1.0; n], &SolveOptions::default())
                    .map(|s| s.residual_inf <= 1e-8)
                    .unwrap_or(false),
                StrongM::Undecidable => false,
            },
            Err(_) => false,
        };
        if !ok {
            bad += 1;
        }
    }
    results.push(SelftestResult {
        name: "strong_m_certificates",
        passed: bad == 0,
        detail: format!("{bad} of {count} failed"),
    });

    // policy iteration vs enumeration
    let mut bad = 0;
    for k in 0..count {
        let order = 2 + k % 2;
        let n = 1 + k % 4;
        let p = random::policy_problem(&mut rng, order, n, 3, 64);
        let ok = bellman::policy_iteration(&p, &IterationOptions::default())
            .ok()
            .zip(brute_force(&p))
            .is_some_and(|(rep, best)| rep.u.iter().zip(&best).all(|(x, y)| (x - y).abs() <= 1e-8));
        if !ok {
            bad += 1;
        }
    }
    results.push(SelftestResult {
        name: "policy_iteration_matches_enumeration",
        passed: bad == 0,
        detail: format!("{bad} of {count} failed"),
    });
    results
}

/// Solution of the policy with zero Bellman residual, found by enumeration.
pub fn brute_force(p: &bellman::PolicyProblem) -> Option<Vec<f64>> {
    let n = p.dim();
    let sizes: Vec<usize> = (0..n).map(|i| p.choices(i).len()).collect();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let pol = bellman::Policy(idx.clone());
        let (a, b) = p.assemble(&pol).ok()?;
        let x = solve::solve_newton(&a, &b, &SolveOptions::default()).ok()?.x;
        let r = solve::norm_inf(&p.bellman_residual(&x).ok()?);
        if best.as_ref().is_none_or(|(br, _)| r < *br) {
            best = Some((r, x));
        }
        let mut i = 0;
        loop {
            if i == n {
                return best.map(|(_, x)| x);
            }
            idx[i] += 1;
            if idx[i] < sizes[i] {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

fn cmd_selftest(seed: u64, count: usize, out: &mut dyn Write) -> Result<i32> {
    let results = selftest(seed, count);
    let mut all = true;
    for r in &results {
        all &= r.passed;
        let _ = writeln!(out, "{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if all {
        Ok(0)
    } else {
        Err(Error::VerificationFailed("selftest failures".into()))
    }
}
