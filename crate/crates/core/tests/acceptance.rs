use std::process::ExitCode;

use rand::Rng;

use tensor_bellman::bellman::{self, IterationOptions, Policy};
use tensor_bellman::cli;
use tensor_bellman::control::{self, Grid, Model, Param1, Param2, Scheme, SchemeOptions, Study, StudyOptions};
use tensor_bellman::random;
use tensor_bellman::solve::{self, norm_inf, SolveOptions};
use tensor_bellman::structure::{self, StrongM};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn study(model: &dyn Model, scheme: Scheme, lo: usize, hi: usize) -> Study {
    let opts = StudyOptions {
        scheme,
        ..StudyOptions::default()
    };
    let levels = control::doubling_levels(lo, hi).unwrap();
    control::run_convergence_study(model, &levels, &opts).unwrap()
}

fn values_within(s: &Study, expected: &[f64], tol: f64) -> (bool, f64) {
    let worst = s.rows.iter().zip(expected).fold(0.0f64, |m, (r, e)| m.max((r.value - e).abs()));
    (s.rows.len() == expected.len() && worst <= tol, worst)
}

fn its_range(s: &Study) -> (usize, usize) {
    let its = s.rows.iter().map(|r| r.its);
    (its.clone().min().unwrap(), its.max().unwrap())
}

fn table_1a(s: &Study) -> Outcome {
    let expected = [2.8093, 2.8278, 2.8367, 2.8411, 2.8433, 2.8444];
    let (values_ok, worst) = values_within(s, &expected, 5e-4);
    let ratios: Vec<f64> = s.rows.iter().filter(|r| r.m >= 128).filter_map(|r| r.ratio).collect();
    let ratios_ok = ratios.len() == 4 && ratios.iter().all(|r| (1.9..=2.15).contains(r));
    let (lo, hi) = its_range(s);
    let inner: Vec<f64> = s.rows.iter().filter_map(|r| r.inner_its).collect();
    let inner_ok = inner.iter().all(|v| (6.0..=8.0).contains(v));
    outcome(
        values_ok && ratios_ok && lo >= 4 && hi <= 6 && inner_ok,
        format!("max value error {worst:.1e}, ratios {ratios:.3?}, its {lo}..{hi}, inner its {inner:.2?}"),
    )
}

fn table_1b(s: &Study) -> Outcome {
    let expected = [1.1783, 1.9179, 2.7161, 2.7825, 2.8306, 2.8421];
    let (values_ok, worst) = values_within(s, &expected, 5e-3);
    let (lo, hi) = its_range(s);
    outcome(
        values_ok && lo >= 5 && hi <= 9,
        format!("max value error {worst:.1e}, its {lo}..{hi}"),
    )
}

fn table_2a(s: &Study) -> Outcome {
    let expected = [3.0703, 3.3567, 3.5114, 3.5917, 3.6327, 3.6534, 3.6638];
    let (values_ok, worst) = values_within(s, &expected, 5e-4);
    let (lo, hi) = its_range(s);
    let last = s.rows.last().and_then(|r| r.ratio).unwrap_or(f64::NAN);
    outcome(
        values_ok && lo >= 2 && hi <= 4 && (1.9..=2.1).contains(&last),
        format!("max value error {worst:.1e}, its {lo}..{hi}, finest ratio {last:.3}"),
    )
}

fn param2_structure() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut m = 32;
    while m <= 2048 {
        let grid = Grid::new(m).unwrap();
        let sp = control::assemble_od(&Param2, &grid, &SchemeOptions::default()).unwrap();
        let p = &sp.problem;
        let sol = control::solve_scheme(&Param2, &sp, &IterationOptions::default()).unwrap();
        let mut policies = vec![sol.report.final_policy.clone()];
        for k in 0..2 {
            policies.push(Policy((0..p.dim()).map(|i| k.min(p.choices(i).len() - 1)).collect()));
        }
        for pol in policies {
            let (a, _) = p.assemble(&pol).unwrap();
            let r = structure::classify(&a).unwrap();
            checked += 1;
            let ok = r.is_wdd && !r.is_sdd && !r.is_weakly_irreducible && r.is_wcdd && r.strong_m_decision == StrongM::StrongM;
            if !ok {
                bad.push(m);
            }
        }
        m *= 2;
    }
    outcome(bad.is_empty(), format!("{checked} tensors over M = 32..2048, failures at M {bad:?}"))
}

fn wdd_equivalence() -> Outcome {
    let mut rng = random::rng(101);
    let (mut strong, mut not_strong, mut failures) = (0, 0, 0);
    for k in 0..600 {
        let n = 1 + k % 6;
        let a = random::wdd_z_tensor(&mut rng, 3, n);
        let d = structure::decide_strong_m(&a).unwrap();
        let ok = match d.verdict {
            StrongM::NotStrongM => {
                not_strong += 1;
                let z = d.zero_eigvec.unwrap();
                let bound = 1e-10 * norm_inf(&z).max(1.0).powi(2);
                z.iter().all(|&v| v >= 0.0) && norm_inf(&z) > 0.0 && norm_inf(&a.contract(&z).unwrap()) <= bound
            }
            StrongM::StrongM => {
                strong += 1;
                solve::solve(&a, &vec![1.0; n], &SolveOptions::default())
                    .map(|s| s.residual_inf <= 1e-8 && s.x.iter().all(|&v| v > 0.0))
                    .unwrap_or(false)
            }
            StrongM::Undecidable => false,
        };
        failures += usize::from(!ok);
    }
    outcome(
        failures == 0 && strong > 0 && not_strong > 0,
        format!("600 tensors: {strong} StrongM, {not_strong} NotStrongM, {failures} failures"),
    )
}

fn solver_equivalence() -> Outcome {
    let mut rng = random::rng(202);
    let (mut worst, mut mono_violations, mut failures) = (0.0f64, 0, 0);
    for k in 0..240 {
        let order = 2 + k % 3;
        let n = 1 + (k / 3) % 5;
        let a = random::sdd_m_tensor(&mut rng, order, n);
        let b = random::positive_vec(&mut rng, n, 0.1, 2.0);
        let bump: Vec<f64> = b.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
        let newton = solve::solve_newton(&a, &b, &SolveOptions::default());
        let fixed = solve::solve_fixed_point(&a, &b, &SolveOptions::fixed_point());
        let bumped = solve::solve_newton(&a, &bump, &SolveOptions::default());
        match (newton, fixed, bumped) {
            (Ok(x), Ok(y), Ok(z)) => {
                worst = worst.max(x.x.iter().zip(&y.x).fold(0.0, |m, (p, q)| m.max((p - q).abs())));
                if x.x.iter().zip(&z.x).any(|(p, q)| *q < p - 1e-10) {
                    mono_violations += 1;
                }
            }
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && mono_violations == 0 && worst <= 1e-8,
        format!("240 tensors: max difference {worst:.1e}, monotonicity violations {mono_violations}, solver failures {failures}"),
    )
}

fn policy_equivalence() -> Outcome {
    let mut rng = random::rng(303);
    let (mut worst, mut dom_failures, mut failures) = (0.0f64, 0, 0);
    for k in 0..120 {
        let order = 2 + k % 3;
        let n = 1 + (k / 3) % 4;
        let p = random::policy_problem(&mut rng, order, n, 4, 64);
        match (bellman::policy_iteration(&p, &IterationOptions::default()), cli::brute_force(&p)) {
            (Ok(rep), Some(best)) => {
                worst = worst.max(rep.u.iter().zip(&best).fold(0.0, |m, (x, y)| m.max((x - y).abs())));
                dom_failures += rep
                    .trace
                    .iter()
                    .filter(|t| !bellman::verify_domination(&p, &rep.u, &t.u, &t.policy))
                    .count();
            }
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && dom_failures == 0 && worst <= 1e-8,
        format!("120 problems: max difference {worst:.1e}, domination failures {dom_failures}, run failures {failures}"),
    )
}

fn embedding() -> Outcome {
    let mut rng = random::rng(404);
    let (mut worst, mut classified, mut failures) = (0.0f64, 0, 0);
    for k in 0..150 {
        let m = 3 + k % 2;
        let n = 1 + (k / 2) % 4;
        let a = random::sdd_m_tensor(&mut rng, m, n);
        let lower: Vec<_> = (2..m).map(|p| random::nonneg_tensor(&mut rng, p, n, 2 * n)).collect();
        let emb = a.embed_lower_order(&lower).unwrap();
        let x = random::positive_vec(&mut rng, n, 0.0, 2.0);
        let mut x1 = x.clone();
        x1.push(1.0);
        let lhs = emb.contract(&x1).unwrap();
        let mut rhs = a.contract(&x).unwrap();
        for b in &lower {
            for (r, v) in rhs.iter_mut().zip(b.contract(&x).unwrap()) {
                *r -= v;
            }
        }
        rhs.push(1.0);
        worst = worst.max(lhs.iter().zip(&rhs).fold(0.0, |m, (l, r)| m.max((l - r).abs() / (1.0 + r.abs()))));
        let r = structure::classify(&emb).unwrap();
        if r.is_z && r.is_wcdd {
            classified += 1;
            failures += usize::from(r.strong_m_decision != StrongM::StrongM);
        }
    }
    outcome(
        worst <= 1e-12 && failures == 0,
        format!("150 instances: max identity error {worst:.1e}, {classified} w.c.d.d. embeddings, {failures} not StrongM"),
    )
}

fn stability(s: &Study) -> Outcome {
    let bound = 50f64.sqrt();
    let max_u = s.solutions.iter().flat_map(|sol| sol.u.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let computed = control::stability_bound(&Param1);
    outcome(
        max_u <= bound + 1e-8 && (computed - bound).abs() <= 1e-9,
        format!("max u {max_u:.4} against bound {computed:.4}"),
    )
}

fn jacobian() -> Outcome {
    let mut rng = random::rng(505);
    let mut worst = 0.0f64;
    let h = 1e-5;
    for k in 0..150 {
        let m = 2 + k % 3;
        let n = 1 + (k / 3) % 5;
        let a = random::general_tensor(&mut rng, m, n, 4 * n);
        let x = random::positive_vec(&mut rng, n, 0.2, 2.0);
        let j = a.jacobian(&x).unwrap();
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let fp = a.contract(&xp).unwrap();
            let fm = a.contract(&xm).unwrap();
            for r in 0..n {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let exact = j.get(r, c);
                worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
            }
        }
    }
    outcome(worst <= 1e-6, format!("150 tensors: max relative difference {worst:.1e}"))
}

fn timing(od: &Study, dd: &Study) -> Outcome {
    let at = |s: &Study| s.rows.iter().find(|r| r.m == 1024).map(|r| r.time).unwrap_or(f64::NAN);
    let (t_od, t_do) = (at(od), at(dd));
    outcome(t_od <= t_do, format!("M = 1024: OD {t_od:.3} s, DO {t_do:.3} s"))
}

fn main() -> ExitCode {
    let t1a = study(&Param1, Scheme::Od, 32, 1024);
    let t1b = study(&Param1, Scheme::Do, 32, 1024);
    let t2a = study(&Param2, Scheme::Od, 32, 2048);

    let results = [
        ("1 OD convergence table, first coefficient set", table_1a(&t1a)),
        ("2 DO convergence table, first coefficient set", table_1b(&t1b)),
        ("3 OD convergence table, second coefficient set", table_2a(&t2a)),
        ("4 second coefficient set tensor structure", param2_structure()),
        ("5 strong M verdicts and certificates", wdd_equivalence()),
        ("6 newton and fixed point agreement", solver_equivalence()),
        ("7 policy iteration against enumeration", policy_equivalence()),
        ("8 lower-order embedding", embedding()),
        ("9 stability bound", stability(&t1a)),
        ("10 jacobian finite differences", jacobian()),
        ("timing OD not slower than DO", timing(&t1a, &t1b)),
    ];
    let mut all = true;
    for (name, r) in &results {
        all &= r.passed;
        println!("{} criterion {name}: {}", if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
