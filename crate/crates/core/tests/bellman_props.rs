use std::collections::HashSet;

use proptest::prelude::*;

use tensor_bellman::bellman::{self, IterationOptions, Policy, PolicyProblem, RowChoice};
use tensor_bellman::cli;
use tensor_bellman::matrix;
use tensor_bellman::random;
use tensor_bellman::solve::norm_inf;
use tensor_bellman::{Error, SparseTensor};

/// Rowwise argmin of `A(P) u - b(P)` over the dense order-2 data, ties to the
/// smallest label.
fn howard_pivot(p: &PolicyProblem, u: &[f64]) -> Policy {
    let local = p.local_residuals(u).unwrap();
    Policy(
        local
            .iter()
            .map(|r| (0..r.len()).fold(0, |best, k| if r[k] < r[best] { k } else { best }))
            .collect(),
    )
}

/// Classical policy iteration for matrices.
fn howard(p: &PolicyProblem, tol: f64) -> Vec<Policy> {
    let n = p.dim();
    let mut u = vec![0.0; n];
    let mut seq = Vec::new();
    loop {
        let pol = howard_pivot(p, &u);
        let (a, b) = p.assemble(&pol).unwrap();
        let mut dense = vec![vec![0.0; n]; n];
        for (idx, v) in a.entries() {
            dense[idx[0]][idx[1]] += v;
        }
        u = matrix::dense_lu_solve(dense, &b).unwrap();
        seq.push(pol);
        if norm_inf(&p.bellman_residual(&u).unwrap()) <= tol || seq.len() > 64 {
            return seq;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_enumeration(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=4) {
        let mut rng = random::rng(seed);
        let p = random::policy_problem(&mut rng, m, n, 4, 64);
        let rep = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap();
        let best = cli::brute_force(&p).unwrap();
        let scale = norm_inf(&best).max(1.0);
        prop_assert!(rep.u.iter().zip(&best).all(|(x, y)| (x - y).abs() <= 1e-8 * scale));
    }

    #[test]
    fn certificate_and_bounds(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=4) {
        let mut rng = random::rng(seed);
        let p = random::policy_problem(&mut rng, m, n, 4, 64);
        let rep = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap();
        prop_assert!(rep.residual_inf <= 1e-8 * (1.0 + p.max_rhs()));
        prop_assert!(rep.u.iter().all(|&v| v > 0.0));
        let (_, argmin) = p.bellman_residual_with_policy(&rep.u).unwrap();
        let local = p.local_residuals(&rep.u).unwrap();
        for (i, r) in local.iter().enumerate() {
            prop_assert!((r[rep.final_policy.0[i]] - r[argmin.0[i]]).abs() <= 1e-8 * (1.0 + p.max_rhs()));
        }
        prop_assert!(rep.visited_policy_count as u128 <= p.policy_count().unwrap());
        prop_assert_eq!(rep.visited_policy_count, rep.outer_iterations);
        let distinct: HashSet<_> = rep.trace.iter().map(|t| t.policy.clone()).collect();
        prop_assert_eq!(distinct.len(), rep.trace.len());
        for t in &rep.trace {
            prop_assert!(bellman::verify_domination(&p, &rep.u, &t.u, &t.policy));
        }
    }

    #[test]
    fn order_two_follows_classical_iteration(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = random::rng(seed);
        let p = random::policy_problem(&mut rng, 2, n, 4, 512);
        let tol = 1e-8 * (1.0 + p.max_rhs());
        let rep = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap();
        let seq: Vec<Policy> = rep.trace.iter().map(|t| t.policy.clone()).collect();
        prop_assert_eq!(seq, howard(&p, tol));
    }
}

#[test]
fn single_policy_reduces_to_solve() {
    let a = SparseTensor::identity(3, 2).unwrap();
    let p = PolicyProblem::single(&a, &[4.0, 9.0]).unwrap();
    let rep = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap();
    assert_eq!(rep.outer_iterations, 1);
    assert!((rep.u[0] - 2.0).abs() < 1e-12 && (rep.u[1] - 3.0).abs() < 1e-12);
}

#[test]
fn corrupted_iterate_is_detected() {
    let mut rng = random::rng(7);
    let p = random::policy_problem(&mut rng, 3, 3, 3, 27);
    let rep = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap();
    let mut bad = rep.u.clone();
    bad[1] += 1.0;
    assert!(bellman::verify_domination(&p, &rep.u, &rep.u, &rep.final_policy));
    assert!(!bellman::verify_domination(&p, &rep.u, &bad, &rep.final_policy));
}

#[test]
fn unreachable_tolerance_exhausts_policies() {
    let mut rng = random::rng(11);
    let p = random::policy_problem(&mut rng, 3, 3, 2, 8);
    let opts = IterationOptions { outer_tol: Some(1e-300), ..IterationOptions::default() };
    assert!(matches!(bellman::policy_iteration(&p, &opts), Err(Error::NoSolutionFound)));
}

#[test]
fn non_strong_m_policy_is_rejected() {
    let row = |i: usize, off: usize| {
        vec![RowChoice::new("a", vec![(vec![i, i], 1.0), (vec![off, off], -1.0)], 1.0)]
    };
    let p = PolicyProblem::new(3, vec![row(0, 1), row(1, 0)]).unwrap();
    let err = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "not_strong_m");
}

#[test]
fn text_round_trip() {
    let mut rng = random::rng(3);
    let p = random::policy_problem(&mut rng, 3, 3, 3, 27);
    let q = bellman::parse_problem(&p.to_string()).unwrap();
    assert_eq!(p.dim(), q.dim());
    for i in 0..p.dim() {
        assert_eq!(p.choices(i).len(), q.choices(i).len());
    }
    let a = bellman::policy_iteration(&p, &IterationOptions::default()).unwrap();
    let b = bellman::policy_iteration(&q, &IterationOptions::default()).unwrap();
    assert_eq!(a.u, b.u);
}
