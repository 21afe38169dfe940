use proptest::prelude::*;
use rand::Rng;

use tensor_bellman::random;
use tensor_bellman::structure;
use tensor_bellman::SparseTensor;

/// Brute force over all `n^{m-1}` trailing tuples.
fn dense_contract(a: &SparseTensor, x: &[f64]) -> Vec<f64> {
    let (m, n) = (a.order(), a.dim());
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            let mut t = vec![0usize; m - 1];
            loop {
                let mut idx = vec![i];
                idx.extend_from_slice(&t);
                total += t.iter().fold(a.get(&idx), |acc, &j| acc * x[j]);
                let mut k = 0;
                while k < m - 1 {
                    t[k] += 1;
                    if t[k] < n {
                        break;
                    }
                    t[k] = 0;
                    k += 1;
                }
                if k == m - 1 {
                    break;
                }
            }
            total
        })
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn contract_matches_dense_oracle(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=4) {
        let mut rng = random::rng(seed);
        let a = random::general_tensor(&mut rng, m, n, 3 * n * m);
        let x = random::positive_vec(&mut rng, n, -2.0, 2.0);
        prop_assert!(close(&a.contract(&x).unwrap(), &dense_contract(&a, &x), 1e-12));
    }

    #[test]
    fn contraction_is_homogeneous(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=5, c in -3.0f64..3.0) {
        let mut rng = random::rng(seed);
        let a = random::general_tensor(&mut rng, m, n, 4 * n);
        let x = random::positive_vec(&mut rng, n, 0.1, 2.0);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let lhs = a.contract(&cx).unwrap();
        let rhs: Vec<f64> = a.contract(&x).unwrap().iter().map(|v| c.powi(m as i32 - 1) * v).collect();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=5) {
        let mut rng = random::rng(seed);
        let a = random::general_tensor(&mut rng, m, n, 4 * n);
        let x = random::positive_vec(&mut rng, n, 0.2, 2.0);
        let j = a.jacobian(&x).unwrap();
        let h = 1e-5;
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
                prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "J[{r}][{c}] = {exact}, fd = {fd}");
            }
        }
    }

    #[test]
    fn permutation_identity(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=5) {
        let mut rng = random::rng(seed);
        let a = random::general_tensor(&mut rng, m, n, 4 * n);
        let mut pi: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            pi.swap(k, rng.random_range(0..=k));
        }
        let ap = a.permute(&pi).unwrap();
        prop_assert_eq!(ap.nnz(), a.nnz());
        let x = random::positive_vec(&mut rng, n, -1.0, 1.0);
        let y: Vec<f64> = (0..n).map(|j| x[pi[j]]).collect();
        let ax = a.contract(&x).unwrap();
        let apy = ap.contract(&y).unwrap();
        for i in 0..n {
            prop_assert!((apy[i] - ax[pi[i]]).abs() <= 1e-12 * (1.0 + ax[pi[i]].abs()));
        }
    }

    #[test]
    fn embedding_identity_and_z_preservation(seed in any::<u64>(), m in 3usize..=4, n in 1usize..=4) {
        let mut rng = random::rng(seed);
        let a = random::sdd_m_tensor(&mut rng, m, n);
        let mut lower = Vec::new();
        for p in 2..m {
            if rng.random_bool(0.7) {
                lower.push(random::nonneg_tensor(&mut rng, p, n, 2 * n));
            }
        }
        let emb = a.embed_lower_order(&lower).unwrap();
        prop_assert_eq!(emb.dim(), n + 1);
        prop_assert!(structure::is_z_tensor(&emb));
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
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn file_round_trip_is_exact(seed in any::<u64>(), m in 2usize..=4, n in 1usize..=5) {
        let mut rng = random::rng(seed);
        let a = random::general_tensor(&mut rng, m, n, 4 * n);
        let text = tensor_bellman::io::format_tensor(&a);
        prop_assert_eq!(tensor_bellman::io::parse_tensor(&text).unwrap(), a);
    }
}

#[test]
fn embedding_rejects_negative_lower_order() {
    let a = SparseTensor::identity(3, 2).unwrap();
    let b = SparseTensor::from_entries(2, 2, vec![(vec![0, 1], -1.0)]).unwrap();
    assert!(a.embed_lower_order(&[b]).is_err());
}

#[test]
fn permutation_must_be_bijective() {
    let a = SparseTensor::identity(3, 3).unwrap();
    assert!(a.permute(&[0, 0, 1]).is_err());
    assert!(a.permute(&[0, 1]).is_err());
}
