//! Structural classification of tensors: Z-pattern, diagonal dominance, the
//! tensor digraph, weak chained diagonal dominance and the strong M-tensor
//! decision for weakly diagonally dominant Z-tensors.
//!
//! Classification is exact by default: an entry is nonzero iff it is stored,
//! and a row is strictly dominant iff its slack is `> 0`. An explicit
//! `slack_eps` widens both comparisons for noisy inputs.

use std::collections::{BTreeMap, VecDeque};

use serde_json::{json, Value};

use crate::error::Result;
use crate::matrix::SparseMatrix;
use crate::solve::{self, SolveOptions};
use crate::tensor::SparseTensor;

fn is_diag_tuple(i: usize, t: &[usize]) -> bool {
    t.iter().all(|&k| k == i)
}

/// True iff every stored off-diagonal entry is nonpositive.
pub fn is_z_tensor(a: &SparseTensor) -> bool {
    (0..a.dim()).all(|i| a.row(i).all(|(t, v)| is_diag_tuple(i, t) || v <= 0.0))
}

pub fn has_nonneg_diagonal(a: &SparseTensor) -> bool {
    (0..a.dim()).all(|i| a.diagonal(i) >= 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dominance {
    /// `|a_{i..i}| - sum of |off-diagonal entries|` per row.
    pub slack: Vec<f64>,
    /// `J(A)`, the strictly dominant rows (0-based, ascending).
    pub sdd_rows: Vec<usize>,
    pub is_wdd: bool,
    pub is_sdd: bool,
}

/// Row slack, summed over stored entries in storage order.
pub fn row_slack(a: &SparseTensor, i: usize) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    for (t, v) in a.row(i) {
        if is_diag_tuple(i, t) {
            diag = v.abs();
        } else {
            off += v.abs();
        }
    }
    diag - off
}

pub fn dominance(a: &SparseTensor) -> Dominance {
    dominance_with_eps(a, 0.0)
}

pub fn dominance_with_eps(a: &SparseTensor, eps: f64) -> Dominance {
    let slack: Vec<f64> = (0..a.dim()).map(|i| row_slack(a, i)).collect();
    let sdd_rows: Vec<usize> = (0..a.dim()).filter(|&i| slack[i] > eps).collect();
    let is_wdd = slack.iter().all(|&s| s >= -eps);
    let is_sdd = sdd_rows.len() == a.dim();
    Dominance {
        slack,
        sdd_rows,
        is_wdd,
        is_sdd,
    }
}

/// Directed graph with an edge `i -> j` whenever some stored entry of row `i`
/// has `j` among its trailing indices. Self-loops are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorGraph {
    adj: Vec<Vec<usize>>,
}

impl TensorGraph {
    pub fn from_adjacency(mut adj: Vec<Vec<usize>>) -> Self {
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        TensorGraph { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn reversed(&self) -> TensorGraph {
        let mut rev = vec![Vec::new(); self.adj.len()];
        for (i, succ) in self.adj.iter().enumerate() {
            for &j in succ {
                rev[j].push(i);
            }
        }
        TensorGraph::from_adjacency(rev)
    }

    /// Strongly connected components (Tarjan, iterative). Each component is
    /// sorted; components are listed in reverse topological order.
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.adj.len();
        const UNSEEN: usize = usize::MAX;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comps = Vec::new();
        let mut counter = 0;
        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            // (vertex, next successor position)
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&(v, pos)) = call.last() {
                if pos < self.adj[v].len() {
                    let w = self.adj[v][pos];
                    call.last_mut().unwrap().1 += 1;
                    if index[w] == UNSEEN {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().unwrap();
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        comps.push(comp);
                    }
                }
            }
        }
        comps
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_components().len() <= 1
    }

    /// Multi-source breadth-first search on the reversed graph. Returns, for
    /// each vertex that can reach `targets`, the next vertex on a shortest
    /// walk (`Some(v)` for targets themselves is `v`).
    fn next_towards(&self, targets: &[usize]) -> Vec<Option<usize>> {
        let rev = self.reversed();
        let mut next = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        for &t in targets {
            next[t] = Some(t);
            queue.push_back(t);
        }
        while let Some(u) = queue.pop_front() {
            for &v in rev.successors(u) {
                if next[v].is_none() {
                    next[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        next
    }
}

pub fn build_graph(a: &SparseTensor) -> TensorGraph {
    let adj = (0..a.dim())
        .map(|i| a.row(i).flat_map(|(t, _)| t.iter().copied()).collect())
        .collect();
    TensorGraph::from_adjacency(adj)
}

/// `R(|A|)_{ij} = sum |a_{i i2..im}|` over entries whose trailing indices contain `j`.
pub fn representation_matrix(a: &SparseTensor) -> SparseMatrix {
    let mut triplets = Vec::new();
    for i in 0..a.dim() {
        for (t, v) in a.row(i) {
            let mut cols = t.to_vec();
            cols.sort_unstable();
            cols.dedup();
            triplets.extend(cols.into_iter().map(|j| (i, j, v.abs())));
        }
    }
    SparseMatrix::from_triplets(a.dim(), a.dim(), triplets)
}

/// Graph of a matrix: edge `i -> j` iff `R_{ij} != 0`.
pub fn matrix_graph(r: &SparseMatrix) -> TensorGraph {
    let adj = (0..r.rows())
        .map(|i| r.row(i).filter(|(_, v)| *v != 0.0).map(|(j, _)| j).collect())
        .collect();
    TensorGraph::from_adjacency(adj)
}

/// True iff `R(|A|)` is irreducible, i.e. the tensor digraph is strongly connected.
pub fn is_weakly_irreducible(a: &SparseTensor) -> bool {
    build_graph(a).is_strongly_connected()
}

/// Outcome of the weak chained diagonal dominance test.
#[derive(Debug, Clone, PartialEq)]
pub struct WcddReport {
    pub is_wcdd: bool,
    /// For each row, whether it lies in `J(A)` or has a walk into `J(A)`.
    pub reaches_sdd: Vec<bool>,
    /// For every row outside `J(A)`, a walk (vertex list) ending in `J(A)`;
    /// present iff `is_wcdd`.
    pub witness: Option<BTreeMap<usize, Vec<usize>>>,
}

pub fn is_wcdd(a: &SparseTensor) -> WcddReport {
    wcdd_with(a, &build_graph(a), &dominance(a))
}

fn wcdd_with(a: &SparseTensor, graph: &TensorGraph, dom: &Dominance) -> WcddReport {
    let next = graph.next_towards(&dom.sdd_rows);
    let reaches_sdd: Vec<bool> = next.iter().map(Option::is_some).collect();
    let is_wcdd = dom.is_wdd && !dom.sdd_rows.is_empty() && reaches_sdd.iter().all(|&r| r);
    let witness = is_wcdd.then(|| {
        let in_j: Vec<bool> = {
            let mut v = vec![false; a.dim()];
            dom.sdd_rows.iter().for_each(|&i| v[i] = true);
            v
        };
        (0..a.dim())
            .filter(|&i| !in_j[i])
            .map(|i| {
                let mut walk = vec![i];
                let mut cur = i;
                while !in_j[cur] {
                    cur = next[cur].expect("reachable");
                    walk.push(cur);
                }
                (i, walk)
            })
            .collect()
    });
    WcddReport {
        is_wcdd,
        reaches_sdd,
        witness,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum StrongM {
    StrongM,
    NotStrongM,
    Undecidable,
}

impl StrongM {
    pub fn as_str(self) -> &'static str {
        match self {
            StrongM::StrongM => "StrongM",
            StrongM::NotStrongM => "NotStrongM",
            StrongM::Undecidable => "Undecidable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongMDecision {
    pub verdict: StrongM,
    /// A nonzero `z` with `A z^{m-1} = 0`, present iff the verdict is `NotStrongM`.
    pub zero_eigvec: Option<Vec<f64>>,
}

/// Options for the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassifyOptions {
    /// Slack tolerance for dominance comparisons; 0 means exact.
    pub slack_eps: f64,
}

/// Verdict only, without constructing a zero eigenvector.
pub fn strong_m_verdict(a: &SparseTensor) -> StrongM {
    let dom = dominance(a);
    if !(is_z_tensor(a) && has_nonneg_diagonal(a) && dom.is_wdd) {
        return StrongM::Undecidable;
    }
    if wcdd_with(a, &build_graph(a), &dom).is_wcdd {
        StrongM::StrongM
    } else {
        StrongM::NotStrongM
    }
}

pub fn decide_strong_m(a: &SparseTensor) -> Result<StrongMDecision> {
    decide_strong_m_with(a, &ClassifyOptions::default())
}

/// For a weakly diagonally dominant Z-tensor with nonnegative diagonals,
/// strong M-tensor iff w.c.d.d.; otherwise `Undecidable`.
///
/// A `NotStrongM` verdict carries a zero eigenvector built as follows. Let
/// `R` be the rows that cannot reach `J(A)`. If `R` is everything, `e` works.
/// Otherwise replace the rows in `R` by identity rows; the result is a
/// w.c.d.d. strong M-tensor, and its nonnegative solution `y` of
/// `y^{m-1} = (e_R; 0)` has ones on `R` and satisfies `A y^{m-1} = 0`.
pub fn decide_strong_m_with(a: &SparseTensor, opts: &ClassifyOptions) -> Result<StrongMDecision> {
    let dom = dominance_with_eps(a, opts.slack_eps);
    if !(is_z_tensor(a) && has_nonneg_diagonal(a) && dom.is_wdd) {
        return Ok(StrongMDecision {
            verdict: StrongM::Undecidable,
            zero_eigvec: None,
        });
    }
    let wcdd = wcdd_with(a, &build_graph(a), &dom);
    if wcdd.is_wcdd {
        return Ok(StrongMDecision {
            verdict: StrongM::StrongM,
            zero_eigvec: None,
        });
    }
    let z = zero_eigvec_from_partition(a, &wcdd.reaches_sdd)?;
    Ok(StrongMDecision {
        verdict: StrongM::NotStrongM,
        zero_eigvec: Some(z),
    })
}

fn zero_eigvec_from_partition(a: &SparseTensor, reaches_sdd: &[bool]) -> Result<Vec<f64>> {
    let n = a.dim();
    let stuck: Vec<bool> = reaches_sdd.iter().map(|r| !r).collect();
    if stuck.iter().all(|&s| s) {
        return Ok(vec![1.0; n]);
    }
    let aux = a.with_identity_rows(&stuck)?;
    let rhs: Vec<f64> = stuck.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();

    // Zero right-hand sides are approached through vanishing uniform shifts;
    // the second solve starts from the first, which dominates it.
    let mut opts = SolveOptions {
        check_structure: false,
        max_iters: 500,
        ..SolveOptions::default()
    };
    opts.nonneg_shift = 1e-8;
    let coarse = solve::solve_newton(&aux, &rhs, &opts)?;
    opts.nonneg_shift = 1e-14;
    let fine = solve::solve_newton_from(&aux, &rhs, Some(&coarse.x), &opts)?;

    let mut y = fine.x;
    for (yi, &s) in y.iter_mut().zip(&stuck) {
        if s {
            *yi = 1.0;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub is_z: bool,
    pub diag_nonneg: bool,
    pub is_wdd: bool,
    pub is_sdd: bool,
    pub sdd_rows: Vec<usize>,
    pub slack: Vec<f64>,
    pub is_wcdd: bool,
    pub wcdd_witness: Option<BTreeMap<usize, Vec<usize>>>,
    pub is_weakly_irreducible: bool,
    pub strong_m_decision: StrongM,
    pub zero_eigvec: Option<Vec<f64>>,
}

pub fn classify(a: &SparseTensor) -> Result<ClassificationReport> {
    classify_with(a, &ClassifyOptions::default())
}

pub fn classify_with(a: &SparseTensor, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    let dom = dominance_with_eps(a, opts.slack_eps);
    let graph = build_graph(a);
    let wcdd = wcdd_with(a, &graph, &dom);
    let decision = decide_strong_m_with(a, opts)?;
    Ok(ClassificationReport {
        is_z: is_z_tensor(a),
        diag_nonneg: has_nonneg_diagonal(a),
        is_wdd: dom.is_wdd,
        is_sdd: dom.is_sdd,
        sdd_rows: dom.sdd_rows,
        slack: dom.slack,
        is_wcdd: wcdd.is_wcdd,
        wcdd_witness: wcdd.witness,
        is_weakly_irreducible: graph.is_strongly_connected(),
        strong_m_decision: decision.verdict,
        zero_eigvec: decision.zero_eigvec,
    })
}

impl ClassificationReport {
    /// JSON form with 1-based row indices and walks.
    pub fn to_json(&self) -> Value {
        let one = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
        let witness = self.wcdd_witness.as_ref().map(|w| {
            w.iter()
                .map(|(row, walk)| ((row + 1).to_string(), json!(one(walk))))
                .collect::<serde_json::Map<_, _>>()
        });
        json!({
            "is_z": self.is_z,
            "diag_nonneg": self.diag_nonneg,
            "is_wdd": self.is_wdd,
            "is_sdd": self.is_sdd,
            "sdd_rows": one(&self.sdd_rows),
            "is_wcdd": self.is_wcdd,
            "wcdd_witness": witness,
            "is_weakly_irreducible": self.is_weakly_irreducible,
            "strong_m_decision": self.strong_m_decision.as_str(),
            "zero_eigvec": self.zero_eigvec,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(entries: Vec<(Vec<usize>, f64)>, n: usize) -> SparseTensor {
        SparseTensor::from_entries(3, n, entries).unwrap()
    }

    fn cancel_tensor() -> SparseTensor {
        t3(
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![0, 1, 1], -1.0),
                (vec![1, 1, 1], 1.0),
                (vec![1, 0, 0], -1.0),
            ],
            2,
        )
    }

    #[test]
    fn identity_classification() {
        let r = classify(&SparseTensor::identity(3, 3).unwrap()).unwrap();
        assert!(r.is_z && r.is_sdd && r.is_wcdd);
        assert_eq!(r.sdd_rows, vec![0, 1, 2]);
        assert_eq!(r.strong_m_decision, StrongM::StrongM);
        assert!(!r.is_weakly_irreducible);
    }

    #[test]
    fn positive_off_diagonal_not_z() {
        let a = t3(vec![(vec![0, 0, 0], 1.0), (vec![0, 1, 1], 0.5), (vec![1, 1, 1], 1.0)], 2);
        assert!(!is_z_tensor(&a));
        assert_eq!(decide_strong_m(&a).unwrap().verdict, StrongM::Undecidable);
    }

    #[test]
    fn cancel_tensor_zero_eigvec() {
        let a = cancel_tensor();
        assert!(!is_wcdd(&a).is_wcdd);
        let d = decide_strong_m(&a).unwrap();
        assert_eq!(d.verdict, StrongM::NotStrongM);
        assert_eq!(d.zero_eigvec, Some(vec![1.0, 1.0]));
    }

    #[test]
    fn graph_of_single_entry() {
        let a = t3(vec![(vec![0, 1, 2], -2.0)], 3);
        let g = build_graph(&a);
        assert_eq!(g.successors(0), &[1, 2]);
        assert!(g.successors(1).is_empty());
        let r = representation_matrix(&a);
        assert_eq!(r.get(0, 1), 2.0);
        assert_eq!(r.get(0, 2), 2.0);
        assert_eq!(r.nnz(), 2);
    }

    #[test]
    fn identity_graph_is_self_loops() {
        let g = build_graph(&SparseTensor::identity(3, 3).unwrap());
        for i in 0..3 {
            assert_eq!(g.successors(i), &[i]);
        }
        let r = representation_matrix(&SparseTensor::identity(3, 2).unwrap());
        assert_eq!(r.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn two_cycle_weakly_irreducible() {
        let a = t3(
            vec![
                (vec![0, 0, 0], 2.0),
                (vec![0, 1, 1], -1.0),
                (vec![1, 1, 1], 2.0),
                (vec![1, 0, 0], -1.0),
            ],
            2,
        );
        assert!(is_weakly_irreducible(&a));
    }

    #[test]
    fn chained_rows_witnessed() {
        // row 1 s.d.d.; row 2 -> row 1; row 3 -> row 2 (1-based)
        let a = t3(
            vec![
                (vec![0, 0, 0], 2.0),
                (vec![0, 0, 1], -1.0),
                (vec![1, 1, 1], 1.0),
                (vec![1, 0, 0], -1.0),
                (vec![2, 2, 2], 1.0),
                (vec![2, 1, 1], -1.0),
            ],
            3,
        );
        let w = is_wcdd(&a);
        assert!(w.is_wcdd);
        let walks = w.witness.unwrap();
        assert_eq!(walks[&1], vec![1, 0]);
        assert_eq!(walks[&2], vec![2, 1, 0]);
        assert!(!walks.contains_key(&0));
    }

    #[test]
    fn partial_stuck_rows_get_constructed_eigvec() {
        // rows 0,1 form a closed zero-row-sum block; row 2 is s.d.d. and
        // depends on row 0.
        let a = t3(
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![0, 1, 1], -1.0),
                (vec![1, 1, 1], 1.0),
                (vec![1, 0, 0], -1.0),
                (vec![2, 2, 2], 3.0),
                (vec![2, 0, 2], -1.0),
            ],
            3,
        );
        let d = decide_strong_m(&a).unwrap();
        assert_eq!(d.verdict, StrongM::NotStrongM);
        let z = d.zero_eigvec.unwrap();
        assert_eq!(&z[..2], &[1.0, 1.0]);
        let r = a.contract(&z).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 1e-10), "{r:?}");
    }

    #[test]
    fn scc_on_chain() {
        let g = TensorGraph::from_adjacency(vec![vec![1], vec![2], vec![1]]);
        let comps = g.strongly_connected_components();
        assert_eq!(comps.len(), 2);
        assert!(comps.contains(&vec![1, 2]));
        assert!(!g.is_strongly_connected());
    }

    #[test]
    fn report_json_is_one_based() {
        let a = cancel_tensor();
        let j = classify(&a).unwrap().to_json();
        assert_eq!(j["strong_m_decision"], "NotStrongM");
        assert_eq!(j["sdd_rows"], json!([]));
        let id = classify(&SparseTensor::identity(2, 2).unwrap()).unwrap().to_json();
        assert_eq!(id["sdd_rows"], json!([1, 2]));
    }

    #[test]
    fn slack_eps_widens_dominance() {
        let a = t3(vec![(vec![0, 0, 0], 1.0), (vec![0, 1, 1], -1.0 - 1e-12), (vec![1, 1, 1], 1.0)], 2);
        assert!(!dominance(&a).is_wdd);
        assert!(dominance_with_eps(&a, 1e-9).is_wdd);
    }
}
