//! Bellman equations with sparse tensor coefficients.
//!
//! The crate covers sparse tensor storage and contraction, structural tests
//! for strong M-tensors, positive-solution solvers for `A x^{m-1} = b`,
//! policy iteration over row-decoupled policy sets, and two finite-difference
//! schemes for a one-dimensional optimal control problem.
//!
//! Indices are 0-based in the Rust API and 1-based in files and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bellman;
pub mod cli;
pub mod control;
pub mod error;
pub mod io;
pub mod matrix;
pub mod random;
pub mod solve;
pub mod structure;
pub mod tensor;

pub use bellman::{policy_iteration, BellmanReport, IterationOptions, Policy, PolicyProblem, RowChoice};
pub use error::{Error, Result};
pub use matrix::SparseMatrix;
pub use solve::{Method, SolveOptions, SolveReport};
pub use structure::{classify, decide_strong_m, ClassificationReport, StrongM};
pub use tensor::SparseTensor;
