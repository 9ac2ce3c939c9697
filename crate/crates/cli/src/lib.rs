//! Configuration files, experiment runner, convergence studies and file
//! formats for the level-set Gross–Pitaevskii solver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod config;
pub mod dump;
pub mod expr;
pub mod runner;
