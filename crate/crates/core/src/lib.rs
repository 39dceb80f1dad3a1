//! Accelerated stochastic mirror descent (ASMD) for composite finite sums
//! `min_x (1/n) Σ f_i(x) + P(x)`, with variance reduction, Bregman distances
//! and ε-inexact prox steps, plus smoothing for nonsmooth max-type terms, a
//! specialised convex-concave saddle solver and baseline methods.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asmd;
pub mod baselines;
pub mod bregman;
pub mod data;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod rate;
pub mod reference;
pub mod saddle;
pub mod smoothing;
pub mod trace;

pub use error::{Error, Result};
pub use problem::{Component, ConstraintSet, FiniteSumProblem, Regularizer, SamplingDistribution};
pub use trace::{SolverTrace, StageRecord};
