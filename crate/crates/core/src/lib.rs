//! Temper-then-tilt unlearning as density-ratio estimation.
//!
//! A retain distribution is recovered from the mixture `p = (1-γ)·p_r + γ·p_f`
//! by tilting a tempered copy of `p` with a probabilistic classifier:
//! `p̂_r(z) ∝ p(z)^{1/T} · f̂(z)`. The crate provides the univariate densities,
//! the classifiers, the normalized estimator, the Retain/Forget Error
//! measurements, numeric evaluators for the accompanying guarantees, a tabular
//! toy language model that applies the same rule token by token, and the
//! seeded sweep harness behind the `t3` binary.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod classifier;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod metrics;
pub mod quadrature;
pub mod tinylm;

pub use error::{Error, Result};
