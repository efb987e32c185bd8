//! Finite-time ruin probabilities of aggregate Gaussian processes.
//!
//! The crate evaluates exact first-order asymptotics of
//! `P(sup_{[0,T]} (X(t) - g(t)) > u)` for weighted sums of independent
//! centered Gaussian processes, estimates the Pickands and Piterbarg
//! constants that enter them, and checks everything against Monte-Carlo
//! simulation, including Gaussian-perturbed Lévy risk processes.

// `!(x > 0.0)` is how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod circulant;
pub mod cli;
pub mod config;
pub mod constants;
pub mod kernels;
pub mod levy;
pub mod linalg;
pub mod rng;
pub mod simulation;
pub mod special;

pub use asymptotics::{AggregateModel, AsymptoticResult, Component, Regime};
pub use kernels::{KernelError, KernelSpec, LocalExpansion, TabulatedKernel, Trend};
pub use special::{log_psi, psi};
