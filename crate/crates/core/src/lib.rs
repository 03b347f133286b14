//! Solver and verification harness for the regularized one-dimensional
//! stationary mean-field game
//!
//! ```text
//! u - u_xx + H(u_x) + lambda V(x) = m^alpha + eps (m - m_xx)
//! m - m_xx - (H'(u_x) m)_x        = 1 - eps (u - u_xx)
//! ```
//!
//! on the unit torus, with `m > 0`. Solutions are computed by continuation in
//! `lambda` from the constant solution at `lambda = 0`; every accepted state
//! is checked against the integral identities and lower bounds that hold for
//! exact solutions.

// `!(x > 0.0)` is used deliberately so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod linearization;
pub mod mms;
pub mod potential;
pub mod solver;
pub mod system;

pub use cli::cli_main;
pub use config::{parse_config, RunConfig};
pub use continuation::{
    continue_lambda, seed_constants, seed_v0, sweep_epsilon, ContinuationSchedule,
    ContinuationTrace,
};
pub use diagnostics::DiagnosticsReport;
pub use error::{MfgError, Result};
pub use grid::{GridFunction, PeriodicGrid};
pub use hamiltonian::{Hamiltonian, HamiltonianModel};
pub use potential::PotentialSpec;
pub use solver::{newton, NewtonOptions, NewtonReport};
pub use system::{residual, ProblemParams, State};
