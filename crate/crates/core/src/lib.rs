//! Finite-difference solver and verification tools for the stationary
//! equation
//!
//! ```text
//! -nu u'' + eps (u')^2 - b u' = a u + f   on (0, 1),   u'(0) = u'(1) = 0,
//! ```
//!
//! which prices a bubble asset held by risk-averse agents. A positive
//! solution exists exactly when the principal eigenvalue of
//! `-nu D^2 - b D - a` is negative and `a` changes sign ([`spectral`]). The
//! solution is computed by a monotone iteration ([`elliptic`]) and checked
//! against two independent routes: long-time limits of the evolution
//! problem ([`parabolic`]) and Monte Carlo for the underlying stochastic
//! control problem ([`control_mc`]). [`branch`] traces the positive branch of
//! the eigenvalue-type problem `-nu u'' + eps (u')^2 + u = lambda r u`, and
//! [`scenarios`] builds the crypto and real-estate market models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod cli;
pub mod control_mc;
pub mod elliptic;
pub mod error;
pub mod family;
pub mod grid;
pub mod linalg;
pub mod parabolic;
pub mod scenarios;
pub mod spectral;

pub use elliptic::{solve_positive, EllipticProblem, SolveReport, SolverOptions};
pub use error::{Error, Result};
pub use grid::{Grid1D, ScalarField};
pub use spectral::{principal_eigenpair, GateVerdict, Regime};
