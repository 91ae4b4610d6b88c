//! Low-rank solvers for symmetric positive-definite multi-term matrix equations
//!
//! The problem solved by this crate is the linear matrix equation
//!
//! ```text
//! K_0 U G_0' + K_1 U G_1' + ... + K_m U G_m' = B,
//! ```
//!
//! which is the matricized form of the Kronecker-structured system
//! `(sum_i G_i (x) K_i) u = b`. Such systems arise from stochastic Galerkin
//! finite element discretizations of diffusion problems with parameterized
//! coefficients. Instead of forming the `n1 x n2` solution `U`, the solvers
//! build a low-rank factorization `U_p = V_p W_p'` by alternating energy
//! minimization (AEM): successive rank-one corrections, optionally improved
//! by one of three enhancement procedures (a single-sided PGD update, a
//! Gauss-Seidel style per-pair update, and a reduced stagewise update that
//! re-solves only the pairs flagged by an angle criterion).
//!
//! The crate is organized as a library with one thin `kronaem` binary on
//! top. Start from [`sgfem::build_benchmark`] to assemble a problem,
//! [`aem::solve`] to run a method, and [`diagnostics`] to compare against a
//! dense reference solution. The `examples/` directory contains one runnable
//! example per major capability.

pub mod aem;
pub mod cli;
pub mod dense;
pub mod diagnostics;
pub mod krylov;
pub mod lowrank;
pub mod operator;
pub mod sgfem;
pub mod sparse;

pub use dense::DenseMatrix;
pub use lowrank::LowRankFactors;
pub use operator::KroneckerOperator;
pub use sparse::SparseMatrix;

/// Errors produced by assembly, solvers, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("indefinite operator detected in PCG (p'Ap = {0:.3e})")]
    IndefiniteOperator(f64),
    #[error("eigenvalue root finding failed: {0}")]
    RootFinding(String),
    #[error("dense reference cap exceeded: {size} entries > cap {cap}")]
    DenseCapExceeded { size: usize, cap: usize },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
