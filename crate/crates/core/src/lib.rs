//! Doubly stochastic primal-dual hybrid gradient (DSPDHG) for block-structured
//! saddle-point problems
//!
//! ```text
//! min_x max_y  sum_j g_j(x_j) + <A x, y> - sum_i f_i*(y_i)
//! ```
//!
//! with restarts, PDHG/SPDHG as special cases, and the diagnostics used to
//! check convergence (gap kernel, smoothed gap, Lyapunov functionals, KKT
//! residual).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockops;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod formats;
pub mod instances;
pub mod problem;
pub mod prox;
pub mod restart;
pub mod sampling;
pub mod solver;
pub mod vecops;

pub use blockops::{BlockMatrix, BlockPartition, NormReport};
pub use error::{Error, Result};
pub use problem::{PrimalDualPoint, SaddleProblem};
pub use prox::ProxAtom;
pub use restart::RestartPolicy;
pub use solver::{Method, RunOptions, Solver, StepMode, StepSizes, Trajectory};
