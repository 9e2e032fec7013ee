//! Hierarchical 2DOF control toolbox.
//!
//! The crate combines a Youla-Kucera (YK) controller parameterization with a
//! decomposed model-predictive feedback gain:
//!
//! * [`linalg`] — dense matrix kernels and matrix-equation solvers,
//! * [`ss`] — discrete-time state-space algebra (interconnections, LFTs, norms),
//! * [`qp`] — a dense convex QP solver (operator splitting with active-set polish),
//! * [`mpc`] — condensed MPC, analytic gain extraction and the constrained
//!   feedforward MPC over the reference sequence,
//! * [`kalman`] — stationary and disturbance-augmented Kalman filters,
//! * [`youla`] — coprime factorization, YK/dual-YK blocks and loop assembly,
//! * [`qdesign`] — H2 design of the YK parameter Q as an FIR least-squares fit,
//! * [`fourtank`] — the nonlinear quadruple-tank benchmark plant,
//! * [`harness`] — scenario engine, metrics and CSV/JSON export behind the CLI.

pub mod error;
pub mod fourtank;
pub mod harness;
pub mod kalman;
pub mod linalg;
pub mod mpc;
pub mod qdesign;
pub mod qp;
pub mod ss;
pub mod youla;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
