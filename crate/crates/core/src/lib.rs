//! Simulator and rate-analysis toolkit for push-sum (ratio-consensus)
//! protocols on directed networks with packet loss.
//!
//! The running-sums protocol is lifted to a linear system on an augmented
//! network (one buffer coordinate per edge), every step materializes as a
//! column-stochastic transition matrix, and the almost-sure convergence rate
//! is estimated three independent ways:
//!
//! * `λ₁ − λ₂` from the top two Lyapunov exponents (QR method),
//! * `−(1/n) log τ(M_n)` from the Birkhoff contraction coefficient of the
//!   running product,
//! * direct slopes of the per-step TV distance and max ratio error.
//!
//! [`experiments::run_rate_experiment`] runs all of them on one shared matrix
//! stream and reports their agreement; the `pushsum-rates` binary exposes
//! `simulate`, `lyapunov`, `rates`, `sweep`, and `check` subcommands.

// Dense numeric kernels index in lockstep across several buffers; iterator
// chains obscure them.
#![allow(clippy::needless_range_loop)]

pub mod cones;
pub mod config;
pub mod error;
pub mod experiments;
pub mod lyapunov;
pub mod primitivity;
pub mod process_gen;
pub mod protocol;

pub use cones::{
    hilbert_distance, hilbert_distance_by_definition, phi, tau, tau_witness_sequence, tv_distance,
    ExtendedReal, NonNegMatrix, NonNegVector, RowClass, ScaledProduct,
};
pub use error::{Error, Result};
pub use experiments::{run_rate_experiment, ExperimentConfig, RateReport};
pub use process_gen::{MatrixProcess, ProcessConfig};
pub use protocol::{Mode, NetworkTopology, PushSum, TransmitFraction};
