//! Simulator for blockchain-assisted federated learning with Lyapunov-based
//! client scheduling and resource allocation.
//!
//! The crate is organised bottom-up:
//! - [`sysmodel`]: channel, latency and energy formulas for one round.
//! - [`lyapunov`]: virtual energy queues, the drift-plus-penalty ratio and its bounds.
//! - [`solver`]: the per-round DRACS optimizer and a brute-force oracle.
//! - [`policies`]: DRACS and the CS / EC / SA baselines behind one interface.
//! - [`fl`]: a small squared-SVM federated learning engine.
//! - [`sim`]: the round loop and long-term-average reporting.
//! - [`config`] and [`experiment`]: configuration files and sweep output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod fl;
pub mod lyapunov;
pub mod policies;
pub mod sim;
pub mod solver;
pub mod sysmodel;

pub use lyapunov::{QueueState, TheoremBounds};
pub use policies::PolicyKind;
pub use sim::{MetricsSeries, SimConfig};
pub use solver::{solve_round, SolveReport, SolverError};
pub use sysmodel::{Action, ChannelState, ClientProfile, RoundOutcome, SystemConfig};
