//! Bayesian-heuristic group decision dynamics on directed networks.
//!
//! Agents observe private exponential-family signals once, act optimally,
//! and then reuse their time-one Bayesian update as a fixed rule for every
//! later round. For real-valued actions the rule is affine in the neighbours'
//! actions ([`action_dynamics`]); for beliefs over a finite state space it is
//! a log-linear pool ([`belief_dynamics`]). [`harness`] drives seeded
//! scenarios and emits trajectories plus diagnostics.

pub mod action_dynamics;
pub mod belief_dynamics;
pub mod error;
pub mod expfam;
pub mod harness;
pub mod network;
pub mod spectral;

pub use error::{Error, Result};
pub use network::DiGraph;
