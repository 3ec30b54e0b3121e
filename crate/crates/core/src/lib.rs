//! Hybrid opinion-dynamics simulation engine.
//!
//! A population is split every step into a small set of *core* agents and a
//! large crowd of *ordinary* agents:
//!
//! * [`edg`] ranks agents by the Shannon entropy of their neighbourhood
//!   opinions and promotes the top-K to core status.
//! * [`gom`] gives every core agent a signed sparse memory graph and retrieves
//!   context by solving a convexified graph-regularised objective, either by
//!   fixed-point propagation or by a direct solve.
//! * [`gmp`] updates all ordinary agents at once with batched opinion
//!   features, two projection MLPs and a two-layer graph attention network.
//! * [`engine`] wires everything together with the text providers in
//!   [`providers`], and [`metrics`] scores trend curves against ground truth.
//!
//! [`baselines`] holds the classical sequential agent-based models used for
//! comparison and latency benchmarks.

// `!(x > 0.0)` is how validation rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod edg;
pub mod engine;
pub mod error;
pub mod gmp;
pub mod gom;
pub mod metrics;
pub mod model;
pub mod providers;
pub mod rng;

pub use error::{Error, Result};
pub use model::{AgentProfile, Message, Opinion, OpinionState, SocialGraph};
