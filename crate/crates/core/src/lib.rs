//! Microswimmer navigation benchmark.
//!
//! An inertialess swimmer moves at constant speed through a prescribed flow and
//! picks its heading from a local measurement of the velocity gradient, trying to
//! travel as far as possible along `+z`. The crate provides the flows (Taylor-Green
//! vortices, ABC flow, simulated 2D turbulence), the navigation environment,
//! analytic baselines (naive and surfing), three learning agents (tabular
//! Q-learning, online actor-critic, PPO) and an evaluation harness.
//!
//! Data-parallel loops (evaluation episodes, parameter sweeps, batched stepping,
//! minibatch gradients) go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and plain iterators otherwise.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod a2c;
pub mod agent;
pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod flow;
pub mod linalg;
pub mod nn;
pub mod par;
pub mod policy;
pub mod ppo;
pub mod qlearning;
pub mod rng;
pub mod turbulence;

pub use error::{Error, Result};
