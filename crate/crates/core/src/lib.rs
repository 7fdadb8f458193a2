//! Slotframe-level TSCH resource allocation: a multi-hop SINR simulator, an
//! episodic environment over cell and power choices, a small MLP kernel, a
//! phasic policy gradient trainer with a PPO ablation, heuristic baselines,
//! and the experiment harness behind the `tsch-ppg` binary.

pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod neuro;
pub mod ppg;
pub mod model;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
