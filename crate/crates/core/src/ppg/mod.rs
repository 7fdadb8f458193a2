//! Phasic policy gradient trainer with a plain PPO ablation.
//!
//! Each policy iteration collects one rollout, computes advantages, and runs
//! the clipped-surrogate and value updates. In `ppg` mode every
//! `n_policy_iters` iterations are followed by an auxiliary phase that fits
//! the policy net's extra value unit to the stored targets while a KL term
//! holds the action distribution in place.

mod bandit;
mod buffer;
mod config;
mod eval;
mod loss;
pub mod oracle;
mod policy;
mod train;

pub use bandit::TwoArmBandit;
pub use buffer::{compute_gae, normalized_advantages, RolloutBuffer};
pub use config::{Mode, PpgConfig};
pub use eval::{evaluate, GreedyPolicy};
pub use loss::{aux_joint_loss, policy_loss, value_loss, JointObjective, LossBreakdown, PolicyObjective};
pub use policy::{value_net, HeadLayout, PolicyNet, PolicyOutput};
pub use train::{policy_from_checkpoint, train, IterationRecord, TrainReport, TRAIN_CSV_HEADER};

#[cfg(test)]
mod tests;
