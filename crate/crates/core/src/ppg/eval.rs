use super::policy::PolicyNet;
use super::train::policy_from_checkpoint;
use crate::env::{decode_action, run_controller, Controller, EvalStats, Observation, Scenario, TschEnv};
use crate::error::{Error, Result};
use crate::model::{PowerAllocation, ScheduleMatrix};
use crate::neuro::Checkpoint;

/// Deterministic controller taking the most probable index of every head.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub policy: PolicyNet,
}

impl GreedyPolicy {
    /// Checks the policy against the scenario's observation and action shape.
    pub fn for_scenario(policy: PolicyNet, scenario: &Scenario) -> Result<Self> {
        let obs_dim = scenario.observation_dim();
        let heads = scenario.action_spec().head_sizes();
        if policy.mlp.input_size() != obs_dim || policy.layout().sizes() != heads.as_slice() {
            return Err(Error::Shape(format!(
                "policy expects {} inputs and heads {:?}; scenario has {} and {:?}",
                policy.mlp.input_size(),
                policy.layout().sizes(),
                obs_dim,
                heads
            )));
        }
        Ok(Self { policy })
    }
}

impl Controller for GreedyPolicy {
    fn act(&mut self, env: &TschEnv, obs: &Observation) -> Result<(ScheduleMatrix, PowerAllocation)> {
        let action = self.policy.forward(&obs.to_vec())?.greedy();
        decode_action(&env.scenario().network, &action)
    }
}

/// Greedy evaluation of a checkpointed policy; no learning takes place.
pub fn evaluate(ckpt: &Checkpoint, scenario: &Scenario, n_episodes: usize, seed: u64) -> Result<EvalStats> {
    let mut ctl = GreedyPolicy::for_scenario(policy_from_checkpoint(ckpt)?, scenario)?;
    run_controller(scenario, &mut ctl, n_episodes, seed)
}
