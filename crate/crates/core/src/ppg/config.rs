use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuro::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ppg,
    Ppo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ppg => "ppg",
            Mode::Ppo => "ppo",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppg" => Ok(Mode::Ppg),
            "ppo" => Ok(Mode::Ppo),
            other => Err(Error::Config(format!("unknown trainer mode {other:?}"))),
        }
    }
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpgConfig {
    pub clip: f64,
    pub kl_coeff: f64,
    pub clone_coeff: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    /// Policy iterations between auxiliary phases.
    pub n_policy_iters: usize,
    pub policy_epochs: usize,
    pub value_epochs: usize,
    pub aux_epochs: usize,
    pub rollout_len: usize,
    pub minibatch_size: usize,
    pub total_steps: usize,
    pub mode: Mode,
    pub hidden: Vec<usize>,
    pub policy_optim: AdamConfig,
    pub value_optim: AdamConfig,
    /// Global gradient-norm cap per update; 0 disables it.
    pub max_grad_norm: f64,
    /// Scale of the initial output-layer weights of the policy net.
    pub policy_init_gain: f64,
}

impl Default for PpgConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            kl_coeff: 0.01,
            clone_coeff: 1.0,
            discount: 0.99,
            gae_lambda: 0.95,
            n_policy_iters: 8,
            policy_epochs: 1,
            value_epochs: 1,
            aux_epochs: 6,
            rollout_len: 256,
            minibatch_size: 64,
            total_steps: 200_000,
            mode: Mode::Ppg,
            hidden: vec![64, 64],
            policy_optim: AdamConfig::default(),
            value_optim: AdamConfig::default(),
            max_grad_norm: 0.5,
            policy_init_gain: 0.01,
        }
    }
}

impl PpgConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return fail("clip must lie in (0, 1)");
        }
        if !(self.kl_coeff >= 0.0) || !(self.clone_coeff >= 0.0) {
            return fail("kl_coeff and clone_coeff must be non-negative");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail("discount must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        let counts = [
            self.n_policy_iters,
            self.policy_epochs,
            self.value_epochs,
            self.aux_epochs,
            self.rollout_len,
            self.minibatch_size,
        ];
        if counts.contains(&0) {
            return fail("iteration, epoch, rollout and minibatch counts must be at least 1");
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be at least 1");
        }
        for o in [&self.policy_optim, &self.value_optim] {
            if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
                return fail("optimizer settings out of range");
            }
        }
        if !(self.max_grad_norm >= 0.0) || !(self.policy_init_gain > 0.0) {
            return fail("max_grad_norm must be non-negative and policy_init_gain positive");
        }
        Ok(())
    }

    /// Number of policy iterations a run performs.
    pub fn n_iterations(&self) -> usize {
        self.total_steps / self.rollout_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PpgConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let base = PpgConfig::default();
        let cases: Vec<fn(&mut PpgConfig)> = vec![
            |c| c.clip = 0.0,
            |c| c.clip = 1.0,
            |c| c.kl_coeff = -0.1,
            |c| c.clone_coeff = -1.0,
            |c| c.discount = 0.0,
            |c| c.discount = 1.5,
            |c| c.gae_lambda = 1.1,
            |c| c.n_policy_iters = 0,
            |c| c.aux_epochs = 0,
            |c| c.minibatch_size = 0,
            |c| c.policy_optim.lr = 0.0,
        ];
        for mutate in cases {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn mode_round_trips_through_text() {
        for m in [Mode::Ppg, Mode::Ppo] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("sac".parse::<Mode>().is_err());
    }
}
