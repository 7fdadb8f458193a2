use crate::error::{Error, Result};
use crate::neuro::PROB_FLOOR;

use super::policy::PolicyNet;

/// Recursive generalised advantage estimate.
///
/// `values` carries one bootstrap entry past the last reward. Returns the
/// advantages and the value targets `A + V`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 || dones.len() != t_len {
        return Err(Error::Shape(format!(
            "GAE needs values = rewards + 1 and dones = rewards; got {}, {}, {}",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; t_len];
    let mut running = 0.0;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// One rollout of on-policy experience.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    /// Joint log-probability under the behaviour policy.
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Environment-reported utility per step, kept for reporting.
    pub utilities: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
    /// Concatenated head probabilities of the frozen reference policy.
    pub old_probs: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        observation: Vec<f64>,
        action: Vec<usize>,
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
        utility: f64,
    ) {
        self.observations.push(observation);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
        self.utilities.push(utility);
    }

    /// Fills advantages and targets; `bootstrap` is the value of the state
    /// following the last step.
    pub fn finish(&mut self, bootstrap: f64, gamma: f64, lambda: f64) -> Result<()> {
        let mut values = self.values.clone();
        values.push(bootstrap);
        let (adv, targets) = compute_gae(&self.rewards, &values, &self.dones, gamma, lambda)?;
        if let Some(t) = adv.iter().position(|a| !a.is_finite()) {
            return Err(Error::Numeric(format!("advantage at step {t} is {}", adv[t])));
        }
        self.advantages = adv;
        self.targets = targets;
        Ok(())
    }

    /// Freezes the current policy as the reference for the KL and ratio terms.
    pub fn snapshot(&mut self, policy: &PolicyNet) -> Result<()> {
        self.old_probs = self
            .observations
            .iter()
            .map(|o| policy.forward(o).map(|out| out.probs()))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Reference log-probability of the stored action at step `t`.
    pub fn old_log_prob(&self, policy: &PolicyNet, t: usize) -> f64 {
        let layout = policy.layout();
        self.actions[t]
            .iter()
            .enumerate()
            .map(|(h, &a)| self.old_probs[t][layout.range(h).start + a].max(PROB_FLOOR).ln())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.observations.len(),
            self.actions.len(),
            self.log_probs.len(),
            self.values.len(),
            self.dones.len(),
            self.utilities.len(),
        ];
        let finished = [self.advantages.len(), self.targets.len()];
        if lens.iter().any(|&l| l != n)
            || finished.iter().any(|&l| l != 0 && l != n)
            || (!self.old_probs.is_empty() && self.old_probs.len() != n)
        {
            return Err(Error::Shape("rollout buffer columns differ in length".into()));
        }
        if self.advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("non-finite advantage in buffer".into()));
        }
        Ok(())
    }

    /// Concatenates finished rollouts (used by the auxiliary phase).
    pub fn concat(parts: &[RolloutBuffer]) -> Self {
        let mut out = Self::default();
        for p in parts {
            out.observations.extend_from_slice(&p.observations);
            out.actions.extend_from_slice(&p.actions);
            out.log_probs.extend_from_slice(&p.log_probs);
            out.rewards.extend_from_slice(&p.rewards);
            out.values.extend_from_slice(&p.values);
            out.dones.extend_from_slice(&p.dones);
            out.utilities.extend_from_slice(&p.utilities);
            out.advantages.extend_from_slice(&p.advantages);
            out.targets.extend_from_slice(&p.targets);
            out.old_probs.extend_from_slice(&p.old_probs);
        }
        out
    }
}

/// Zero-mean, unit-variance copy of `adv[idx]`; a constant batch maps to zeros.
pub fn normalized_advantages(adv: &[f64], idx: &[usize]) -> Vec<f64> {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| adv[i]).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (adv[i] - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    idx.iter().map(|&i| (adv[i] - mean) / (std + 1e-8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppg::oracle::gae_direct_sum;
    use crate::rng::named_stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_terminal_step() {
        let (a, v) = compute_gae(&[1.0], &[0.0, 0.0], &[true], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn null_signal() {
        let (a, _) = compute_gae(&[0.0; 7], &[0.0; 8], &[false, false, true, false, false, false, true], 0.9, 0.8).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0, 0.0], &[false, false], 0.9, 0.9).is_err());
        assert!(compute_gae(&[1.0], &[0.0, 0.0], &[false, true], 0.9, 0.9).is_err());
    }

    #[test]
    fn recursion_matches_direct_sum_on_random_episodes() {
        let mut rng = named_stream(17, "gae-test");
        for _ in 0..100 {
            let t = 100;
            let rewards: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..=t).map(|_| rng.random_range(-5.0..5.0)).collect();
            let dones: Vec<bool> = (0..t).map(|_| rng.random_bool(0.05)).collect();
            let gamma = rng.random_range(0.8..1.0);
            let lambda = rng.random_range(0.0..=1.0);
            let (a, v) = compute_gae(&rewards, &values, &dones, gamma, lambda).unwrap();
            let (ao, vo) = gae_direct_sum(&rewards, &values, &dones, gamma, lambda).unwrap();
            for i in 0..t {
                assert!((a[i] - ao[i]).abs() <= 1e-10, "step {i}: {} vs {}", a[i], ao[i]);
                assert!((v[i] - vo[i]).abs() <= 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn unit_discount_gives_reward_to_go(rewards in proptest::collection::vec(-3.0f64..3.0, 1..40)) {
            let t = rewards.len();
            let mut dones = vec![false; t];
            dones[t - 1] = true;
            let (a, _) = compute_gae(&rewards, &vec![0.0; t + 1], &dones, 1.0, 1.0).unwrap();
            for i in 0..t {
                let togo: f64 = rewards[i..].iter().sum();
                prop_assert!((a[i] - togo).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn normalization_has_zero_mean_unit_variance() {
        let adv = [1.0, 4.0, -2.0, 7.0, 0.5];
        let idx = [0, 1, 3, 4];
        let n = normalized_advantages(&adv, &idx);
        let mean = n.iter().sum::<f64>() / 4.0;
        let var = n.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
        assert_eq!(normalized_advantages(&[3.0, 3.0], &[0, 1]), vec![0.0, 0.0]);
    }

    #[test]
    fn validate_catches_ragged_columns() {
        let mut b = RolloutBuffer::default();
        b.push(vec![0.0], vec![0], 0.0, 1.0, 0.0, true, 1.0);
        b.validate().unwrap();
        b.rewards.push(2.0);
        assert!(b.validate().is_err());
    }
}
