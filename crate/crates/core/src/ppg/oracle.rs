//! Slow reference computations used to cross-check the fast paths.

use rand::Rng;

use super::buffer::RolloutBuffer;
use super::loss::{aux_joint_loss, policy_loss, value_loss};
use super::policy::{value_net, PolicyNet};
use crate::error::{Error, Result};
use crate::neuro::gradcheck::{central_difference, max_relative_error};
use crate::neuro::Mlp;
use crate::rng::named_stream;

/// Advantages by explicit summation of discounted TD errors, cut at the
/// first terminal step. Quadratic in the sequence length.
pub fn gae_direct_sum(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Shape("length mismatch".into()));
    }
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if dones[t] { 0.0 } else { values[t + 1] };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    let mut adv = vec![0.0; n];
    for t in 0..n {
        let mut weight = 1.0;
        for l in t..n {
            adv[t] += weight * delta[l];
            if dones[l] {
                break;
            }
            weight *= gamma * lambda;
        }
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Worst relative error between analytic and central-difference gradients
/// of each loss on one random small problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientErrors {
    pub policy: f64,
    pub value: f64,
    pub joint: f64,
}

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Builds a random policy, value net and rollout from `seed`, perturbs the
/// policy away from its snapshot, and checks all three loss gradients.
pub fn loss_gradient_errors(seed: u64) -> Result<GradientErrors> {
    let mut rng = named_stream(seed, "loss-gradcheck");
    let obs_dim = rng.random_range(2..5);
    let heads: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..5)).collect();
    let hidden = vec![rng.random_range(3..7)];
    let old = PolicyNet::new(obs_dim, &heads, &hidden, 1.0, &mut rng)?;
    let value = value_net(obs_dim, &hidden, &mut rng)?;
    let mut buf = RolloutBuffer::default();
    for _ in 0..8 {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = old.forward(&obs)?;
        let a = out.sample(&mut rng);
        buf.push(obs, a.clone(), out.log_prob(&a), rng.random_range(-1.0..1.0), 0.0, false, 0.0);
    }
    buf.advantages = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    buf.targets = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    buf.snapshot(&old)?;
    let mut current = old.clone();
    current.mlp.params_mut().iter_mut().for_each(|w| *w += 0.05 * rng.random_range(-1.0..1.0));
    let idx = [0, 2, 3, 5, 7];
    let adv: Vec<f64> = idx.iter().map(|&i| buf.advantages[i]).collect();

    let rebuild = |w: &[f64]| {
        PolicyNet::from_mlp(Mlp::from_params(current.mlp.sizes(), w.to_vec()).unwrap(), &heads).unwrap()
    };
    // A wide clip keeps every sample away from the kink of the min.
    let (clip, kl_coeff, clone_coeff) = (0.9, 0.3, 0.7);

    let analytic = policy_loss(&current, &buf, &idx, &adv, clip, kl_coeff)?.grad;
    let numeric = central_difference(
        |w| policy_loss(&rebuild(w), &buf, &idx, &adv, clip, kl_coeff).unwrap().objective,
        current.mlp.params(),
        FD_STEP,
    );
    let policy = max_relative_error(&analytic, &numeric);

    let (_, analytic) = value_loss(&value, &buf, &idx)?;
    let numeric = central_difference(
        |w| value_loss(&Mlp::from_params(value.sizes(), w.to_vec()).unwrap(), &buf, &idx).unwrap().0,
        value.params(),
        FD_STEP,
    );
    let value_err = max_relative_error(&analytic, &numeric);

    let analytic = aux_joint_loss(&current, &buf, &idx, clone_coeff)?.grad;
    let numeric = central_difference(
        |w| aux_joint_loss(&rebuild(w), &buf, &idx, clone_coeff).unwrap().joint,
        current.mlp.params(),
        FD_STEP,
    );
    let joint = max_relative_error(&analytic, &numeric);

    Ok(GradientErrors { policy, value: value_err, joint })
}
