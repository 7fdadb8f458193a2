use crate::error::{Error, Result};
use crate::neuro::{kl_categorical, Mlp};

use super::buffer::RolloutBuffer;
use super::policy::PolicyNet;

/// Scalars logged per update phase. Auxiliary fields stay zero when no
/// auxiliary phase ran.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub aux_loss: f64,
    pub joint_loss: f64,
    pub mean_ratio: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Clipped surrogate objective with KL penalty, and its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyObjective {
    /// Value to be maximised.
    pub objective: f64,
    pub mean_ratio: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    /// Gradient of `objective`.
    pub grad: Vec<f64>,
}

/// Auxiliary value fit plus behavioural-cloning KL, and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct JointObjective {
    pub aux_loss: f64,
    pub kl: f64,
    /// Value to be minimised: `aux_loss + clone_coeff * kl`.
    pub joint: f64,
    pub grad: Vec<f64>,
}

fn check_batch(buf: &RolloutBuffer, idx: &[usize]) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::Shape("empty minibatch".into()));
    }
    if let Some(&i) = idx.iter().find(|&&i| i >= buf.len()) {
        return Err(Error::Shape(format!("minibatch index {i} past buffer length {}", buf.len())));
    }
    if buf.old_probs.len() != buf.len() {
        return Err(Error::Lifecycle("reference policy snapshot missing".into()));
    }
    Ok(())
}

/// Sum over heads of KL(old || current) and the matching logit gradient
/// `p - p_old`, scaled by `scale`, written into `upstream`.
fn kl_and_grad(
    policy: &PolicyNet,
    old: &[f64],
    current: &[f64],
    scale: f64,
    upstream: &mut [f64],
) -> Result<f64> {
    let layout = policy.layout();
    let mut kl = 0.0;
    for h in 0..layout.n_heads() {
        let r = layout.range(h);
        kl += kl_categorical(&old[r.clone()], &current[r.clone()])?;
        for j in r {
            upstream[j] += scale * (current[j] - old[j]);
        }
    }
    Ok(kl)
}

/// Surrogate objective over the minibatch `idx`, with `advantages` aligned to `idx`.
pub fn policy_loss(
    policy: &PolicyNet,
    buf: &RolloutBuffer,
    idx: &[usize],
    advantages: &[f64],
    clip: f64,
    kl_coeff: f64,
) -> Result<PolicyObjective> {
    check_batch(buf, idx)?;
    if advantages.len() != idx.len() {
        return Err(Error::Shape("advantages not aligned with minibatch".into()));
    }
    let b = idx.len() as f64;
    let layout = policy.layout();
    let mut grad = vec![0.0; policy.mlp.params().len()];
    let (mut surr_sum, mut ratio_sum, mut kl_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for (&t, &adv) in idx.iter().zip(advantages) {
        let out = policy.forward(&buf.observations[t])?;
        let ratio = (out.log_prob(&buf.actions[t]) - buf.old_log_prob(policy, t)).exp();
        let bounded = ratio.clamp(1.0 - clip, 1.0 + clip);
        let (unclipped, pessimistic) = (ratio * adv, bounded * adv);
        surr_sum += unclipped.min(pessimistic);
        ratio_sum += ratio;
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        // d surr / d log pi: the unclipped branch carries the gradient.
        let g = if unclipped <= pessimistic { unclipped } else { 0.0 };

        let current = out.probs();
        let mut upstream = vec![0.0; layout.n_logits() + 1];
        kl_sum += kl_and_grad(policy, &buf.old_probs[t], &current, -kl_coeff / b, &mut upstream)?;
        if g != 0.0 {
            for (h, &a) in buf.actions[t].iter().enumerate() {
                let r = layout.range(h);
                let base = r.start;
                for j in r {
                    let onehot = if j - base == a { 1.0 } else { 0.0 };
                    upstream[j] += g / b * (onehot - current[j]);
                }
            }
        }
        policy.mlp.backward_into(&out.cache, &upstream, &mut grad)?;
    }
    let kl = kl_sum / b;
    Ok(PolicyObjective {
        objective: surr_sum / b - kl_coeff * kl,
        mean_ratio: ratio_sum / b,
        kl,
        clip_fraction: clipped as f64 / b,
        grad,
    })
}

/// Half mean squared error of the value net against the stored targets.
pub fn value_loss(value: &Mlp, buf: &RolloutBuffer, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
    if idx.is_empty() || buf.targets.len() != buf.len() {
        return Err(Error::Shape("value loss needs a nonempty batch with targets".into()));
    }
    let b = idx.len() as f64;
    let mut grad = vec![0.0; value.params().len()];
    let mut loss = 0.0;
    for &t in idx {
        let cache = value.forward(&buf.observations[t])?;
        let err = cache.output()[0] - buf.targets[t];
        loss += 0.5 * err * err;
        value.backward_into(&cache, &[err / b], &mut grad)?;
    }
    Ok((loss / b, grad))
}

/// Joint auxiliary objective on the policy net.
pub fn aux_joint_loss(
    policy: &PolicyNet,
    buf: &RolloutBuffer,
    idx: &[usize],
    clone_coeff: f64,
) -> Result<JointObjective> {
    check_batch(buf, idx)?;
    if buf.targets.len() != buf.len() {
        return Err(Error::Shape("auxiliary loss needs value targets".into()));
    }
    let b = idx.len() as f64;
    let layout = policy.layout();
    let mut grad = vec![0.0; policy.mlp.params().len()];
    let (mut aux, mut kl_sum) = (0.0, 0.0);
    for &t in idx {
        let out = policy.forward(&buf.observations[t])?;
        let err = out.aux_value - buf.targets[t];
        aux += 0.5 * err * err;
        let mut upstream = vec![0.0; layout.n_logits() + 1];
        upstream[layout.aux_index()] = err / b;
        kl_sum += kl_and_grad(policy, &buf.old_probs[t], &out.probs(), clone_coeff / b, &mut upstream)?;
        policy.mlp.backward_into(&out.cache, &upstream, &mut grad)?;
    }
    let (aux_loss, kl) = (aux / b, kl_sum / b);
    Ok(JointObjective { aux_loss, kl, joint: aux_loss + clone_coeff * kl, grad })
}
