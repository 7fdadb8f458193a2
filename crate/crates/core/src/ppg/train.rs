use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::buffer::{normalized_advantages, RolloutBuffer};
use super::config::{Mode, PpgConfig};
use super::loss::{aux_joint_loss, policy_loss, value_loss, LossBreakdown};
use super::policy::{value_net, PolicyNet};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::neuro::{AdamState, Checkpoint, Mlp};
use crate::rng::{derive_seed, named_stream, StreamRng};

/// Summary of one policy iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Environment steps taken so far, including this iteration.
    pub env_steps: usize,
    /// Mean per-step reward over the rollout.
    pub mean_reward: f64,
    /// Mean per-step utility over the rollout.
    pub mean_utility: f64,
    pub losses: LossBreakdown,
    /// Whether an auxiliary phase ran at the end of this iteration.
    pub aux_phase: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub mode: Mode,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub initial: Checkpoint,
    pub final_checkpoint: Checkpoint,
}

pub const TRAIN_CSV_HEADER: &str =
    "iteration,env_steps,mean_reward,policy_loss,value_loss,aux_loss,kl,clip_fraction";

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let l = &r.losses;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iteration, r.env_steps, r.mean_reward, l.policy_loss, l.value_loss, l.aux_loss, l.kl, l.clip_fraction
            )
            .unwrap();
        }
        out
    }

    /// Mean rollout utility over the final `fraction` of iterations (at least one).
    pub fn final_utility(&self, fraction: f64) -> Option<f64> {
        tail_mean(&self.records, fraction, |r| r.mean_utility)
    }

    pub fn final_reward(&self, fraction: f64) -> Option<f64> {
        tail_mean(&self.records, fraction, |r| r.mean_reward)
    }

    pub fn policy(&self) -> Result<PolicyNet> {
        policy_from_checkpoint(&self.final_checkpoint)
    }
}

fn tail_mean(records: &[IterationRecord], fraction: f64, f: fn(&IterationRecord) -> f64) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let k = ((records.len() as f64 * fraction).ceil() as usize).clamp(1, records.len());
    Some(records[records.len() - k..].iter().map(f).sum::<f64>() / k as f64)
}

/// Rebuilds the policy net stored under the name `policy`.
pub fn policy_from_checkpoint(ckpt: &Checkpoint) -> Result<PolicyNet> {
    let mlp = ckpt.net("policy").ok_or_else(|| Error::Checkpoint("no policy net".into()))?;
    let heads = ckpt
        .meta
        .get("heads")
        .ok_or_else(|| Error::Checkpoint("missing heads metadata".into()))?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|e| Error::Checkpoint(format!("bad head size {s:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    PolicyNet::from_mlp(mlp.clone(), &heads)
}

struct Learner {
    cfg: PpgConfig,
    seed: u64,
    policy: PolicyNet,
    value: Mlp,
    policy_opt: AdamState,
    value_opt: AdamState,
    shuffle_rng: StreamRng,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> f64 {
        if self.n == 0 { 0.0 } else { self.sum / self.n as f64 }
    }
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

fn dump_minibatch(phase: &str, iteration: usize, buf: &RolloutBuffer, idx: &[usize], what: &str) -> Error {
    let mut msg = format!("non-finite {what} in {phase} phase at iteration {iteration}; minibatch:");
    for &t in idx {
        write!(
            msg,
            "\n  step {t}: obs={:?} action={:?} reward={} value={} adv={} target={}",
            buf.observations[t],
            buf.actions[t],
            buf.rewards[t],
            buf.values[t],
            buf.advantages.get(t).copied().unwrap_or(f64::NAN),
            buf.targets.get(t).copied().unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    log::error!("{msg}");
    Error::Numeric(msg)
}

fn all_finite(v: f64, grad: &[f64]) -> bool {
    v.is_finite() && grad.iter().all(|g| g.is_finite())
}

impl Learner {
    fn new<E: Environment + ?Sized>(env: &E, cfg: &PpgConfig, seed: u64) -> Result<Self> {
        let mut init = named_stream(seed, "ppg/init");
        let obs_dim = env.observation_dim();
        let policy = PolicyNet::new(obs_dim, &env.head_sizes(), &cfg.hidden, cfg.policy_init_gain, &mut init)?;
        let value = value_net(obs_dim, &cfg.hidden, &mut init)?;
        Ok(Self {
            policy_opt: AdamState::new(policy.mlp.params().len(), cfg.policy_optim),
            value_opt: AdamState::new(value.params().len(), cfg.value_optim),
            policy,
            value,
            cfg: cfg.clone(),
            seed,
            shuffle_rng: named_stream(seed, "ppg/shuffle"),
        })
    }

    fn checkpoint(&self, iterations: usize) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        let heads: Vec<String> = self.policy.layout().sizes().iter().map(|s| s.to_string()).collect();
        ckpt.meta.insert("heads".into(), heads.join(","));
        ckpt.meta.insert("mode".into(), self.cfg.mode.as_str().into());
        ckpt.meta.insert("seed".into(), self.seed.to_string());
        ckpt.meta.insert("iterations".into(), iterations.to_string());
        ckpt.nets.push(("policy".into(), self.policy.mlp.clone()));
        ckpt.nets.push(("value".into(), self.value.clone()));
        ckpt
    }

    fn minibatches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);
        order.chunks(self.cfg.minibatch_size).map(<[usize]>::to_vec).collect()
    }

    fn value_step(&mut self, buf: &RolloutBuffer, idx: &[usize], iteration: usize, phase: &str) -> Result<f64> {
        let (loss, mut grad) = value_loss(&self.value, buf, idx)?;
        if !all_finite(loss, &grad) {
            return Err(dump_minibatch(phase, iteration, buf, idx, "value loss"));
        }
        clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
        self.value_opt.step(self.value.params_mut(), &grad)?;
        Ok(loss)
    }

    /// Policy epochs then value epochs on one fresh rollout.
    fn policy_phase(&mut self, buf: &RolloutBuffer, iteration: usize) -> Result<LossBreakdown> {
        let (mut obj, mut ratio, mut kl, mut clipf, mut vloss) =
            (Mean::default(), Mean::default(), Mean::default(), Mean::default(), Mean::default());
        for _ in 0..self.cfg.policy_epochs {
            for idx in self.minibatches(buf.len()) {
                let adv = normalized_advantages(&buf.advantages, &idx);
                let r = policy_loss(&self.policy, buf, &idx, &adv, self.cfg.clip, self.cfg.kl_coeff)?;
                if !all_finite(r.objective, &r.grad) {
                    return Err(dump_minibatch("policy", iteration, buf, &idx, "surrogate objective"));
                }
                let mut descent: Vec<f64> = r.grad.iter().map(|g| -g).collect();
                clip_grad_norm(&mut descent, self.cfg.max_grad_norm);
                self.policy_opt.step(self.policy.mlp.params_mut(), &descent)?;
                obj.add(r.objective);
                ratio.add(r.mean_ratio);
                kl.add(r.kl);
                clipf.add(r.clip_fraction);
            }
        }
        for _ in 0..self.cfg.value_epochs {
            for idx in self.minibatches(buf.len()) {
                vloss.add(self.value_step(buf, &idx, iteration, "value")?);
            }
        }
        Ok(LossBreakdown {
            policy_loss: obj.get(),
            value_loss: vloss.get(),
            aux_loss: 0.0,
            joint_loss: 0.0,
            mean_ratio: ratio.get(),
            kl: kl.get(),
            clip_fraction: clipf.get(),
        })
    }

    /// Distils value targets into the policy net under a cloning constraint.
    fn aux_phase(&mut self, parts: &[RolloutBuffer], iteration: usize) -> Result<(f64, f64)> {
        let mut all = RolloutBuffer::concat(parts);
        all.snapshot(&self.policy)?;
        let (mut aux, mut joint) = (Mean::default(), Mean::default());
        for _ in 0..self.cfg.aux_epochs {
            for idx in self.minibatches(all.len()) {
                let j = aux_joint_loss(&self.policy, &all, &idx, self.cfg.clone_coeff)?;
                if !all_finite(j.joint, &j.grad) {
                    return Err(dump_minibatch("auxiliary", iteration, &all, &idx, "joint loss"));
                }
                let mut grad = j.grad;
                clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
                self.policy_opt.step(self.policy.mlp.params_mut(), &grad)?;
                self.value_step(&all, &idx, iteration, "auxiliary")?;
                aux.add(j.aux_loss);
                joint.add(j.joint);
            }
        }
        Ok((aux.get(), joint.get()))
    }
}

/// Seed of training episode `k`.
fn train_episode_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, &format!("train/episode/{k}"))
}

/// Trains a policy on `env`. Deterministic in `(config, seed)`.
pub fn train<E: Environment + ?Sized>(env: &mut E, config: &PpgConfig, seed: u64) -> Result<TrainReport> {
    config.validate()?;
    let mut learner = Learner::new(env, config, seed)?;
    let initial = learner.checkpoint(0);
    let mut records = Vec::new();
    let mut act_rng = named_stream(seed, "ppg/actions");
    let mut episode = 0;
    let mut obs = env.reset(train_episode_seed(seed, episode))?;
    let mut pending: Vec<RolloutBuffer> = Vec::new();

    for iteration in 0..config.n_iterations() {
        let mut buf = RolloutBuffer::default();
        for _ in 0..config.rollout_len {
            let out = learner.policy.forward(&obs)?;
            let action = out.sample(&mut act_rng);
            let log_prob = out.log_prob(&action);
            let value = learner.value.forward(&obs)?.output()[0];
            let tr = env.step(&action)?;
            let next = if tr.done {
                episode += 1;
                env.reset(train_episode_seed(seed, episode))?
            } else {
                tr.observation
            };
            buf.push(std::mem::replace(&mut obs, next), action, log_prob, tr.reward, value, tr.done, tr.info.utility);
        }
        let bootstrap = learner.value.forward(&obs)?.output()[0];
        buf.finish(bootstrap, config.discount, config.gae_lambda)?;
        buf.snapshot(&learner.policy)?;
        buf.validate()?;

        let mut losses = learner.policy_phase(&buf, iteration)?;
        let n = buf.len() as f64;
        let mean_reward = buf.rewards.iter().sum::<f64>() / n;
        let mean_utility = buf.utilities.iter().sum::<f64>() / n;

        let mut aux_phase = false;
        if config.mode == Mode::Ppg {
            pending.push(buf);
            if pending.len() == config.n_policy_iters {
                let (aux, joint) = learner.aux_phase(&pending, iteration)?;
                losses.aux_loss = aux;
                losses.joint_loss = joint;
                aux_phase = true;
                pending.clear();
            }
        }
        let rec = IterationRecord {
            iteration,
            env_steps: (iteration + 1) * config.rollout_len,
            mean_reward,
            mean_utility,
            losses,
            aux_phase,
        };
        log::debug!(
            "{} seed {seed} iteration {iteration}: reward {:.4} utility {:.4} kl {:.2e}",
            config.mode.as_str(),
            rec.mean_reward,
            rec.mean_utility,
            rec.losses.kl
        );
        records.push(rec);
    }
    Ok(TrainReport {
        mode: config.mode,
        seed,
        final_checkpoint: learner.checkpoint(records.len()),
        records,
        initial,
    })
}
