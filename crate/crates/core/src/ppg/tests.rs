use super::*;
use crate::baselines::RandomController;
use crate::env::{run_controller, Environment, Scenario, StepInfo, Transition, TschEnv};
use crate::error::{Error, Result};

fn bandit_config(mode: Mode) -> PpgConfig {
    let mut c = PpgConfig {
        mode,
        rollout_len: 64,
        minibatch_size: 32,
        total_steps: 5_000,
        hidden: vec![16],
        n_policy_iters: 2,
        aux_epochs: 2,
        ..PpgConfig::default()
    };
    c.policy_optim.lr = 3e-3;
    c.value_optim.lr = 3e-3;
    c
}

fn better_arm_prob(report: &TrainReport, better: usize) -> f64 {
    report.policy().unwrap().forward(&[1.0]).unwrap().heads[0].probs()[better]
}

#[test]
fn zero_budget_yields_initial_checkpoint_only() {
    let cfg = PpgConfig { total_steps: 0, ..bandit_config(Mode::Ppg) };
    let r = train(&mut TwoArmBandit { better_arm: 0 }, &cfg, 1).unwrap();
    assert!(r.records.is_empty());
    assert_eq!(r.initial, r.final_checkpoint);
    assert_eq!(r.to_csv(), format!("{TRAIN_CSV_HEADER}\n"));
}

#[test]
fn ppo_mode_leaves_aux_head_untouched() {
    let cfg = PpgConfig { kl_coeff: 0.0, total_steps: 640, ..bandit_config(Mode::Ppo) };
    let r = train(&mut TwoArmBandit { better_arm: 1 }, &cfg, 2).unwrap();
    let before = policy_from_checkpoint(&r.initial).unwrap();
    let after = r.policy().unwrap();
    assert_ne!(before.mlp.params(), after.mlp.params());
    assert_eq!(before.aux_head_params(), after.aux_head_params());
    assert!(r.records.iter().all(|x| x.losses.aux_loss == 0.0 && !x.aux_phase));
}

#[test]
fn ppg_without_an_aux_phase_matches_ppo_exactly() {
    let ppo = PpgConfig { total_steps: 640, ..bandit_config(Mode::Ppo) };
    let ppg = PpgConfig { mode: Mode::Ppg, n_policy_iters: 1_000, ..ppo.clone() };
    let a = train(&mut TwoArmBandit { better_arm: 1 }, &ppo, 3).unwrap();
    let b = train(&mut TwoArmBandit { better_arm: 1 }, &ppg, 3).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_checkpoint.nets, b.final_checkpoint.nets);
}

#[test]
fn ppg_runs_aux_phases_on_schedule() {
    let cfg = PpgConfig { total_steps: 64 * 5, ..bandit_config(Mode::Ppg) };
    let r = train(&mut TwoArmBandit { better_arm: 0 }, &cfg, 4).unwrap();
    let flags: Vec<bool> = r.records.iter().map(|x| x.aux_phase).collect();
    assert_eq!(flags, vec![false, true, false, true, false]);
    assert!(r.records[1].losses.joint_loss >= r.records[1].losses.aux_loss);
}

#[test]
fn training_is_deterministic_in_seed() {
    let cfg = PpgConfig { total_steps: 64 * 4, ..bandit_config(Mode::Ppg) };
    let a = train(&mut TwoArmBandit { better_arm: 0 }, &cfg, 9).unwrap();
    let b = train(&mut TwoArmBandit { better_arm: 0 }, &cfg, 9).unwrap();
    let c = train(&mut TwoArmBandit { better_arm: 0 }, &cfg, 10).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.final_checkpoint.to_text(), b.final_checkpoint.to_text());
    assert_ne!(a.final_checkpoint.to_text(), c.final_checkpoint.to_text());
}

#[test]
fn bandit_is_learned() {
    let r = train(&mut TwoArmBandit { better_arm: 1 }, &bandit_config(Mode::Ppo), 11).unwrap();
    assert!(better_arm_prob(&r, 1) >= 0.95, "{}", better_arm_prob(&r, 1));
    let r = train(&mut TwoArmBandit { better_arm: 0 }, &bandit_config(Mode::Ppg), 12).unwrap();
    assert!(better_arm_prob(&r, 0) >= 0.95, "{}", better_arm_prob(&r, 0));
}

/// Bandit whose payout overflows the squared value error.
struct Exploding;

impl Environment for Exploding {
    fn observation_dim(&self) -> usize {
        1
    }
    fn head_sizes(&self) -> Vec<usize> {
        vec![2]
    }
    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }
    fn step(&mut self, _action: &[usize]) -> Result<Transition> {
        Ok(Transition { observation: vec![1.0], reward: 1e200, done: true, info: StepInfo::default() })
    }
}

#[test]
fn non_finite_loss_aborts_with_minibatch_dump() {
    let cfg = PpgConfig { total_steps: 64, ..bandit_config(Mode::Ppo) };
    match train(&mut Exploding, &cfg, 1) {
        Err(Error::Numeric(msg)) => {
            assert!(msg.contains("value phase"), "{msg}");
            assert!(msg.contains("step ") && msg.contains("obs=[1.0]"), "{msg}");
        }
        other => panic!("expected a numeric abort, got {other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let cfg = PpgConfig { clip: 1.5, ..bandit_config(Mode::Ppo) };
    assert!(matches!(train(&mut TwoArmBandit { better_arm: 0 }, &cfg, 1), Err(Error::Config(_))));
}

fn small_scenario() -> Scenario {
    let mut s = Scenario::reference().with_nodes(4);
    s.episode_len = 5;
    s
}

fn untrained_report(scenario: &Scenario, seed: u64) -> TrainReport {
    let cfg = PpgConfig { total_steps: 0, hidden: vec![8], ..PpgConfig::default() };
    train(&mut TschEnv::new(scenario.clone()).unwrap(), &cfg, seed).unwrap()
}

#[test]
fn evaluation_is_deterministic() {
    let s = small_scenario();
    let r = untrained_report(&s, 1);
    let a = evaluate(&r.initial, &s, 4, 77).unwrap();
    let b = evaluate(&r.initial, &s, 4, 77).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evaluation_rejects_a_mismatched_scenario() {
    let s = small_scenario();
    let r = untrained_report(&s, 1);
    let other = s.with_nodes(5);
    assert!(matches!(evaluate(&r.initial, &other, 1, 0), Err(Error::Shape(_))));
}

#[test]
fn uniform_policy_matches_random_scheduler() {
    // A zero output layer makes every head exactly uniform; sampling from it
    // is the random scheduler, so compare that against the baseline itself.
    let s = small_scenario();
    let mut policy = policy_from_checkpoint(&untrained_report(&s, 1).initial).unwrap();
    let n_out = policy.mlp.output_size();
    for u in 0..n_out {
        let (w, b) = policy.mlp.output_unit_offsets(u);
        policy.mlp.params_mut()[w].iter_mut().for_each(|x| *x = 0.0);
        policy.mlp.params_mut()[b] = 0.0;
    }
    let mut sampled = SampledPolicy { policy, rng: crate::rng::named_stream(5, "sampled") };
    let n = 40;
    let a = run_controller(&s, &mut sampled, n, 123).unwrap();
    let b = run_controller(&s, &mut RandomController::new(6), n, 123).unwrap();
    let (alo, ahi) = a.utility.ci95(n);
    let (blo, bhi) = b.utility.ci95(n);
    assert!(alo <= bhi && blo <= ahi, "CIs [{alo}, {ahi}] and [{blo}, {bhi}] do not overlap");
}

struct SampledPolicy {
    policy: PolicyNet,
    rng: crate::rng::StreamRng,
}

impl crate::env::Controller for SampledPolicy {
    fn act(
        &mut self,
        env: &TschEnv,
        obs: &crate::env::Observation,
    ) -> Result<(crate::model::ScheduleMatrix, crate::model::PowerAllocation)> {
        let a = self.policy.forward(&obs.to_vec())?.sample(&mut self.rng);
        crate::env::decode_action(&env.scenario().network, &a)
    }
}
