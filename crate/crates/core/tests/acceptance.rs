//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured quantities, then asserts. Every tolerance is pinned below.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use tsch_core::baselines::{msf_step, random_schedule, round_robin_schedule, MsfParams, MsfState};
use tsch_core::env::{decode_action, run_controller, Controller, Environment, Observation, Scenario, TschEnv};
use tsch_core::harness::{median, run_convergence, run_evaluate, run_scaling, Algorithm, ExperimentConfig};
use tsch_core::model::{
    success_probability, utility, validate_schedule, NetworkConfig, PowerAllocation, QosSpec, ScheduleMatrix,
    UtilityWeights,
};
use tsch_core::neuro::Mlp;
use tsch_core::ppg::{
    aux_joint_loss, compute_gae, evaluate, policy_loss, train, value_loss, value_net, Mode, PolicyNet, PpgConfig,
    RolloutBuffer, TwoArmBandit,
};
use tsch_core::rng::named_stream;
use tsch_core::sim::{generate_topology, inject_traffic, run_slotframe, FadingModel, Network, SimState};

const IDENTITY_TOL: f64 = 1e-12;
const LINEARITY_REL_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_MAGNITUDE_FLOOR: f64 = 1e-6;
const GAE_TOL: f64 = 1e-10;
const BANDIT_TARGET: f64 = 0.95;
const BANDIT_MIN_SEEDS: usize = 4;
const BANDIT_STEPS: usize = 5_000;
const TOY_OPTIMALITY: f64 = 0.95;
const REFERENCE_STEPS: usize = 200_000;
const REFERENCE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const MSF_MARGIN: f64 = 1.2;
const FINAL_FRACTION: f64 = 0.1;

fn report(n: u32, ok: bool, elapsed: Duration, budget: Duration, detail: &str) {
    let in_time = elapsed <= budget;
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} ({:.1}s of {:.0}s) {detail}", elapsed.as_secs_f64(), budget.as_secs_f64());
}

#[test]
fn criterion_1_equation_identities() {
    let start = Instant::now();
    let mut rng = named_stream(101, "acceptance/1");
    let mut identity_dev: f64 = 0.0;
    for _ in 0..1000 {
        let (d, e): (f64, f64) = (rng.random(), rng.random());
        identity_dev = identity_dev.max((success_probability(d, e).unwrap() - (1.0 - d) * (1.0 - e)).abs());
    }

    let scenario = Scenario::reference();
    let mut env = TschEnv::new(scenario.clone()).unwrap();
    let heads = env.head_sizes();
    let (mut exact_linear, mut linear_rel, mut recon_exact, mut steps) = (true, 0.0f64, true, 0);
    let mut episode = 0;
    while steps < 1000 {
        env.reset(episode).unwrap();
        episode += 1;
        while !env.is_done() && steps < 1000 {
            let a: Vec<usize> = heads.iter().map(|&h| rng.random_range(0..h)).collect();
            let s = env.step_raw(&a).unwrap();
            let w = scenario.weights;
            let (th, eta) = (s.info.throughput, s.info.efficiency);
            let u = utility(th, eta, &w);
            // Scaling by a power of two is exact in binary floating point.
            let k = [0.25, 0.5, 2.0, 4.0, 8.0][steps % 5];
            let scaled = UtilityWeights { throughput: k * w.throughput, efficiency: k * w.efficiency };
            exact_linear &= utility(th, eta, &scaled) == k * u;
            let alpha: f64 = rng.random_range(0.0..10.0);
            let scaled = UtilityWeights { throughput: alpha * w.throughput, efficiency: alpha * w.efficiency };
            let dev = (utility(th, eta, &scaled) - alpha * u).abs() / (alpha * u).abs().max(1e-300);
            linear_rel = linear_rel.max(if u == 0.0 { 0.0 } else { dev });
            let rebuilt = s.reward + scenario.lambda_qos * s.info.violations as f64;
            recon_exact &= rebuilt == w.throughput * th + w.efficiency * eta && s.info.utility == u;
            steps += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = identity_dev <= IDENTITY_TOL && exact_linear && linear_rel <= LINEARITY_REL_TOL && recon_exact;
    report(
        1,
        ok,
        elapsed,
        Duration::from_secs(1),
        &format!(
            "identity dev {identity_dev:e}; linearity exact {exact_linear}, rel dev {linear_rel:e}; reconstruction exact {recon_exact}"
        ),
    );
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(1), "took {elapsed:?}");
}

fn central_difference(f: impl Fn(&[f64]) -> f64, params: &[f64]) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    a.iter()
        .zip(n)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(GRAD_MAGNITUDE_FLOOR))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_2_gradient_suite() {
    let start = Instant::now();
    let (mut worst_policy, mut worst_value, mut worst_joint) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let mut rng = named_stream(seed, "acceptance/2");
        let obs_dim = rng.random_range(2..6);
        let heads: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..6)).collect();
        let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(3..8)).collect();
        let old = PolicyNet::new(obs_dim, &heads, &hidden, 1.0, &mut rng).unwrap();
        let value = value_net(obs_dim, &hidden, &mut rng).unwrap();
        let mut buf = RolloutBuffer::default();
        for _ in 0..10 {
            let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = old.forward(&obs).unwrap();
            let a = out.sample(&mut rng);
            buf.push(obs, a.clone(), out.log_prob(&a), 0.0, 0.0, false, 0.0);
        }
        buf.advantages = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        buf.targets = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        buf.snapshot(&old).unwrap();
        let mut current = old.clone();
        current.mlp.params_mut().iter_mut().for_each(|w| *w += 0.05 * rng.random_range(-1.0..1.0));
        let idx: Vec<usize> = (0..10).filter(|_| rng.random_bool(0.7)).collect();
        let idx = if idx.is_empty() { vec![0] } else { idx };
        let adv: Vec<f64> = idx.iter().map(|&i| buf.advantages[i]).collect();
        let rebuild = |w: &[f64]| PolicyNet::from_mlp(Mlp::from_params(current.mlp.sizes(), w.to_vec()).unwrap(), &heads).unwrap();

        // A wide clip range keeps the samples away from the kink of the min.
        let g = policy_loss(&current, &buf, &idx, &adv, 0.9, 0.2).unwrap().grad;
        let n = central_difference(|w| policy_loss(&rebuild(w), &buf, &idx, &adv, 0.9, 0.2).unwrap().objective, current.mlp.params());
        worst_policy = worst_policy.max(relative_error(&g, &n));

        let (_, g) = value_loss(&value, &buf, &idx).unwrap();
        let n = central_difference(|w| value_loss(&Mlp::from_params(value.sizes(), w.to_vec()).unwrap(), &buf, &idx).unwrap().0, value.params());
        worst_value = worst_value.max(relative_error(&g, &n));

        let g = aux_joint_loss(&current, &buf, &idx, 0.8).unwrap().grad;
        let n = central_difference(|w| aux_joint_loss(&rebuild(w), &buf, &idx, 0.8).unwrap().joint, current.mlp.params());
        worst_joint = worst_joint.max(relative_error(&g, &n));
    }
    let elapsed = start.elapsed();
    let ok = worst_policy <= GRAD_REL_TOL && worst_value <= GRAD_REL_TOL && worst_joint <= GRAD_REL_TOL;
    report(
        2,
        ok,
        elapsed,
        Duration::from_secs(60),
        &format!("max relative error: policy {worst_policy:e}, value {worst_value:e}, joint {worst_joint:e}"),
    );
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(60));
}

/// Advantage by explicit discounted sum of TD errors, stopping at the first terminal.
fn direct_sum_advantages(r: &[f64], v: &[f64], done: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    (0..r.len())
        .map(|t| {
            let mut total = 0.0;
            for l in t..r.len() {
                let next = if done[l] { 0.0 } else { v[l + 1] };
                total += (gamma * lambda).powi((l - t) as i32) * (r[l] + gamma * next - v[l]);
                if done[l] {
                    break;
                }
            }
            total
        })
        .collect()
}

#[test]
fn criterion_3_gae_oracle() {
    let start = Instant::now();
    let mut rng = named_stream(303, "acceptance/3");
    let (mut worst, mut terminations) = (0.0f64, 0);
    for _ in 0..100 {
        let t = rng.random_range(50..150);
        let r: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..=t).map(|_| rng.random_range(-5.0..5.0)).collect();
        let done: Vec<bool> = (0..t).map(|_| rng.random_bool(0.04)).collect();
        terminations += done[..t - 1].iter().filter(|&&d| d).count();
        let (gamma, lambda) = (rng.random_range(0.9..=1.0), rng.random_range(0.0..=1.0));
        let (a, targets) = compute_gae(&r, &v, &done, gamma, lambda).unwrap();
        let o = direct_sum_advantages(&r, &v, &done, gamma, lambda);
        for i in 0..t {
            worst = worst.max((a[i] - o[i]).abs()).max((targets[i] - (o[i] + v[i])).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= GAE_TOL && terminations > 0;
    report(3, ok, elapsed, Duration::from_secs(5), &format!("max deviation {worst:e}, {terminations} mid-sequence terminations"));
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(5));
}

#[test]
fn criterion_4_constraint_safety() {
    let start = Instant::now();
    let config = NetworkConfig::default();
    let heads = Scenario::reference().action_spec().head_sizes();
    let mut rng = named_stream(404, "acceptance/4");
    let mut bad_actions = 0;
    for _ in 0..10_000 {
        let a: Vec<usize> = heads.iter().map(|&h| rng.random_range(0..h)).collect();
        let (s, _) = decode_action(&config, &a).unwrap();
        bad_actions += usize::from(!validate_schedule(&config, &s).unwrap().is_empty());
    }
    let topology = generate_topology(config.n_nodes, 3, 100.0, 4).unwrap();
    let network = Network {
        config: config.clone(),
        topology,
        qos: QosSpec::uniform(config.n_nodes, 16, 0.1, 0.1),
        fading: FadingModel::Rayleigh,
    };
    let mut sim = SimState::new(config.n_nodes, 0.9, 10, 4).unwrap();
    let mut msf = MsfState::new(&config, MsfParams::default(), 4);
    let (mut bad_baseline, mut max_cells) = (0, 0);
    let mut last = None;
    for step in 0..1000u64 {
        let (s, p) = msf_step(&mut msf, &config, last.as_ref());
        max_cells = max_cells.max(s.total_cells());
        let (r, _) = random_schedule(&config, step);
        let (rr, _) = round_robin_schedule(&config);
        for sched in [&s, &r, &rr] {
            bad_baseline += usize::from(!validate_schedule(&config, sched).unwrap().is_empty());
        }
        inject_traffic(&mut sim, &network.topology, &network.qos);
        last = Some(run_slotframe(&mut sim, &network, &s, &p).unwrap());
    }
    let elapsed = start.elapsed();
    let ok = bad_actions == 0 && bad_baseline == 0 && max_cells > config.n_nodes;
    report(
        4,
        ok,
        elapsed,
        Duration::from_secs(10),
        &format!("{bad_actions} invalid decoded actions, {bad_baseline} invalid baseline schedules, MSF peak {max_cells} cells"),
    );
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(10));
}

#[test]
fn criterion_5_conservation_and_limits() {
    let start = Instant::now();
    let mut broken = 0;
    for run in 0..100u64 {
        let mut rng = named_stream(run, "acceptance/5");
        let n = rng.random_range(1..15);
        let config = NetworkConfig {
            n_nodes: n,
            n_channels: rng.random_range(1..5),
            slotframe_len: rng.random_range(1..20),
            ..NetworkConfig::default()
        };
        let topology = generate_topology(n, rng.random_range(1..4), 100.0, run).unwrap();
        let network = Network {
            config: config.clone(),
            topology,
            qos: QosSpec::uniform(n, rng.random_range(1..40), 0.1, 0.1),
            fading: FadingModel::Rayleigh,
        };
        let mut sim = SimState::new(n, rng.random_range(0.0..=1.0), rng.random_range(1..8), run).unwrap();
        for frame in 0..30 {
            let (s, p) = random_schedule(&config, run * 1000 + frame);
            inject_traffic(&mut sim, &network.topology, &network.qos);
            run_slotframe(&mut sim, &network, &s, &p).unwrap();
            let t = sim.totals;
            broken += usize::from(t.generated != t.delivered + sim.queued() + t.dropped_deadline + t.dropped_overflow);
        }
    }

    let config = NetworkConfig::default();
    let topology = generate_topology(config.n_nodes, 3, 100.0, 1).unwrap();
    let network = Network {
        config: config.clone(),
        topology: topology.clone(),
        qos: QosSpec::uniform(config.n_nodes, 16, 0.1, 0.1),
        fading: FadingModel::Fixed(1.0),
    };
    let (s, p) = round_robin_schedule(&config);
    // Certificate that every link clears the threshold on its own.
    let min_snr = (0..config.n_nodes)
        .map(|i| {
            let d = topology.position[i].distance(&topology.receiver_position(i));
            p.get(i) * config.reference_gain * d.powf(-config.pathloss_exponent) / config.noise_floor_mw
        })
        .fold(f64::INFINITY, f64::min);
    let mut sim = SimState::new(config.n_nodes, 1.0, 10, 5).unwrap();
    let (mut errors, mut attempts) = (0, 0);
    for _ in 0..50 {
        inject_traffic(&mut sim, &network.topology, &network.qos);
        let r = run_slotframe(&mut sim, &network, &s, &p).unwrap();
        for i in 0..config.n_nodes {
            let t = r.stats.node_totals(i);
            errors += t.errors;
            attempts += t.attempts;
        }
    }
    let elapsed = start.elapsed();
    let ok = broken == 0 && errors == 0 && attempts > 0 && min_snr >= config.sinr_threshold;
    report(
        5,
        ok,
        elapsed,
        Duration::from_secs(30),
        &format!("{broken} conservation breaks; round robin: {errors} errors in {attempts} attempts, min SNR {min_snr:.1}"),
    );
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(30));
}

fn bandit_config() -> PpgConfig {
    let mut c = PpgConfig {
        mode: Mode::Ppo,
        total_steps: BANDIT_STEPS,
        rollout_len: 64,
        minibatch_size: 32,
        hidden: vec![16],
        ..PpgConfig::default()
    };
    c.policy_optim.lr = 3e-3;
    c.value_optim.lr = 3e-3;
    c
}

#[test]
fn criterion_6_bandit_sanity() {
    let start = Instant::now();
    let cfg = bandit_config();
    let mut probs = Vec::new();
    for (i, seed) in [11u64, 12, 13, 14, 15].into_iter().enumerate() {
        let better = i % 2;
        let r = train(&mut TwoArmBandit { better_arm: better }, &cfg, seed).unwrap();
        let steps = r.records.last().map_or(0, |x| x.env_steps);
        assert!(steps <= BANDIT_STEPS);
        let p = r.policy().unwrap().forward(&[1.0]).unwrap().heads[0].probs()[better];
        probs.push(p);
    }
    let hits = probs.iter().filter(|&&p| p >= BANDIT_TARGET).count();
    let elapsed = start.elapsed();
    let ok = hits >= BANDIT_MIN_SEEDS;
    report(6, ok, elapsed, Duration::from_secs(60), &format!("better-arm probabilities {probs:.4?}; {hits}/5 seeds reach {BANDIT_TARGET}"));
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(60));
}

fn toy_scenario() -> Scenario {
    let mut s = Scenario::reference().with_nodes(2);
    s.network.n_channels = 2;
    s.network.slotframe_len = 2;
    s.qos = QosSpec::uniform(2, 2, 0.1, 0.1);
    s.fading = FadingModel::Fixed(1.0);
    s.traffic_rate = 0.5;
    s.episode_len = 10;
    s
}

/// Replays one fixed (cell, power) assignment every step.
struct Fixed(Vec<usize>);

impl Controller for Fixed {
    fn act(&mut self, env: &TschEnv, _obs: &Observation) -> tsch_core::Result<(ScheduleMatrix, PowerAllocation)> {
        decode_action(&env.scenario().network, &self.0)
    }
}

#[test]
fn criterion_7_small_instance_optimality() {
    let start = Instant::now();
    let scenario = toy_scenario();
    let (n_eval, eval_seed) = (50, 7007);
    let spec = scenario.action_spec();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let per_node = spec.n_cells * spec.n_powers;
    let mut enumerated = 0;
    for code in 0..per_node.pow(2) {
        let (a, b) = (code / per_node, code % per_node);
        let raw = vec![a / spec.n_powers, a % spec.n_powers, b / spec.n_powers, b % spec.n_powers];
        let u = run_controller(&scenario, &mut Fixed(raw.clone()), n_eval, eval_seed).unwrap().utility.mean;
        enumerated += 1;
        if u > best.0 {
            best = (u, raw);
        }
    }
    let mut cfg = PpgConfig { total_steps: 30_000, hidden: vec![32], ..PpgConfig::default() };
    cfg.policy_optim.lr = 1e-3;
    cfg.value_optim.lr = 1e-3;
    let r = train(&mut TschEnv::new(scenario.clone()).unwrap(), &cfg, 7).unwrap();
    let learned = evaluate(&r.final_checkpoint, &scenario, n_eval, eval_seed).unwrap().utility.mean;
    let ratio = learned / best.0;
    let elapsed = start.elapsed();
    let ok = enumerated == 256 && ratio >= TOY_OPTIMALITY;
    report(
        7,
        ok,
        elapsed,
        Duration::from_secs(300),
        &format!("PPG utility {learned:.4} vs brute-force optimum {:.4} at {:?} over {enumerated} assignments (ratio {ratio:.4})", best.0, best.1),
    );
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(300));
}

fn reference_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.trainer.total_steps = REFERENCE_STEPS;
    cfg.sweep.seeds = REFERENCE_SEEDS.to_vec();
    cfg.sweep.algorithms = vec![Algorithm::Ppg, Algorithm::Ppo, Algorithm::Msf];
    cfg.sweep.n_eval = 20;
    cfg
}

#[test]
fn criterion_8_directional_reproduction() {
    let start = Instant::now();
    let cfg = reference_config();
    let dir = tempfile::tempdir().unwrap();
    let runs = run_convergence(&cfg, dir.path(), 0).unwrap();
    let final_utility = |a: Algorithm| {
        let v: Vec<f64> = runs.iter().filter(|r| r.algorithm == a).map(|r| r.report.final_utility(FINAL_FRACTION).unwrap()).collect();
        median(&v)
    };
    let (u_ppg, u_ppo) = (final_utility(Algorithm::Ppg), final_utility(Algorithm::Ppo));
    let rows = run_evaluate(&cfg, dir.path(), &[], 0).unwrap();
    let throughput = |prefix: &str| {
        let v: Vec<f64> = rows.iter().filter(|r| r.source.starts_with(prefix)).map(|r| r.stats.throughput.mean).collect();
        median(&v)
    };
    let (th_ppg, th_ppo, th_msf) = (throughput("ppg_"), throughput("ppo_"), throughput("msf"));
    let elapsed = start.elapsed();
    let utility_ok = u_ppg >= u_ppo;
    let margin_ok = th_ppg >= MSF_MARGIN * th_msf;
    report(
        8,
        utility_ok && margin_ok,
        elapsed,
        Duration::from_secs(1800),
        &format!(
            "median final utility PPG {u_ppg:.4} vs PPO {u_ppo:.4} ({}); median throughput PPG {th_ppg:.4}, PPO {th_ppo:.4}, MSF {th_msf:.4}, PPG/MSF {:.3} vs required {MSF_MARGIN} ({})",
            if utility_ok { "ok" } else { "not met" },
            th_ppg / th_msf,
            if margin_ok { "ok" } else { "not met" }
        ),
    );
    assert!(utility_ok, "PPG median final utility {u_ppg} below PPO {u_ppo}");
    assert!(margin_ok, "PPG median throughput {th_ppg} below {MSF_MARGIN} x MSF {th_msf}");
    assert!(elapsed <= Duration::from_secs(1800));
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_nodes = 4;
    cfg.scenario.episode_len = 5;
    cfg.trainer.total_steps = 1024;
    cfg.trainer.rollout_len = 128;
    cfg.trainer.n_policy_iters = 2;
    cfg.trainer.aux_epochs = 2;
    cfg.trainer.hidden = vec![16];
    cfg.sweep.seeds = vec![1, 2];
    cfg.sweep.node_counts = vec![3, 4];
    cfg.sweep.algorithms = Algorithm::ALL.to_vec();
    cfg.sweep.n_eval = 3;
    cfg
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let cfg = small_config();
    let outputs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run_convergence(&cfg, dir.path(), 0).unwrap();
            run_scaling(&cfg, &dir.path().join("scaling"), 0).unwrap();
            run_evaluate(&cfg, dir.path(), &[], 0).unwrap();
            read_outputs(dir.path())
        })
        .collect();
    let csvs = outputs[0].iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let identical = outputs[0] == outputs[1];
    let elapsed = start.elapsed();
    let ok = identical && csvs >= 8;
    report(9, ok, elapsed, Duration::from_secs(120), &format!("{} files ({csvs} CSV) compared across two runs, identical: {identical}", outputs[0].len()));
    assert!(ok);
    assert!(elapsed <= Duration::from_secs(120));
}
