//! Fast oracle and gradient suites runnable from the command line.

use rand::Rng;

use crate::baselines::{msf_step, random_schedule, round_robin_schedule, MsfParams, MsfState};
use crate::env::{decode_action, Environment, Scenario, TschEnv};
use crate::error::Result;
use crate::model::{success_probability, validate_schedule, NetworkConfig, QosSpec};
use crate::ppg::compute_gae;
use crate::ppg::oracle::{gae_direct_sum, loss_gradient_errors};
use crate::rng::named_stream;
use crate::sim::{generate_topology, inject_traffic, run_slotframe, FadingModel, Network, SimState};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn success_identity() -> Result<Check> {
    let mut rng = named_stream(1, "selftest/identity");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (d, e): (f64, f64) = (rng.random(), rng.random());
        worst = worst.max((success_probability(d, e)? - (1.0 - d) * (1.0 - e)).abs());
    }
    Ok(check("success_identity", worst <= 1e-12, format!("max deviation {worst:e}")))
}

fn reward_reconstruction() -> Result<Check> {
    let mut env = TschEnv::new(Scenario::reference())?;
    let heads = env.head_sizes();
    let mut rng = named_stream(2, "selftest/reward");
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    let mut episode = 0;
    while steps < 1000 {
        env.reset(episode)?;
        episode += 1;
        while !env.is_done() && steps < 1000 {
            let a: Vec<usize> = heads.iter().map(|&h| rng.random_range(0..h)).collect();
            let s = env.step_raw(&a)?;
            let w = env.scenario().weights;
            let lhs = s.reward + env.scenario().lambda_qos * s.info.violations as f64;
            let rhs = w.throughput * s.info.throughput + w.efficiency * s.info.efficiency;
            worst = worst.max((lhs - rhs).abs());
            steps += 1;
        }
    }
    Ok(check("reward_reconstruction", worst <= 1e-12, format!("max deviation {worst:e} over {steps} steps")))
}

fn gradients() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let e = loss_gradient_errors(seed)?;
        worst = worst.max(e.policy).max(e.value).max(e.joint);
    }
    Ok(check("loss_gradients", worst <= 1e-4, format!("max relative error {worst:e} over 20 networks")))
}

fn gae() -> Result<Check> {
    let mut rng = named_stream(3, "selftest/gae");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = 100;
        let r: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..=t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d: Vec<bool> = (0..t).map(|_| rng.random_bool(0.05)).collect();
        let (a, _) = compute_gae(&r, &v, &d, 0.99, 0.95)?;
        let (o, _) = gae_direct_sum(&r, &v, &d, 0.99, 0.95)?;
        worst = a.iter().zip(&o).fold(worst, |m, (x, y)| m.max((x - y).abs()));
    }
    Ok(check("gae_oracle", worst <= 1e-10, format!("max deviation {worst:e} over 100 episodes")))
}

fn constraint_safety() -> Result<Check> {
    let config = NetworkConfig::default();
    let spec = Scenario::reference().action_spec();
    let mut rng = named_stream(4, "selftest/actions");
    let mut bad = 0;
    for _ in 0..10_000 {
        let a: Vec<usize> = spec.head_sizes().iter().map(|&h| rng.random_range(0..h)).collect();
        let (s, _) = decode_action(&config, &a)?;
        bad += usize::from(!validate_schedule(&config, &s)?.is_empty());
    }
    let mut msf = MsfState::new(&config, MsfParams::default(), 5);
    let mut sim = SimState::new(config.n_nodes, 0.9, 10, 6)?;
    let topology = generate_topology(config.n_nodes, 3, 100.0, 7)?;
    let network = Network { config: config.clone(), topology, qos: QosSpec::uniform(config.n_nodes, 16, 0.1, 0.1), fading: FadingModel::Rayleigh };
    let mut last = None;
    for step in 0..1000 {
        let (s, p) = msf_step(&mut msf, &config, last.as_ref());
        let (r, _) = random_schedule(&config, step);
        let (rr, _) = round_robin_schedule(&config);
        for sched in [&s, &r, &rr] {
            bad += usize::from(!validate_schedule(&config, sched)?.is_empty());
        }
        inject_traffic(&mut sim, &network.topology, &network.qos);
        last = Some(run_slotframe(&mut sim, &network, &s, &p)?);
    }
    Ok(check("constraint_safety", bad == 0, format!("{bad} invalid schedules")))
}

fn conservation_and_limit() -> Result<Check> {
    let mut broken = 0;
    for run in 0..100u64 {
        let mut rng = named_stream(run, "selftest/conservation");
        let n = rng.random_range(1..12);
        let mut config = NetworkConfig { n_nodes: n, ..NetworkConfig::default() };
        config.slotframe_len = rng.random_range(2..10);
        let topology = generate_topology(n, 3, 100.0, run)?;
        let network = Network { config: config.clone(), topology, qos: QosSpec::uniform(n, rng.random_range(1..20), 0.1, 0.1), fading: FadingModel::Rayleigh };
        let mut sim = SimState::new(n, rng.random_range(0.0..1.0), rng.random_range(1..6), run)?;
        for frame in 0..20 {
            let (s, p) = random_schedule(&config, run * 100 + frame);
            inject_traffic(&mut sim, &network.topology, &network.qos);
            run_slotframe(&mut sim, &network, &s, &p)?;
            let t = sim.totals;
            broken += usize::from(t.generated != t.delivered + sim.queued() + t.dropped_deadline + t.dropped_overflow);
        }
    }
    let config = NetworkConfig::default();
    let topology = generate_topology(config.n_nodes, 3, 100.0, 1)?;
    let network = Network { config: config.clone(), topology, qos: QosSpec::uniform(config.n_nodes, 16, 0.1, 0.1), fading: FadingModel::Fixed(1.0) };
    let mut sim = SimState::new(config.n_nodes, 1.0, 10, 2)?;
    let (s, p) = round_robin_schedule(&config);
    let mut errors = 0;
    for _ in 0..20 {
        inject_traffic(&mut sim, &network.topology, &network.qos);
        let r = run_slotframe(&mut sim, &network, &s, &p)?;
        errors += (0..config.n_nodes).map(|i| r.stats.node_totals(i).errors).sum::<u64>();
    }
    Ok(check(
        "conservation_and_interference_free_limit",
        broken == 0 && errors == 0,
        format!("{broken} conservation breaks, {errors} round-robin errors"),
    ))
}

/// Runs every suite; a suite that errors counts as failed.
pub fn selftest() -> Vec<Check> {
    let suites: [(&'static str, fn() -> Result<Check>); 6] = [
        ("success_identity", success_identity),
        ("reward_reconstruction", reward_reconstruction),
        ("loss_gradients", gradients),
        ("gae_oracle", gae),
        ("constraint_safety", constraint_safety),
        ("conservation_and_interference_free_limit", conservation_and_limit),
    ];
    suites
        .into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| check(name, false, format!("error: {e}"))))
        .collect()
}
