//! Episodic decision process over the simulator.
//!
//! One step is one slotframe. The action picks, for every node, one
//! `(slot, channel)` cell and one power level; the reward is the scenario
//! utility minus a linear penalty per QoS violation.
//!
//! Observation layout (length `2 + 3N`):
//! `[w_throughput, w_efficiency, queue_norm[0..N], hop_norm[0..N], prev_success[0..N]]`
//! with the weights normalised onto the simplex.
//!
//! Raw action layout (length `2N`): `[cell_0, power_0, cell_1, power_1, ...]`,
//! where `cell = slot * M + channel`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    energy_efficiency, qos_violations, throughput, utility, NetworkConfig, PowerAllocation,
    QosSpec, ScheduleMatrix, UtilityWeights,
};
use crate::rng::derive_seed;
use crate::sim::{generate_topology, inject_traffic, run_slotframe, FadingModel, Network, SimState, SlotframeReport};

/// Everything needed to instantiate an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub qos: QosSpec,
    pub weights: UtilityWeights,
    pub traffic_rate: f64,
    pub queue_capacity: usize,
    pub episode_len: usize,
    pub max_hops: u32,
    pub area_side: f64,
    pub lambda_qos: f64,
    pub fading: FadingModel,
    /// Seed of the collection tree; fixed per scenario so the policy faces one topology.
    pub topology_seed: u64,
}

impl Scenario {
    /// Desk-scale reference: ten nodes, four channels, sixteen-slot frames.
    pub fn reference() -> Self {
        let network = NetworkConfig::default();
        let n = network.n_nodes;
        Self {
            qos: QosSpec::uniform(n, network.slotframe_len as u64, 0.1, 0.1),
            network,
            weights: UtilityWeights { throughput: 1.0, efficiency: 1.0 },
            traffic_rate: 0.3,
            queue_capacity: 10,
            episode_len: 20,
            max_hops: 3,
            area_side: 100.0,
            lambda_qos: 0.5,
            fading: FadingModel::Rayleigh,
            topology_seed: 1,
        }
    }

    /// Copy of this scenario with `n` nodes and per-node QoS vectors resized.
    pub fn with_nodes(&self, n: usize) -> Self {
        let mut s = self.clone();
        s.network.n_nodes = n;
        s.qos = QosSpec {
            deadline: vec![self.qos.deadline[0]; n],
            max_drop: vec![self.qos.max_drop[0]; n],
            max_err: vec![self.qos.max_err[0]; n],
        };
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.qos.validate(self.network.n_nodes)?;
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.traffic_rate) {
            return Err(Error::Config("traffic_rate must lie in [0, 1]".into()));
        }
        if self.queue_capacity == 0 || self.episode_len == 0 || self.max_hops == 0 {
            return Err(Error::Config(
                "queue_capacity, episode_len and max_hops must be at least 1".into(),
            ));
        }
        if !(self.area_side > 0.0) {
            return Err(Error::Config("area_side must be positive".into()));
        }
        if !(self.lambda_qos >= 0.0) {
            return Err(Error::Config("lambda_qos must be non-negative".into()));
        }
        if let FadingModel::Fixed(f) = self.fading {
            if !(f >= 0.0) {
                return Err(Error::Config("fixed fading must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        2 + 3 * self.network.n_nodes
    }

    pub fn action_spec(&self) -> ActionSpec {
        ActionSpec {
            n_nodes: self.network.n_nodes,
            n_cells: self.network.n_cells(),
            n_powers: self.network.power_levels_mw.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub weights: (f64, f64),
    pub queue_norm: Vec<f64>,
    pub hop_norm: Vec<f64>,
    pub prev_success: Vec<f64>,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + 3 * self.queue_norm.len());
        v.push(self.weights.0);
        v.push(self.weights.1);
        v.extend_from_slice(&self.queue_norm);
        v.extend_from_slice(&self.hop_norm);
        v.extend_from_slice(&self.prev_success);
        v
    }
}

/// Factorised action space: per node, one categorical over cells and one over powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpec {
    pub n_nodes: usize,
    pub n_cells: usize,
    pub n_powers: usize,
}

impl ActionSpec {
    /// Sizes of the categorical heads in raw-action order.
    pub fn head_sizes(&self) -> Vec<usize> {
        (0..self.n_nodes).flat_map(|_| [self.n_cells, self.n_powers]).collect()
    }
}

/// Maps raw per-node indices to a schedule with exactly one cell per node.
pub fn decode_action(
    config: &NetworkConfig,
    raw: &[usize],
) -> Result<(ScheduleMatrix, PowerAllocation)> {
    let n = config.n_nodes;
    if raw.len() != 2 * n {
        return Err(Error::Action(format!("expected {} indices, got {}", 2 * n, raw.len())));
    }
    let mut schedule = ScheduleMatrix::for_config(config);
    let mut levels = Vec::with_capacity(n);
    for (node, pair) in raw.chunks_exact(2).enumerate() {
        let (cell, power) = (pair[0], pair[1]);
        if cell >= config.n_cells() {
            return Err(Error::Action(format!("node {node}: cell index {cell} out of range")));
        }
        if power >= config.power_levels_mw.len() {
            return Err(Error::Action(format!("node {node}: power index {power} out of range")));
        }
        schedule.set(node, cell / config.n_channels, cell % config.n_channels, true);
        levels.push(power);
    }
    Ok((schedule, PowerAllocation::from_levels(config, &levels)?))
}

/// Utility minus `lambda_qos` per violated QoS bound.
pub fn reward_fn(
    th: f64,
    eta: f64,
    weights: &UtilityWeights,
    violations: usize,
    lambda_qos: f64,
) -> f64 {
    utility(th, eta, weights) - lambda_qos * violations as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub throughput: f64,
    pub efficiency: f64,
    pub utility: f64,
    pub penalty: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Generic episodic interface used by the trainer.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    /// Sizes of the categorical action heads.
    fn head_sizes(&self) -> Vec<usize>;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[usize]) -> Result<Transition>;
}

/// Flat form of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// The TSCH allocation environment.
#[derive(Debug, Clone)]
pub struct TschEnv {
    scenario: Scenario,
    network: Network,
    sim: SimState,
    steps: usize,
    prev_success: Vec<f64>,
    last_report: Option<SlotframeReport>,
}

impl TschEnv {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.network.n_nodes;
        let topology = generate_topology(n, scenario.max_hops, scenario.area_side, scenario.topology_seed)?;
        let network = Network {
            config: scenario.network.clone(),
            topology,
            qos: scenario.qos.clone(),
            fading: scenario.fading,
        };
        let sim = SimState::new(n, scenario.traffic_rate, scenario.queue_capacity, 0)?;
        Ok(Self {
            scenario,
            network,
            sim,
            steps: 0,
            prev_success: vec![1.0; n],
            last_report: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn last_report(&self) -> Option<&SlotframeReport> {
        self.last_report.as_ref()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.scenario.episode_len
    }

    /// Starts a new episode with fresh queues and random streams.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let n = self.scenario.network.n_nodes;
        self.sim = SimState::new(n, self.scenario.traffic_rate, self.scenario.queue_capacity, seed)?;
        self.steps = 0;
        self.prev_success = vec![1.0; n];
        self.last_report = None;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        let cap = self.scenario.queue_capacity as f64;
        let max_hops = f64::from(self.scenario.max_hops);
        Observation {
            weights: self.scenario.weights.normalized(),
            queue_norm: self.sim.queues.iter().map(|q| q.len() as f64 / cap).collect(),
            hop_norm: self.network.topology.hop_count.iter().map(|&h| f64::from(h) / max_hops).collect(),
            prev_success: self.prev_success.clone(),
        }
    }

    /// Decodes a raw action and runs one slotframe.
    pub fn step_raw(&mut self, raw: &[usize]) -> Result<EnvStep> {
        let (schedule, powers) = decode_action(&self.scenario.network, raw)?;
        self.step_schedule(&schedule, &powers)
    }

    /// Runs one slotframe under an arbitrary schedule (baselines may hold several cells).
    pub fn step_schedule(
        &mut self,
        schedule: &ScheduleMatrix,
        powers: &PowerAllocation,
    ) -> Result<EnvStep> {
        if self.is_done() {
            return Err(Error::Lifecycle("step called on a finished episode".into()));
        }
        inject_traffic(&mut self.sim, &self.network.topology, &self.network.qos);
        let report = run_slotframe(&mut self.sim, &self.network, schedule, powers)?;
        let th = throughput(&report.stats, schedule)?;
        let eta = match energy_efficiency(th, schedule, powers) {
            Ok(eta) => eta,
            Err(Error::UndefinedEfficiency) => 0.0,
            Err(e) => return Err(e),
        };
        let violations = qos_violations(&report.stats, &self.network.qos)?.len();
        let u = utility(th, eta, &self.scenario.weights);
        let penalty = self.scenario.lambda_qos * violations as f64;
        let reward = reward_fn(th, eta, &self.scenario.weights, violations, self.scenario.lambda_qos);

        for (i, s) in self.prev_success.iter_mut().enumerate() {
            let t = report.stats.node_totals(i);
            *s = if t.attempts == 0 { 1.0 } else { t.successes as f64 / t.attempts as f64 };
        }
        self.steps += 1;
        self.last_report = Some(report);
        Ok(EnvStep {
            observation: self.observation(),
            reward,
            done: self.is_done(),
            info: StepInfo { throughput: th, efficiency: eta, utility: u, penalty, violations },
        })
    }
}

impl Environment for TschEnv {
    fn observation_dim(&self) -> usize {
        self.scenario.observation_dim()
    }

    fn head_sizes(&self) -> Vec<usize> {
        self.scenario.action_spec().head_sizes()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        TschEnv::reset(self, seed).map(|o| o.to_vec())
    }

    fn step(&mut self, action: &[usize]) -> Result<Transition> {
        let s = self.step_raw(action)?;
        Ok(Transition { observation: s.observation.to_vec(), reward: s.reward, done: s.done, info: s.info })
    }
}

/// Anything that emits a slotframe schedule from the environment state.
pub trait Controller {
    fn begin_episode(&mut self, _env: &TschEnv, _episode_seed: u64) {}
    fn act(&mut self, env: &TschEnv, obs: &Observation) -> Result<(ScheduleMatrix, PowerAllocation)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }

    /// Normal-approximation 95% interval of the mean for `n` samples.
    pub fn ci95(&self, n: usize) -> (f64, f64) {
        let half = 1.96 * self.std / (n.max(1) as f64).sqrt();
        (self.mean - half, self.mean + half)
    }
}

/// Per-step averages over one episode; `violations` is the episode total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub utility: f64,
    pub throughput: f64,
    pub efficiency: f64,
    pub violations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub utility: MeanStd,
    pub throughput: MeanStd,
    pub efficiency: MeanStd,
    pub violations: MeanStd,
    pub episodes: Vec<EpisodeSummary>,
}

impl EvalStats {
    pub fn from_episodes(episodes: Vec<EpisodeSummary>) -> Self {
        let col = |f: fn(&EpisodeSummary) -> f64| MeanStd::of(&episodes.iter().map(f).collect::<Vec<_>>());
        Self {
            utility: col(|e| e.utility),
            throughput: col(|e| e.throughput),
            efficiency: col(|e| e.efficiency),
            violations: col(|e| e.violations),
            episodes,
        }
    }
}

/// Seed of evaluation episode `index` under base seed `seed`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &format!("eval/episode/{index}"))
}

/// Runs `n_episodes` full episodes under `controller`; episode seeds depend
/// only on `seed`, so different controllers see the same traffic.
pub fn run_controller<C: Controller + ?Sized>(
    scenario: &Scenario,
    controller: &mut C,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let mut env = TschEnv::new(scenario.clone())?;
    let mut episodes = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let ep_seed = episode_seed(seed, e);
        let mut obs = env.reset(ep_seed)?;
        controller.begin_episode(&env, ep_seed);
        let mut acc = EpisodeSummary::default();
        let mut steps = 0.0;
        while !env.is_done() {
            let (schedule, powers) = controller.act(&env, &obs)?;
            let s = env.step_schedule(&schedule, &powers)?;
            acc.reward += s.reward;
            acc.utility += s.info.utility;
            acc.throughput += s.info.throughput;
            acc.efficiency += s.info.efficiency;
            acc.violations += s.info.violations as f64;
            steps += 1.0;
            obs = s.observation;
        }
        acc.reward /= steps;
        acc.utility /= steps;
        acc.throughput /= steps;
        acc.efficiency /= steps;
        episodes.push(acc);
    }
    Ok(EvalStats::from_episodes(episodes))
}
