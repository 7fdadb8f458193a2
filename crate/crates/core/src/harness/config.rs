//! Experiment configuration files.
//!
//! A configuration is a TOML document with up to five tables; every key is
//! optional and falls back to the reference setting.
//!
//! ```toml
//! [scenario]            # network, traffic and QoS
//! n_nodes = 10
//! fading = "rayleigh"   # or "fixed", using fixed_fading as the multiplier
//!
//! [trainer]             # learner hyperparameters
//! total_steps = 200000
//! policy_optim = { lr = 3e-4 }
//!
//! [sweep]
//! node_counts = [5, 10, 15]
//! seeds = [1, 2, 3, 4, 5]
//! algorithms = ["ppg", "ppo", "msf", "random", "round_robin"]
//!
//! [msf]
//! hi = 0.75
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::MsfParams;
use crate::env::Scenario;
use crate::error::{Error, Result};
use crate::model::{NetworkConfig, QosSpec, UtilityWeights};
use crate::ppg::{Mode, PpgConfig};
use crate::sim::FadingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppg,
    Ppo,
    Msf,
    Random,
    RoundRobin,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Ppg, Algorithm::Ppo, Algorithm::Msf, Algorithm::Random, Algorithm::RoundRobin];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ppg => "ppg",
            Algorithm::Ppo => "ppo",
            Algorithm::Msf => "msf",
            Algorithm::Random => "random",
            Algorithm::RoundRobin => "round_robin",
        }
    }

    /// Trainer mode for learners, `None` for fixed heuristics.
    pub fn learner_mode(self) -> Option<Mode> {
        match self {
            Algorithm::Ppg => Some(Mode::Ppg),
            Algorithm::Ppo => Some(Mode::Ppo),
            _ => None,
        }
    }

    pub fn is_learner(self) -> bool {
        self.learner_mode().is_some()
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    Rayleigh,
    Fixed,
}

/// Flat scenario description; expands to per-node vectors for any node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub n_channels: usize,
    pub slotframe_len: usize,
    pub noise_floor_mw: f64,
    pub pathloss_exponent: f64,
    pub reference_gain: f64,
    pub sinr_threshold: f64,
    pub power_levels_mw: Vec<f64>,
    /// Per-packet deadline in slots; defaults to one slotframe.
    pub deadline_slots: Option<u64>,
    pub max_drop: f64,
    pub max_err: f64,
    pub throughput_weight: f64,
    pub efficiency_weight: f64,
    pub traffic_rate: f64,
    pub queue_capacity: usize,
    pub episode_len: usize,
    pub max_hops: u32,
    pub area_side: f64,
    pub lambda_qos: f64,
    pub fading: FadingKind,
    pub fixed_fading: f64,
    pub topology_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let r = Scenario::reference();
        Self {
            n_nodes: r.network.n_nodes,
            n_channels: r.network.n_channels,
            slotframe_len: r.network.slotframe_len,
            noise_floor_mw: r.network.noise_floor_mw,
            pathloss_exponent: r.network.pathloss_exponent,
            reference_gain: r.network.reference_gain,
            sinr_threshold: r.network.sinr_threshold,
            power_levels_mw: r.network.power_levels_mw.clone(),
            deadline_slots: None,
            max_drop: r.qos.max_drop[0],
            max_err: r.qos.max_err[0],
            throughput_weight: r.weights.throughput,
            efficiency_weight: r.weights.efficiency,
            traffic_rate: r.traffic_rate,
            queue_capacity: r.queue_capacity,
            episode_len: r.episode_len,
            max_hops: r.max_hops,
            area_side: r.area_side,
            lambda_qos: r.lambda_qos,
            fading: FadingKind::Rayleigh,
            fixed_fading: 1.0,
            topology_seed: r.topology_seed,
        }
    }
}

impl ScenarioConfig {
    /// Scenario with `n_nodes` nodes and every other field from this block.
    pub fn build(&self, n_nodes: usize) -> Result<Scenario> {
        let network = NetworkConfig {
            n_nodes,
            n_channels: self.n_channels,
            slotframe_len: self.slotframe_len,
            noise_floor_mw: self.noise_floor_mw,
            pathloss_exponent: self.pathloss_exponent,
            reference_gain: self.reference_gain,
            sinr_threshold: self.sinr_threshold,
            power_levels_mw: self.power_levels_mw.clone(),
        };
        let deadline = self.deadline_slots.unwrap_or(self.slotframe_len as u64);
        let scenario = Scenario {
            qos: QosSpec::uniform(n_nodes, deadline, self.max_drop, self.max_err),
            network,
            weights: UtilityWeights { throughput: self.throughput_weight, efficiency: self.efficiency_weight },
            traffic_rate: self.traffic_rate,
            queue_capacity: self.queue_capacity,
            episode_len: self.episode_len,
            max_hops: self.max_hops,
            area_side: self.area_side,
            lambda_qos: self.lambda_qos,
            fading: match self.fading {
                FadingKind::Rayleigh => FadingModel::Rayleigh,
                FadingKind::Fixed => FadingModel::Fixed(self.fixed_fading),
            },
            topology_seed: self.topology_seed,
        };
        scenario.validate().map_err(|e| match e {
            Error::Config(m) | Error::Model(m) | Error::Input(m) => Error::Config(m),
            other => other,
        })?;
        Ok(scenario)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.build(self.n_nodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub node_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    /// Evaluation episodes per (algorithm, node count, seed).
    pub n_eval: usize,
    /// Base seed of the evaluation episodes.
    pub eval_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            node_counts: vec![5, 10, 15],
            seeds: vec![1, 2, 3, 4, 5],
            algorithms: vec![Algorithm::Ppg, Algorithm::Ppo, Algorithm::Msf],
            n_eval: 20,
            eval_seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub trainer: PpgConfig,
    pub sweep: SweepConfig,
    pub msf: MsfParams,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.scenario()?;
        self.trainer.validate()?;
        let s = &self.sweep;
        if s.seeds.is_empty() {
            return Err(Error::Config("sweep.seeds must not be empty".into()));
        }
        if s.node_counts.is_empty() || s.node_counts.contains(&0) {
            return Err(Error::Config("sweep.node_counts must be nonempty and at least 1".into()));
        }
        if s.algorithms.is_empty() {
            return Err(Error::Config("sweep.algorithms must not be empty".into()));
        }
        if s.n_eval == 0 {
            return Err(Error::Config("sweep.n_eval must be at least 1".into()));
        }
        let m = &self.msf;
        if !(0.0 <= m.lo && m.lo < m.hi && m.hi <= 1.0) || m.window == 0 {
            return Err(Error::Config("msf thresholds need 0 <= lo < hi <= 1 and window >= 1".into()));
        }
        Ok(())
    }

    /// Algorithms of the sweep in canonical order, without repeats.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut a = self.sweep.algorithms.clone();
        a.sort();
        a.dedup();
        a
    }

    /// Trainer settings for `algorithm`, or `None` for heuristics.
    pub fn trainer_for(&self, algorithm: Algorithm) -> Option<PpgConfig> {
        algorithm.learner_mode().map(|mode| PpgConfig { mode, ..self.trainer.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.scenario.scenario().unwrap(), Scenario::reference());
        assert_eq!(c.trainer, PpgConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.sweep.algorithms = vec![Algorithm::RoundRobin, Algorithm::Ppo];
        c.scenario.fading = FadingKind::Fixed;
        c.scenario.deadline_slots = Some(8);
        c.trainer.policy_optim.lr = 1e-3;
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_tables_and_comments() {
        let text = r#"
            # shorter runs
            [trainer]
            total_steps = 512
            mode = "ppo"
            policy_optim = { lr = 1e-3 }

            [sweep]
            seeds = [7]
            algorithms = ["ppo", "random"]
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.trainer.total_steps, 512);
        assert_eq!(c.trainer.policy_optim.lr, 1e-3);
        assert_eq!(c.trainer.policy_optim.beta2, 0.999);
        assert_eq!(c.algorithms(), vec![Algorithm::Ppo, Algorithm::Random]);
        assert_eq!(c.trainer_for(Algorithm::Ppg).unwrap().mode, Mode::Ppg);
        assert!(c.trainer_for(Algorithm::Msf).is_none());
    }

    #[test]
    fn invalid_documents_are_config_errors() {
        for text in [
            "[sweep]\nseeds = []",
            "[sweep]\nnode_counts = [0]",
            "[sweep]\nalgorithms = [\"dqn\"]",
            "[scenario]\ntraffic_rate = 2.0",
            "[scenario]\nsinr_threshold = -1.0",
            "[trainer]\nclip = 3.0",
            "[scenario]\nunknown_key = 1",
            "[msf]\nhi = 0.1\nlo = 0.5",
            "not toml [",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn unreadable_file_is_a_config_error() {
        let e = ExperimentConfig::load(Path::new("/nonexistent/experiment.toml")).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn algorithm_names_parse() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dqn".parse::<Algorithm>().is_err());
    }
}
