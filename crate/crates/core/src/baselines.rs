//! Non-learning schedulers: an MSF-like adaptive allocator, a uniform random
//! scheduler and a collision-free round-robin reference.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Controller, Observation, TschEnv};
use crate::error::Result;
use crate::model::{NetworkConfig, PowerAllocation, ScheduleMatrix};
use crate::rng::{derive_seed, named_stream, StreamRng};
use crate::sim::SlotframeReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsfParams {
    pub hi: f64,
    pub lo: f64,
    /// Slotframes of usage history per adaptation decision.
    pub window: usize,
}

impl Default for MsfParams {
    fn default() -> Self {
        Self { hi: 0.75, lo: 0.25, window: 5 }
    }
}

/// What one `msf_step` did to a node's allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptation {
    Kept,
    Added((usize, usize)),
    Removed((usize, usize)),
    /// Utilisation was high but no free cell existed.
    Saturated,
}

/// Per-node cell sets and usage windows of the MSF-like heuristic.
#[derive(Debug, Clone)]
pub struct MsfState {
    pub params: MsfParams,
    cells: Vec<Vec<(usize, usize)>>,
    /// (used, allocated) per slotframe, newest last.
    usage: Vec<VecDeque<(u64, u64)>>,
    rng: StreamRng,
    last: Vec<Adaptation>,
}

impl MsfState {
    /// One independently drawn cell per node, like hash-derived autonomous
    /// cells; two nodes may start on the same cell.
    pub fn new(config: &NetworkConfig, params: MsfParams, seed: u64) -> Self {
        assert!(0.0 <= params.lo && params.lo < params.hi && params.hi <= 1.0 && params.window >= 1);
        let mut rng = named_stream(seed, "msf");
        let cells = (0..config.n_nodes)
            .map(|_| {
                let c = rng.random_range(0..config.n_cells());
                vec![(c / config.n_channels, c % config.n_channels)]
            })
            .collect();
        Self {
            params,
            cells,
            usage: vec![VecDeque::new(); config.n_nodes],
            rng,
            last: vec![Adaptation::Kept; config.n_nodes],
        }
    }

    pub fn cells(&self, node: usize) -> &[(usize, usize)] {
        &self.cells[node]
    }

    pub fn last_adaptations(&self) -> &[Adaptation] {
        &self.last
    }

    /// Utilisation over the current window, or `None` before it fills.
    pub fn utilization(&self, node: usize) -> Option<f64> {
        let w = &self.usage[node];
        if w.len() < self.params.window {
            return None;
        }
        let (used, alloc) = w.iter().fold((0, 0), |(u, a), &(x, y)| (u + x, a + y));
        Some(if alloc == 0 { 0.0 } else { used as f64 / alloc as f64 })
    }

    /// Records one slotframe of usage for `node`.
    pub fn record_usage(&mut self, node: usize, used: u64, allocated: u64) {
        let w = &mut self.usage[node];
        w.push_back((used, allocated));
        while w.len() > self.params.window {
            w.pop_front();
        }
    }

    fn free_cells_for(&self, config: &NetworkConfig, node: usize) -> Vec<(usize, usize)> {
        let busy_slot: Vec<bool> =
            (0..config.slotframe_len).map(|t| self.cells[node].iter().any(|c| c.0 == t)).collect();
        let mut out = Vec::new();
        for t in (0..config.slotframe_len).filter(|&t| !busy_slot[t]) {
            out.extend((0..config.n_channels).map(|k| (t, k)));
        }
        out
    }

    fn adapt(&mut self, config: &NetworkConfig) {
        for node in 0..self.cells.len() {
            self.last[node] = Adaptation::Kept;
            let Some(u) = self.utilization(node) else { continue };
            if u > self.params.hi {
                let free = self.free_cells_for(config, node);
                if free.is_empty() {
                    log::debug!("msf: node {node} wants a cell but none is free");
                    self.last[node] = Adaptation::Saturated;
                } else {
                    let cell = free[self.rng.random_range(0..free.len())];
                    self.cells[node].push(cell);
                    self.cells[node].sort_unstable();
                    self.last[node] = Adaptation::Added(cell);
                }
                self.usage[node].clear();
            } else if u < self.params.lo && self.cells[node].len() > 1 {
                let idx = self.rng.random_range(0..self.cells[node].len());
                let cell = self.cells[node].remove(idx);
                self.last[node] = Adaptation::Removed(cell);
                self.usage[node].clear();
            }
        }
    }

    pub fn schedule(&self, config: &NetworkConfig) -> (ScheduleMatrix, PowerAllocation) {
        let mut s = ScheduleMatrix::for_config(config);
        for (node, cells) in self.cells.iter().enumerate() {
            for &(t, k) in cells {
                s.set(node, t, k, true);
            }
        }
        let p = PowerAllocation::uniform(config, config.max_power()).expect("max level is a level");
        (s, p)
    }
}

/// Folds the last report into the usage windows, applies the add/remove
/// thresholds, and emits the resulting schedule at maximum power.
pub fn msf_step(
    state: &mut MsfState,
    config: &NetworkConfig,
    last: Option<&SlotframeReport>,
) -> (ScheduleMatrix, PowerAllocation) {
    if let Some(report) = last {
        for node in 0..state.cells.len() {
            let used = report.stats.node_totals(node).attempts;
            let allocated = state.cells[node].len() as u64;
            state.record_usage(node, used, allocated);
        }
        state.adapt(config);
    }
    state.schedule(config)
}

/// One uniformly random cell and power level per node.
pub fn random_schedule(config: &NetworkConfig, seed: u64) -> (ScheduleMatrix, PowerAllocation) {
    let mut rng = named_stream(seed, "random-scheduler");
    let mut s = ScheduleMatrix::for_config(config);
    let mut levels = Vec::with_capacity(config.n_nodes);
    for node in 0..config.n_nodes {
        let c = rng.random_range(0..config.n_cells());
        s.set(node, c / config.n_channels, c % config.n_channels, true);
        levels.push(rng.random_range(0..config.power_levels_mw.len()));
    }
    (s, PowerAllocation::from_levels(config, &levels).expect("indices drawn in range"))
}

/// Node `i` on cell `((i / M) mod T, i mod M)` at maximum power.
pub fn round_robin_schedule(config: &NetworkConfig) -> (ScheduleMatrix, PowerAllocation) {
    if config.n_nodes > config.n_cells() {
        log::warn!(
            "round robin: {} nodes exceed {} cells, assignment wraps and cells are shared",
            config.n_nodes,
            config.n_cells()
        );
    }
    let m = config.n_channels;
    let mut s = ScheduleMatrix::for_config(config);
    for node in 0..config.n_nodes {
        s.set(node, (node / m) % config.slotframe_len, node % m, true);
    }
    let p = PowerAllocation::uniform(config, config.max_power()).expect("max level is a level");
    (s, p)
}

pub struct MsfController {
    params: MsfParams,
    seed: u64,
    state: Option<MsfState>,
}

impl MsfController {
    pub fn new(params: MsfParams, seed: u64) -> Self {
        Self { params, seed, state: None }
    }
}

impl Controller for MsfController {
    fn begin_episode(&mut self, env: &TschEnv, episode_seed: u64) {
        let seed = derive_seed(self.seed, &format!("msf/{episode_seed}"));
        self.state = Some(MsfState::new(&env.scenario().network, self.params, seed));
    }

    fn act(&mut self, env: &TschEnv, _obs: &Observation) -> Result<(ScheduleMatrix, PowerAllocation)> {
        let config = &env.scenario().network;
        let state = self
            .state
            .get_or_insert_with(|| MsfState::new(config, self.params, self.seed));
        Ok(msf_step(state, config, env.last_report()))
    }
}

/// Draws a fresh random schedule every slotframe.
pub struct RandomController {
    seed: u64,
    episode_seed: u64,
    counter: u64,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        Self { seed, episode_seed: seed, counter: 0 }
    }
}

impl Controller for RandomController {
    fn begin_episode(&mut self, _env: &TschEnv, episode_seed: u64) {
        self.episode_seed = derive_seed(self.seed, &format!("random/{episode_seed}"));
        self.counter = 0;
    }

    fn act(&mut self, env: &TschEnv, _obs: &Observation) -> Result<(ScheduleMatrix, PowerAllocation)> {
        self.counter += 1;
        let seed = derive_seed(self.episode_seed, &self.counter.to_string());
        Ok(random_schedule(&env.scenario().network, seed))
    }
}

pub struct RoundRobinController;

impl Controller for RoundRobinController {
    fn act(&mut self, env: &TschEnv, _obs: &Observation) -> Result<(ScheduleMatrix, PowerAllocation)> {
        Ok(round_robin_schedule(&env.scenario().network))
    }
}
