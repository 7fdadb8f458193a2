//! Pure representation of the TSCH allocation problem: schedule and power
//! data structures plus the closed-form link, throughput, efficiency and
//! utility quantities. Nothing in here owns randomness or mutable state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static radio and slotframe parameters of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_nodes: usize,
    pub n_channels: usize,
    pub slotframe_len: usize,
    /// Receiver noise floor in milliwatts.
    pub noise_floor_mw: f64,
    pub pathloss_exponent: f64,
    /// Channel gain at 1 m.
    pub reference_gain: f64,
    /// Linear SINR threshold below which a reception fails.
    pub sinr_threshold: f64,
    /// Selectable transmit powers in milliwatts, strictly increasing.
    pub power_levels_mw: Vec<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_nodes: 10,
            n_channels: 4,
            slotframe_len: 16,
            noise_floor_mw: 1e-10,
            pathloss_exponent: 3.0,
            reference_gain: 1e-3,
            sinr_threshold: 10.0,
            power_levels_mw: vec![1.0, 2.5, 5.0, 10.0],
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.n_channels == 0 || self.slotframe_len == 0 {
            return Err(Error::Config(
                "n_nodes, n_channels and slotframe_len must all be at least 1".into(),
            ));
        }
        if !(self.noise_floor_mw > 0.0) {
            return Err(Error::Config("noise_floor_mw must be positive".into()));
        }
        if !(self.sinr_threshold > 0.0) {
            return Err(Error::Config("sinr_threshold must be positive".into()));
        }
        if !(self.reference_gain > 0.0) || !self.pathloss_exponent.is_finite() {
            return Err(Error::Config(
                "reference_gain must be positive and pathloss_exponent finite".into(),
            ));
        }
        if self.power_levels_mw.is_empty() {
            return Err(Error::Config("power_levels_mw must not be empty".into()));
        }
        if self.power_levels_mw.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Config("power levels must be finite and positive".into()));
        }
        if self.power_levels_mw.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("power levels must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Number of (slot, channel) cells in one slotframe.
    pub fn n_cells(&self) -> usize {
        self.slotframe_len * self.n_channels
    }

    pub fn max_power(&self) -> f64 {
        *self.power_levels_mw.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Collection tree rooted at the border router.
///
/// `parent[i] == None` means node `i` talks to the border router directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub parent: Vec<Option<usize>>,
    pub hop_count: Vec<u32>,
    pub position: Vec<Position>,
    pub root: Position,
}

impl Topology {
    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    /// Position of the receiver node `i` transmits to.
    pub fn receiver_position(&self, node: usize) -> Position {
        match self.parent[node] {
            Some(p) => self.position[p],
            None => self.root,
        }
    }

    pub fn max_hops(&self) -> u32 {
        self.hop_count.iter().copied().max().unwrap_or(0)
    }

    /// Checks the tree invariants: acyclic, hop counts consistent, bounded depth.
    pub fn validate(&self, max_hops: u32) -> Result<()> {
        let n = self.n_nodes();
        if self.hop_count.len() != n || self.position.len() != n {
            return Err(Error::Model("topology vectors differ in length".into()));
        }
        for i in 0..n {
            let expected = match self.parent[i] {
                None => 1,
                Some(p) if p < n && p != i => self.hop_count[p] + 1,
                Some(p) => return Err(Error::Model(format!("node {i} has invalid parent {p}"))),
            };
            if self.hop_count[i] != expected {
                return Err(Error::Model(format!(
                    "node {i}: hop_count {} but parent implies {expected}",
                    self.hop_count[i]
                )));
            }
            if self.hop_count[i] > max_hops {
                return Err(Error::Model(format!("node {i} is {} hops deep", self.hop_count[i])));
            }
        }
        // Consistent hop counts along every parent edge rule out cycles.
        Ok(())
    }
}

/// Binary cell allocation `X[i, t, k]` for one slotframe.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleMatrix {
    n_nodes: usize,
    slotframe_len: usize,
    n_channels: usize,
    cells: Vec<bool>,
}

impl ScheduleMatrix {
    pub fn empty(n_nodes: usize, slotframe_len: usize, n_channels: usize) -> Self {
        Self {
            n_nodes,
            slotframe_len,
            n_channels,
            cells: vec![false; n_nodes * slotframe_len * n_channels],
        }
    }

    pub fn for_config(config: &NetworkConfig) -> Self {
        Self::empty(config.n_nodes, config.slotframe_len, config.n_channels)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn slotframe_len(&self) -> usize {
        self.slotframe_len
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    fn index(&self, node: usize, slot: usize, channel: usize) -> usize {
        assert!(
            node < self.n_nodes && slot < self.slotframe_len && channel < self.n_channels,
            "cell ({node}, {slot}, {channel}) out of range"
        );
        (node * self.slotframe_len + slot) * self.n_channels + channel
    }

    pub fn get(&self, node: usize, slot: usize, channel: usize) -> bool {
        self.cells[self.index(node, slot, channel)]
    }

    pub fn set(&mut self, node: usize, slot: usize, channel: usize, active: bool) {
        let idx = self.index(node, slot, channel);
        self.cells[idx] = active;
    }

    /// Channel node `i` uses in `slot`, or the first one if it (illegally) holds several.
    pub fn channel_at(&self, node: usize, slot: usize) -> Option<usize> {
        (0..self.n_channels).find(|&k| self.get(node, slot, k))
    }

    /// All `(slot, channel)` cells held by `node`, in slot order.
    pub fn cells_of(&self, node: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in 0..self.slotframe_len {
            for k in 0..self.n_channels {
                if self.get(node, t, k) {
                    out.push((t, k));
                }
            }
        }
        out
    }

    /// Number of cells of `node` on `channel` across the slotframe.
    pub fn cells_on_channel(&self, node: usize, channel: usize) -> usize {
        (0..self.slotframe_len).filter(|&t| self.get(node, t, channel)).count()
    }

    pub fn is_active_link(&self, node: usize, channel: usize) -> bool {
        self.cells_on_channel(node, channel) > 0
    }

    pub fn total_cells(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Nodes holding `(slot, channel)`.
    pub fn occupants(&self, slot: usize, channel: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| self.get(i, slot, channel)).collect()
    }

    fn check_dims(&self, config: &NetworkConfig) -> Result<()> {
        if self.n_nodes != config.n_nodes
            || self.slotframe_len != config.slotframe_len
            || self.n_channels != config.n_channels
        {
            return Err(Error::Config(format!(
                "schedule is {}x{}x{} but the network is {}x{}x{}",
                self.n_nodes,
                self.slotframe_len,
                self.n_channels,
                config.n_nodes,
                config.slotframe_len,
                config.n_channels
            )));
        }
        Ok(())
    }
}

/// Per-node transmit power in milliwatts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    power_mw: Vec<f64>,
}

impl PowerAllocation {
    /// Builds an allocation, checking every entry is one of the configured levels.
    pub fn new(config: &NetworkConfig, power_mw: Vec<f64>) -> Result<Self> {
        if power_mw.len() != config.n_nodes {
            return Err(Error::Config(format!(
                "{} powers for {} nodes",
                power_mw.len(),
                config.n_nodes
            )));
        }
        if let Some(p) = power_mw.iter().find(|p| !config.power_levels_mw.contains(p)) {
            return Err(Error::Config(format!("{p} mW is not a configured power level")));
        }
        Ok(Self { power_mw })
    }

    pub fn from_levels(config: &NetworkConfig, levels: &[usize]) -> Result<Self> {
        let powers = levels
            .iter()
            .map(|&l| {
                config
                    .power_levels_mw
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::Action(format!("power index {l} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(config, powers)
    }

    pub fn uniform(config: &NetworkConfig, power_mw: f64) -> Result<Self> {
        Self::new(config, vec![power_mw; config.n_nodes])
    }

    pub fn get(&self, node: usize) -> f64 {
        self.power_mw[node]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.power_mw
    }
}

/// Per-node deadline, drop bound and error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// Maximum queueing delay in slots.
    pub deadline: Vec<u64>,
    pub max_drop: Vec<f64>,
    pub max_err: Vec<f64>,
}

impl QosSpec {
    pub fn uniform(n_nodes: usize, deadline: u64, max_drop: f64, max_err: f64) -> Self {
        Self {
            deadline: vec![deadline; n_nodes],
            max_drop: vec![max_drop; n_nodes],
            max_err: vec![max_err; n_nodes],
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.deadline.len() != n_nodes
            || self.max_drop.len() != n_nodes
            || self.max_err.len() != n_nodes
        {
            return Err(Error::Config("QoS vectors must have one entry per node".into()));
        }
        if self.deadline.iter().any(|&d| d < 1) {
            return Err(Error::Config("deadlines must be at least one slot".into()));
        }
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !self.max_drop.iter().chain(&self.max_err).all(|&x| open_unit(x)) {
            return Err(Error::Config("QoS probability bounds must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Raw counters for one (node, channel) link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounts {
    /// Scheduled cells on this link (used or not).
    pub scheduled_cells: u64,
    pub attempts: u64,
    pub successes: u64,
    /// Receptions with SINR below threshold.
    pub errors: u64,
    /// Deadline expiries of packets sourced at this node.
    pub drops: u64,
    /// Packets sourced at this node that were resolved (delivered or expired).
    pub offered: u64,
}

/// Empirical per-(node, channel) statistics gathered by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    n_nodes: usize,
    n_channels: usize,
    counts: Vec<LinkCounts>,
    sinr_samples: Vec<Vec<f64>>,
}

impl LinkStats {
    pub fn new(n_nodes: usize, n_channels: usize) -> Self {
        Self {
            n_nodes,
            n_channels,
            counts: vec![LinkCounts::default(); n_nodes * n_channels],
            sinr_samples: vec![Vec::new(); n_nodes * n_channels],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    fn index(&self, node: usize, channel: usize) -> usize {
        assert!(node < self.n_nodes && channel < self.n_channels);
        node * self.n_channels + channel
    }

    pub fn counts(&self, node: usize, channel: usize) -> &LinkCounts {
        &self.counts[self.index(node, channel)]
    }

    pub fn counts_mut(&mut self, node: usize, channel: usize) -> &mut LinkCounts {
        let idx = self.index(node, channel);
        &mut self.counts[idx]
    }

    pub fn sinr_samples(&self, node: usize, channel: usize) -> &[f64] {
        &self.sinr_samples[self.index(node, channel)]
    }

    pub fn record_sinr(&mut self, node: usize, channel: usize, sinr: f64) {
        let idx = self.index(node, channel);
        self.sinr_samples[idx].push(sinr);
    }

    pub fn is_active(&self, node: usize, channel: usize) -> bool {
        self.counts(node, channel).scheduled_cells > 0
    }

    pub fn drop_prob(&self, node: usize, channel: usize) -> f64 {
        let c = self.counts(node, channel);
        if c.offered == 0 {
            0.0
        } else {
            c.drops as f64 / c.offered as f64
        }
    }

    pub fn err_prob(&self, node: usize, channel: usize) -> f64 {
        let c = self.counts(node, channel);
        if c.attempts == 0 {
            0.0
        } else {
            c.errors as f64 / c.attempts as f64
        }
    }

    /// Success probability of the link; zero when nothing was transmitted on it.
    pub fn suc_prob(&self, node: usize, channel: usize) -> f64 {
        if self.counts(node, channel).attempts == 0 {
            return 0.0;
        }
        success_probability(self.drop_prob(node, channel), self.err_prob(node, channel))
            .expect("empirical frequencies lie in [0, 1]")
    }

    /// Per-node totals over all channels.
    pub fn node_totals(&self, node: usize) -> LinkCounts {
        (0..self.n_channels).fold(LinkCounts::default(), |mut acc, k| {
            let c = self.counts(node, k);
            acc.scheduled_cells += c.scheduled_cells;
            acc.attempts += c.attempts;
            acc.successes += c.successes;
            acc.errors += c.errors;
            acc.drops += c.drops;
            acc.offered += c.offered;
            acc
        })
    }

    /// Adds the counters and samples of `other` into `self`.
    pub fn merge(&mut self, other: &LinkStats) -> Result<()> {
        if self.n_nodes != other.n_nodes || self.n_channels != other.n_channels {
            return Err(Error::Shape("cannot merge link stats of different sizes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.scheduled_cells += b.scheduled_cells;
            a.attempts += b.attempts;
            a.successes += b.successes;
            a.errors += b.errors;
            a.drops += b.drops;
            a.offered += b.offered;
        }
        for (a, b) in self.sinr_samples.iter_mut().zip(&other.sinr_samples) {
            a.extend_from_slice(b);
        }
        Ok(())
    }
}

/// Scenario weights on throughput and energy efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub throughput: f64,
    pub efficiency: f64,
}

impl UtilityWeights {
    pub fn new(throughput: f64, efficiency: f64) -> Result<Self> {
        let w = Self { throughput, efficiency };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.throughput >= 0.0 && self.efficiency >= 0.0) {
            return Err(Error::Config("utility weights must be non-negative".into()));
        }
        if !(self.throughput + self.efficiency > 0.0) {
            return Err(Error::Config("utility weights must not both be zero".into()));
        }
        Ok(())
    }

    /// Weights rescaled onto the probability simplex.
    pub fn normalized(&self) -> (f64, f64) {
        let s = self.throughput + self.efficiency;
        (self.throughput / s, self.efficiency / s)
    }
}

/// Every `(node, slot)` where a node holds more than one channel.
pub fn validate_schedule(
    config: &NetworkConfig,
    schedule: &ScheduleMatrix,
) -> Result<Vec<(usize, usize)>> {
    schedule.check_dims(config)?;
    let mut violations = Vec::new();
    for i in 0..schedule.n_nodes {
        for t in 0..schedule.slotframe_len {
            let used = (0..schedule.n_channels).filter(|&k| schedule.get(i, t, k)).count();
            if used > 1 {
                violations.push((i, t));
            }
        }
    }
    Ok(violations)
}

/// Log-distance path gain `reference_gain * d^-alpha`.
pub fn path_gain(config: &NetworkConfig, from: &Position, to: &Position) -> Result<f64> {
    let d = from.distance(to);
    if d <= 0.0 {
        return Err(Error::Model(format!(
            "zero distance between distinct radios at ({}, {})",
            from.x, from.y
        )));
    }
    Ok(config.reference_gain * d.powf(-config.pathloss_exponent))
}

/// One radio active in a given (slot, channel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub node: usize,
    pub power_mw: f64,
    /// Multiplicative fading on every path leaving this transmitter.
    pub fading: f64,
}

/// SINR at each transmitter's receiver for a set of co-slot, co-channel transmissions.
///
/// A receiver that is itself transmitting in the same cell cannot receive, so its SINR is 0.
pub fn sinr_of_transmissions(
    config: &NetworkConfig,
    topology: &Topology,
    transmissions: &[Transmission],
) -> Result<Vec<f64>> {
    if let Some(tx) = transmissions.iter().find(|tx| !(tx.fading >= 0.0)) {
        return Err(Error::Input(format!(
            "fading multiplier {} for node {} is negative",
            tx.fading, tx.node
        )));
    }
    transmissions
        .iter()
        .map(|tx| {
            let rx_node = topology.parent[tx.node];
            if rx_node.is_some_and(|r| transmissions.iter().any(|o| o.node == r)) {
                return Ok(0.0);
            }
            let rx = topology.receiver_position(tx.node);
            let signal =
                tx.power_mw * path_gain(config, &topology.position[tx.node], &rx)? * tx.fading;
            let mut interference = 0.0;
            for other in transmissions.iter().filter(|o| o.node != tx.node) {
                interference += other.power_mw
                    * path_gain(config, &topology.position[other.node], &rx)?
                    * other.fading;
            }
            Ok(signal / (config.noise_floor_mw + interference))
        })
        .collect()
}

/// SINR of every node scheduled in `(slot, channel)`; `fading` is indexed by node.
pub fn compute_sinr(
    config: &NetworkConfig,
    topology: &Topology,
    schedule: &ScheduleMatrix,
    powers: &PowerAllocation,
    fading: &[f64],
    slot: usize,
    channel: usize,
) -> Result<Vec<(usize, f64)>> {
    schedule.check_dims(config)?;
    if fading.len() != config.n_nodes {
        return Err(Error::Input(format!(
            "{} fading multipliers for {} nodes",
            fading.len(),
            config.n_nodes
        )));
    }
    let tx: Vec<Transmission> = schedule
        .occupants(slot, channel)
        .into_iter()
        .map(|i| Transmission { node: i, power_mw: powers.get(i), fading: fading[i] })
        .collect();
    let sinr = sinr_of_transmissions(config, topology, &tx)?;
    Ok(tx.iter().map(|t| t.node).zip(sinr).collect())
}

/// `1 - P_drop - P_err + P_drop * P_err`.
pub fn success_probability(drop_prob: f64, err_prob: f64) -> Result<f64> {
    let unit = 0.0..=1.0;
    if !unit.contains(&drop_prob) || !unit.contains(&err_prob) {
        return Err(Error::Input(format!(
            "probabilities ({drop_prob}, {err_prob}) outside [0, 1]"
        )));
    }
    Ok((1.0 - drop_prob - err_prob + drop_prob * err_prob).clamp(0.0, 1.0))
}

/// Expected successful deliveries per slotframe: success probability summed
/// over every scheduled (node, channel) link.
pub fn throughput(stats: &LinkStats, schedule: &ScheduleMatrix) -> Result<f64> {
    if stats.n_nodes != schedule.n_nodes || stats.n_channels != schedule.n_channels {
        return Err(Error::Shape("link stats and schedule disagree on dimensions".into()));
    }
    let mut th = 0.0;
    for i in 0..stats.n_nodes {
        for k in 0..stats.n_channels {
            if schedule.is_active_link(i, k) {
                th += stats.suc_prob(i, k);
            }
        }
    }
    Ok(th)
}

/// Throughput per milliwatt of transmit power committed by the schedule.
pub fn energy_efficiency(
    th: f64,
    schedule: &ScheduleMatrix,
    powers: &PowerAllocation,
) -> Result<f64> {
    if powers.as_slice().len() != schedule.n_nodes {
        return Err(Error::Shape("power allocation and schedule disagree on node count".into()));
    }
    let spent: f64 = (0..schedule.n_nodes)
        .map(|i| powers.get(i) * schedule.cells_of(i).len() as f64)
        .sum();
    if spent <= 0.0 {
        return Err(Error::UndefinedEfficiency);
    }
    Ok(th / spent)
}

pub fn utility(th: f64, eta: f64, weights: &UtilityWeights) -> f64 {
    weights.throughput * th + weights.efficiency * eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    Drop,
    Err,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QosViolation {
    pub node: usize,
    pub channel: usize,
    pub kind: ViolationKind,
}

/// Active links whose empirical drop or error probability reaches its bound.
pub fn qos_violations(stats: &LinkStats, qos: &QosSpec) -> Result<BTreeSet<QosViolation>> {
    qos.validate(stats.n_nodes)?;
    let mut out = BTreeSet::new();
    for node in 0..stats.n_nodes {
        for channel in 0..stats.n_channels {
            if !stats.is_active(node, channel) {
                continue;
            }
            if stats.drop_prob(node, channel) >= qos.max_drop[node] {
                out.insert(QosViolation { node, channel, kind: ViolationKind::Drop });
            }
            if stats.err_prob(node, channel) >= qos.max_err[node] {
                out.insert(QosViolation { node, channel, kind: ViolationKind::Err });
            }
        }
    }
    Ok(out)
}
