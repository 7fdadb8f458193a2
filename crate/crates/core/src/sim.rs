//! Slot-by-slot simulation of a TSCH collection tree.
//!
//! Each slotframe walks the `T` timeslots in order. In every slot the nodes
//! holding a cell first purge expired packets, then those with a non-empty
//! queue transmit their head-of-line packet toward their parent. Receptions
//! are decided by the SINR threshold with fresh fading draws, and every
//! outcome lands in [`LinkStats`].

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    sinr_of_transmissions, validate_schedule, LinkStats, NetworkConfig, Position, PowerAllocation,
    QosSpec, ScheduleMatrix, Topology, Transmission,
};
use crate::rng::{named_stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub source: usize,
    pub created_slot: u64,
    pub deadline_slot: u64,
    pub hops_remaining: u32,
}

impl Packet {
    pub fn is_expired(&self, clock: u64) -> bool {
        clock > self.deadline_slot
    }
}

/// Per-transmission power fading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingModel {
    /// Unit-mean exponential power gain, redrawn for every attempt.
    Rayleigh,
    /// Deterministic multiplier; `Fixed(1.0)` disables fading.
    Fixed(f64),
}

/// Static part of a simulated network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub topology: Topology,
    pub qos: QosSpec,
    pub fading: FadingModel,
}

/// Cumulative packet accounting since the state was created.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketTotals {
    pub generated: u64,
    pub delivered: u64,
    pub dropped_deadline: u64,
    pub dropped_overflow: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Error,
}

/// One transmission attempt, as written to the optional event trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub slot: u64,
    pub node: usize,
    pub channel: usize,
    pub power_mw: f64,
    pub sinr: f64,
    pub outcome: Outcome,
}

/// Mutable simulator state: clock, queues and random streams.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: u64,
    pub queues: Vec<VecDeque<Packet>>,
    pub traffic_rate: f64,
    pub queue_capacity: usize,
    pub totals: PacketTotals,
    traffic_rng: StreamRng,
    fading_rng: StreamRng,
    pending_overflow: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl SimState {
    pub fn new(n_nodes: usize, traffic_rate: f64, queue_capacity: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&traffic_rate) {
            return Err(Error::Config(format!("traffic_rate {traffic_rate} outside [0, 1]")));
        }
        if queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be at least 1".into()));
        }
        Ok(Self {
            clock: 0,
            queues: vec![VecDeque::new(); n_nodes],
            traffic_rate,
            queue_capacity,
            totals: PacketTotals::default(),
            traffic_rng: named_stream(seed, "sim/traffic"),
            fading_rng: named_stream(seed, "sim/fading"),
            pending_overflow: 0,
            trace: None,
        })
    }

    /// Starts recording one [`TraceEvent`] per transmission attempt.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn queued(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    fn push(&mut self, node: usize, packet: Packet) -> bool {
        if self.queues[node].len() >= self.queue_capacity {
            self.totals.dropped_overflow += 1;
            self.pending_overflow += 1;
            false
        } else {
            self.queues[node].push_back(packet);
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotframeReport {
    pub stats: LinkStats,
    pub delivered: u64,
    pub dropped_deadline: u64,
    /// Overflow drops since the previous report, including arrivals injected before this frame.
    pub dropped_overflow: u64,
    /// Milliwatt-slots committed by the schedule.
    pub energy_spent: f64,
}

/// Random collection tree: nodes uniform in an `area_side` square, root at
/// the centre, each node attached to the nearest already-attached radio that
/// still has hop budget. Nodes attach in order of distance to the root.
pub fn generate_topology(
    n_nodes: usize,
    max_hops: u32,
    area_side: f64,
    seed: u64,
) -> Result<Topology> {
    if n_nodes == 0 || max_hops == 0 {
        return Err(Error::Config("topology needs n_nodes >= 1 and max_hops >= 1".into()));
    }
    if !(area_side > 0.0) {
        return Err(Error::Config("area_side must be positive".into()));
    }
    let mut rng = named_stream(seed, "topology");
    let root = Position { x: area_side / 2.0, y: area_side / 2.0 };
    let position: Vec<Position> = (0..n_nodes)
        .map(|_| Position {
            x: rng.random::<f64>() * area_side,
            y: rng.random::<f64>() * area_side,
        })
        .collect();

    let mut order: Vec<usize> = (0..n_nodes).collect();
    order.sort_by(|&a, &b| {
        position[a].distance(&root).total_cmp(&position[b].distance(&root)).then(a.cmp(&b))
    });

    let mut parent = vec![None; n_nodes];
    let mut hop_count = vec![0u32; n_nodes];
    let mut attached: Vec<usize> = Vec::with_capacity(n_nodes);
    for &i in &order {
        let mut best: (Option<usize>, f64, u32) = (None, position[i].distance(&root), 0);
        for &j in attached.iter().filter(|&&j| hop_count[j] < max_hops) {
            let d = position[i].distance(&position[j]);
            if d < best.1 {
                best = (Some(j), d, hop_count[j]);
            }
        }
        parent[i] = best.0;
        hop_count[i] = best.2 + 1;
        attached.push(i);
    }
    Ok(Topology { parent, hop_count, position, root })
}

/// Bernoulli arrivals: every node enqueues one packet with probability
/// `traffic_rate`. Returns the number of packets generated, overflowed or not.
pub fn inject_traffic(state: &mut SimState, topology: &Topology, qos: &QosSpec) -> u64 {
    let mut generated = 0;
    for node in 0..state.queues.len() {
        if state.traffic_rng.random::<f64>() < state.traffic_rate {
            generated += 1;
            state.totals.generated += 1;
            let packet = Packet {
                source: node,
                created_slot: state.clock,
                deadline_slot: state.clock + qos.deadline[node],
                hops_remaining: topology.hop_count[node],
            };
            state.push(node, packet);
        }
    }
    generated
}

/// Channel a source's drop or delivery is charged to: its scheduled channel,
/// rotated by creation slot when it holds several, channel 0 when it holds none.
fn attribution_channel(active: &[Vec<usize>], packet: &Packet) -> usize {
    let chans = &active[packet.source];
    if chans.is_empty() {
        0
    } else {
        chans[(packet.created_slot % chans.len() as u64) as usize]
    }
}

/// Runs the `T` slots of one slotframe against `schedule`.
pub fn run_slotframe(
    state: &mut SimState,
    network: &Network,
    schedule: &ScheduleMatrix,
    powers: &PowerAllocation,
) -> Result<SlotframeReport> {
    let config = &network.config;
    let violations = validate_schedule(config, schedule)?;
    if !violations.is_empty() {
        return Err(Error::Constraint(violations));
    }
    if state.queues.len() != config.n_nodes || powers.as_slice().len() != config.n_nodes {
        return Err(Error::Shape("simulator state, powers and network disagree on N".into()));
    }
    let n = config.n_nodes;
    let mut stats = LinkStats::new(n, config.n_channels);
    let active: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..config.n_channels).filter(|&k| schedule.is_active_link(i, k)).collect())
        .collect();
    let mut report_delivered = 0;
    let mut report_dropped = 0;
    let mut energy = 0.0;

    let mut scheduled: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut by_channel: Vec<Vec<Transmission>> = vec![Vec::new(); config.n_channels];
    let mut moves: Vec<(usize, Packet)> = Vec::new();

    for slot in 0..config.slotframe_len {
        scheduled.clear();
        scheduled.extend((0..n).filter_map(|i| schedule.channel_at(i, slot).map(|k| (i, k))));

        for &(i, k) in &scheduled {
            energy += powers.get(i);
            stats.counts_mut(i, k).scheduled_cells += 1;
            let clock = state.clock;
            let mut expired = Vec::new();
            state.queues[i].retain(|p| {
                let keep = !p.is_expired(clock);
                if !keep {
                    expired.push(*p);
                }
                keep
            });
            for p in expired {
                let c = stats.counts_mut(p.source, attribution_channel(&active, &p));
                c.drops += 1;
                c.offered += 1;
                report_dropped += 1;
                state.totals.dropped_deadline += 1;
            }
        }

        for list in by_channel.iter_mut() {
            list.clear();
        }
        for &(i, k) in &scheduled {
            // Drawn for every scheduled cell so the stream does not depend on queue state.
            let fading = match network.fading {
                FadingModel::Rayleigh => state.fading_rng.sample::<f64, _>(Exp1),
                FadingModel::Fixed(f) => f,
            };
            if !state.queues[i].is_empty() {
                by_channel[k].push(Transmission { node: i, power_mw: powers.get(i), fading });
            }
        }

        moves.clear();
        for (k, tx) in by_channel.iter().enumerate() {
            if tx.is_empty() {
                continue;
            }
            let sinr = sinr_of_transmissions(config, &network.topology, tx)?;
            for (t, &g) in tx.iter().zip(&sinr) {
                let success = g >= config.sinr_threshold;
                let c = stats.counts_mut(t.node, k);
                c.attempts += 1;
                if success {
                    c.successes += 1;
                    let packet = state.queues[t.node].pop_front().expect("transmitter has a packet");
                    moves.push((t.node, packet));
                } else {
                    c.errors += 1;
                }
                stats.record_sinr(t.node, k, g);
                if let Some(trace) = state.trace.as_mut() {
                    trace.push(TraceEvent {
                        slot: state.clock,
                        node: t.node,
                        channel: k,
                        power_mw: t.power_mw,
                        sinr: g,
                        outcome: if success { Outcome::Success } else { Outcome::Error },
                    });
                }
            }
        }

        for (from, mut packet) in moves.drain(..) {
            packet.hops_remaining = packet.hops_remaining.saturating_sub(1);
            match network.topology.parent[from] {
                None => {
                    report_delivered += 1;
                    state.totals.delivered += 1;
                    stats.counts_mut(packet.source, attribution_channel(&active, &packet)).offered += 1;
                }
                Some(parent) => {
                    state.push(parent, packet);
                }
            }
        }
        state.clock += 1;
    }

    let dropped_overflow = std::mem::take(&mut state.pending_overflow);
    Ok(SlotframeReport {
        stats,
        delivered: report_delivered,
        dropped_deadline: report_dropped,
        dropped_overflow,
        energy_spent: energy,
    })
}

/// Injects traffic and runs one slotframe per schedule, threading the state through.
pub fn run_episode(
    state: &mut SimState,
    network: &Network,
    schedules: &[(ScheduleMatrix, PowerAllocation)],
) -> Result<Vec<SlotframeReport>> {
    if schedules.is_empty() {
        return Err(Error::Input("an episode needs at least one schedule".into()));
    }
    schedules
        .iter()
        .map(|(schedule, powers)| {
            inject_traffic(state, &network.topology, &network.qos);
            run_slotframe(state, network, schedule, powers)
        })
        .collect()
}

/// Writes `slot,node,channel,power_mw,sinr,outcome` rows.
pub fn write_trace_csv<W: Write>(mut out: W, events: &[TraceEvent]) -> std::io::Result<()> {
    writeln!(out, "slot,node,channel,power_mw,sinr,outcome")?;
    for e in events {
        let outcome = match e.outcome {
            Outcome::Success => "success",
            Outcome::Error => "error",
        };
        writeln!(out, "{},{},{},{},{:e},{}", e.slot, e.node, e.channel, e.power_mw, e.sinr, outcome)?;
    }
    Ok(())
}
