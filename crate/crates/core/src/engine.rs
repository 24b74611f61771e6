//! Fluid processor-sharing execution of fragment graphs on a cluster.
//!
//! Time advances in scheduling intervals, but inside an interval the engine
//! jumps from event to event (fragment completion, transfer arrival), so
//! completion times do not depend on the interval length. Every host splits
//! its capacity equally among its running fragments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ApplicationProfile, Fragment, Host, SplitDecision, Workload};
use crate::rng::{self, Stream};
use crate::schedulers::{ClusterView, HostView};

/// Compute and memory of the compressed baseline relative to the full layer
/// chain, and the accuracy it gives up. Synthetic values.
pub const COMPRESSED_COMPUTE_FACTOR: f64 = 0.5;
pub const COMPRESSED_RAM_FACTOR: f64 = 0.5;
pub const COMPRESSED_ACCURACY_PENALTY: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("workload {0} has not completed")]
    Incomplete(u64),
    #[error("workload {0} is already active")]
    DuplicateWorkload(u64),
    #[error("placement has {got} hosts for a graph of {expected} fragments")]
    PlacementSize { expected: usize, got: usize },
    #[error("host {0} does not exist")]
    UnknownHost(usize),
    #[error("host {host} lacks {needed} MB of free RAM")]
    InsufficientRam { host: usize, needed: f64 },
}

/// How a workload is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Layer,
    Semantic,
    /// Single low-footprint fragment standing in for a compressed model.
    Compressed,
}

impl From<SplitDecision> for Variant {
    fn from(d: SplitDecision) -> Self {
        match d {
            SplitDecision::Layer => Variant::Layer,
            SplitDecision::Semantic => Variant::Semantic,
        }
    }
}

impl Variant {
    pub fn accuracy(self, p: &ApplicationProfile) -> f64 {
        match self {
            Variant::Layer => p.accuracy_layer,
            Variant::Semantic => p.accuracy_semantic,
            Variant::Compressed => (p.accuracy_layer - COMPRESSED_ACCURACY_PENALTY).max(0.0),
        }
    }

    /// The split decision this variant reports to the decider.
    pub fn decision(self) -> SplitDecision {
        match self {
            Variant::Semantic => SplitDecision::Semantic,
            Variant::Layer | Variant::Compressed => SplitDecision::Layer,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Layer => "layer",
            Variant::Semantic => "semantic",
            Variant::Compressed => "compressed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub fragment: Fragment,
    pub preds: Vec<usize>,
    /// Semantic branch index; `None` for chain, aggregation and compressed nodes.
    pub branch: Option<usize>,
}

/// Precedence DAG of one workload's fragments. The last node is the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentGraph {
    pub nodes: Vec<GraphNode>,
}

impl FragmentGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.preds.len()).sum()
    }

    pub fn terminal(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn successors(&self, node: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.preds.contains(&node))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total_compute_mi(&self) -> f64 {
        self.nodes.iter().map(|n| n.fragment.compute_mi).sum()
    }
}

/// Builds the execution graph for a split decision.
///
/// Layer: a chain `f1 -> f2 -> ... -> fk`. Semantic: every branch is a chain
/// and all branch tails feed the aggregation node. Semantic nodes are listed
/// breadth-first across branches, so schedulers that walk the graph in order
/// see every branch head before any second-level fragment.
pub fn instantiate(decision: SplitDecision, p: &ApplicationProfile) -> FragmentGraph {
    instantiate_variant(decision.into(), p)
}

pub fn instantiate_variant(variant: Variant, p: &ApplicationProfile) -> FragmentGraph {
    let nodes = match variant {
        Variant::Layer => p
            .layer_chain
            .iter()
            .enumerate()
            .map(|(i, f)| GraphNode {
                fragment: *f,
                preds: if i == 0 { vec![] } else { vec![i - 1] },
                branch: None,
            })
            .collect(),
        Variant::Semantic => {
            let mut nodes = Vec::new();
            let mut tails: Vec<Option<usize>> = vec![None; p.semantic_branches.len()];
            let depth = p.semantic_branches.iter().map(Vec::len).max().unwrap_or(0);
            for level in 0..depth {
                for (b, branch) in p.semantic_branches.iter().enumerate() {
                    if let Some(f) = branch.get(level) {
                        nodes.push(GraphNode {
                            fragment: *f,
                            preds: tails[b].into_iter().collect(),
                            branch: Some(b),
                        });
                        tails[b] = Some(nodes.len() - 1);
                    }
                }
            }
            nodes.push(GraphNode {
                fragment: p.aggregation,
                preds: tails.into_iter().flatten().collect(),
                branch: None,
            });
            nodes
        }
        Variant::Compressed => vec![GraphNode {
            fragment: Fragment::new(
                p.layer_compute_mi() * COMPRESSED_COMPUTE_FACTOR,
                p.layer_ram_mb() * COMPRESSED_RAM_FACTOR,
                0.0,
            ),
            preds: vec![],
            branch: None,
        }],
    };
    FragmentGraph { nodes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentState {
    Blocked,
    Running,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentInstance {
    pub id: usize,
    pub workload: u64,
    pub fragment: Fragment,
    pub host: usize,
    pub remaining_mi: f64,
    pub state: FragmentState,
    pub preds: Vec<usize>,
    pub succs: Vec<usize>,
    /// Inputs (predecessor outputs) not yet delivered to this fragment's host.
    pub waiting_inputs: usize,
    /// Time the last input arrived, i.e. when the fragment became runnable.
    pub ready_s: Option<f64>,
    pub done_s: Option<f64>,
}

/// A completed or in-flight intermediate hand-off between hosts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub src: usize,
    pub dst: usize,
    pub size_mb: f64,
    pub start_s: f64,
    pub duration_s: f64,
    /// Latency part of the duration after jitter and truncation.
    pub latency_s: f64,
    pub to_fragment: usize,
}

impl TransferEvent {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// Seconds to move `size_mb` from `src` to `dst` given a standard-normal
/// jitter draw. Returns `(duration, latency)`.
pub fn transfer_duration(src: &Host, dst: &Host, size_mb: f64, z: f64) -> (f64, f64) {
    if src.id == dst.id {
        return (0.0, 0.0);
    }
    let bandwidth = src.bandwidth_mbps.min(dst.bandwidth_mbps);
    let base = src.latency_base_s.max(dst.latency_base_s);
    let std = src.latency_jitter_std_s.max(dst.latency_jitter_std_s);
    let latency = (base + std * z).max(0.0);
    (size_mb / bandwidth + latency, latency)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub joules: Vec<f64>,
    pub busy_s: Vec<f64>,
    /// Utilization of each host over the most recent step.
    pub last_utilization: Vec<f64>,
}

impl EnergyAccount {
    fn new(hosts: usize) -> Self {
        EnergyAccount {
            joules: vec![0.0; hosts],
            busy_s: vec![0.0; hosts],
            last_utilization: vec![0.0; hosts],
        }
    }

    pub fn total_joules(&self) -> f64 {
        self.joules.iter().sum()
    }
}

/// Linear utilization power model integrated over one interval.
pub fn interval_energy(host: &Host, utilization: f64, dt: f64) -> f64 {
    (host.power_idle_w + (host.power_max_w - host.power_idle_w) * utilization) * dt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    pub workload: Workload,
    pub variant: Variant,
    pub dispatch_s: Option<f64>,
    pub completion_s: Option<f64>,
    pub accuracy: f64,
}

impl WorkloadRecord {
    pub fn is_complete(&self) -> bool {
        self.completion_s.is_some()
    }

    /// Completion minus arrival, so admission-queue waiting is included.
    pub fn response_time(&self) -> Result<f64, EngineError> {
        self.completion_s
            .map(|c| c - self.workload.arrival_s)
            .ok_or(EngineError::Incomplete(self.workload.id))
    }

    pub fn sla_met(&self) -> Option<bool> {
        self.response_time()
            .ok()
            .map(|rt| rt <= self.workload.sla_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Dispatch,
    FragmentStart,
    FragmentDone,
    TransferStart,
    TransferDone,
    WorkloadDone,
}

/// One line of the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub workload: u64,
    pub fragment: Option<usize>,
    pub host: Option<usize>,
}

pub fn write_event_log<W: Write>(events: &[Event], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct ActiveWorkload {
    record: WorkloadRecord,
    terminal: usize,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    event: usize,
    end_s: f64,
}

fn time_eps(t: f64) -> f64 {
    1e-12 * (1.0 + t.abs())
}

/// Simulation state of the cluster and all dispatched workloads.
#[derive(Debug, Clone)]
pub struct Engine {
    hosts: Vec<Host>,
    now: f64,
    fragments: Vec<FragmentInstance>,
    /// Fragment ids not yet done, in dispatch order.
    active: Vec<usize>,
    ram_reserved: Vec<f64>,
    in_flight: Vec<InFlight>,
    transfers: Vec<TransferEvent>,
    workloads: BTreeMap<u64, ActiveWorkload>,
    finished: Vec<WorkloadRecord>,
    energy: EnergyAccount,
    work_done_mi: f64,
    jitter: ChaCha8Rng,
    log: Option<Vec<Event>>,
}

impl Engine {
    pub fn new(hosts: Vec<Host>, seed: u64) -> Self {
        let n = hosts.len();
        Engine {
            hosts,
            now: 0.0,
            fragments: Vec::new(),
            active: Vec::new(),
            ram_reserved: vec![0.0; n],
            in_flight: Vec::new(),
            transfers: Vec::new(),
            workloads: BTreeMap::new(),
            finished: Vec::new(),
            energy: EnergyAccount::new(n),
            work_done_mi: 0.0,
            jitter: rng::stream(seed, Stream::Jitter),
            log: None,
        }
    }

    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn fragments(&self) -> &[FragmentInstance] {
        &self.fragments
    }

    pub fn transfers(&self) -> &[TransferEvent] {
        &self.transfers
    }

    pub fn events(&self) -> Option<&[Event]> {
        self.log.as_deref()
    }

    pub fn energy(&self) -> &EnergyAccount {
        &self.energy
    }

    /// Per-host joules and the cluster total.
    pub fn energy_total(&self) -> (Vec<f64>, f64) {
        (self.energy.joules.clone(), self.energy.total_joules())
    }

    /// Million instructions executed so far across all fragments.
    pub fn work_done_mi(&self) -> f64 {
        self.work_done_mi
    }

    /// Integral of host capacity over the time each host had work, in MI.
    pub fn capacity_busy_integral(&self) -> f64 {
        self.hosts
            .iter()
            .zip(&self.energy.busy_s)
            .map(|(h, b)| h.capacity_mips * b)
            .sum()
    }

    pub fn active_workloads(&self) -> usize {
        self.workloads.len()
    }

    pub fn is_idle(&self) -> bool {
        self.workloads.is_empty()
    }

    /// RAM held by unfinished fragments on `host`, recomputed from scratch.
    pub fn resident_ram(&self, host: usize) -> f64 {
        self.active
            .iter()
            .map(|&i| &self.fragments[i])
            .filter(|f| f.host == host)
            .map(|f| f.fragment.ram_mb)
            .sum()
    }

    pub fn view(&self) -> ClusterView {
        let mut load = vec![0usize; self.hosts.len()];
        for &i in &self.active {
            load[self.fragments[i].host] += 1;
        }
        ClusterView {
            hosts: self
                .hosts
                .iter()
                .map(|h| HostView {
                    id: h.id,
                    capacity_mips: h.capacity_mips,
                    ram_mb: h.ram_mb,
                    free_ram_mb: h.ram_mb - self.ram_reserved[h.id],
                    load: load[h.id],
                })
                .collect(),
        }
    }

    /// Records and removes workloads that completed since the last call.
    pub fn drain_finished(&mut self) -> Vec<WorkloadRecord> {
        std::mem::take(&mut self.finished)
    }

    /// Records of workloads still executing.
    pub fn unfinished(&self) -> Vec<WorkloadRecord> {
        self.workloads.values().map(|a| a.record.clone()).collect()
    }

    fn emit(
        &mut self,
        kind: EventKind,
        workload: u64,
        fragment: Option<usize>,
        host: Option<usize>,
    ) {
        if let Some(log) = self.log.as_mut() {
            log.push(Event {
                t: self.now,
                kind,
                workload,
                fragment,
                host,
            });
        }
    }

    /// Starts executing a workload at the current time with the given
    /// per-node host assignment.
    pub fn dispatch(
        &mut self,
        workload: Workload,
        variant: Variant,
        accuracy: f64,
        graph: &FragmentGraph,
        hosts: &[usize],
    ) -> Result<(), EngineError> {
        if hosts.len() != graph.len() {
            return Err(EngineError::PlacementSize {
                expected: graph.len(),
                got: hosts.len(),
            });
        }
        if self.workloads.contains_key(&workload.id) {
            return Err(EngineError::DuplicateWorkload(workload.id));
        }
        let mut need = vec![0.0; self.hosts.len()];
        for (node, &h) in graph.nodes.iter().zip(hosts) {
            if h >= self.hosts.len() {
                return Err(EngineError::UnknownHost(h));
            }
            need[h] += node.fragment.ram_mb;
        }
        for (h, &n) in need.iter().enumerate() {
            if n > 0.0 && self.ram_reserved[h] + n > self.hosts[h].ram_mb {
                return Err(EngineError::InsufficientRam { host: h, needed: n });
            }
        }

        let wid = workload.id;
        let base = self.fragments.len();
        for (idx, (node, &h)) in graph.nodes.iter().zip(hosts).enumerate() {
            self.ram_reserved[h] += node.fragment.ram_mb;
            self.fragments.push(FragmentInstance {
                id: base + idx,
                workload: wid,
                fragment: node.fragment,
                host: h,
                remaining_mi: node.fragment.compute_mi,
                state: FragmentState::Blocked,
                preds: node.preds.iter().map(|p| base + p).collect(),
                succs: graph
                    .successors(idx)
                    .into_iter()
                    .map(|s| base + s)
                    .collect(),
                waiting_inputs: node.preds.len(),
                ready_s: None,
                done_s: None,
            });
            self.active.push(base + idx);
        }
        self.workloads.insert(
            wid,
            ActiveWorkload {
                record: WorkloadRecord {
                    workload,
                    variant,
                    dispatch_s: Some(self.now),
                    completion_s: None,
                    accuracy,
                },
                terminal: base + graph.terminal(),
            },
        );
        self.emit(EventKind::Dispatch, wid, None, None);
        for idx in 0..graph.len() {
            if graph.nodes[idx].preds.is_empty() {
                self.start(base + idx);
            }
        }
        Ok(())
    }

    fn start(&mut self, id: usize) {
        let now = self.now;
        let f = &mut self.fragments[id];
        f.state = FragmentState::Running;
        f.ready_s = Some(now);
        let (w, h) = (f.workload, f.host);
        self.emit(EventKind::FragmentStart, w, Some(id), Some(h));
    }

    fn deliver(&mut self, id: usize) {
        let f = &mut self.fragments[id];
        f.waiting_inputs -= 1;
        if f.waiting_inputs == 0 {
            self.start(id);
        }
    }

    fn complete(&mut self, id: usize) {
        let now = self.now;
        let (wid, host, out, succs) = {
            let f = &mut self.fragments[id];
            f.state = FragmentState::Done;
            f.remaining_mi = 0.0;
            f.done_s = Some(now);
            (f.workload, f.host, f.fragment.output_mb, f.succs.clone())
        };
        self.ram_reserved[host] -= self.fragments[id].fragment.ram_mb;
        if self.ram_reserved[host].abs() < 1e-9 {
            self.ram_reserved[host] = 0.0;
        }
        self.active.retain(|&a| a != id);
        self.emit(EventKind::FragmentDone, wid, Some(id), Some(host));

        for s in succs {
            let dst = self.fragments[s].host;
            let z: f64 = self.jitter.sample(StandardNormal);
            let (duration, latency) =
                transfer_duration(&self.hosts[host], &self.hosts[dst], out, z);
            self.transfers.push(TransferEvent {
                src: host,
                dst,
                size_mb: out,
                start_s: now,
                duration_s: duration,
                latency_s: latency,
                to_fragment: s,
            });
            if duration > 0.0 {
                self.in_flight.push(InFlight {
                    event: self.transfers.len() - 1,
                    end_s: now + duration,
                });
                self.emit(EventKind::TransferStart, wid, Some(s), Some(dst));
            } else {
                self.deliver(s);
            }
        }

        let terminal = self.workloads.get(&wid).map(|a| a.terminal);
        if terminal == Some(id) {
            let mut a = self.workloads.remove(&wid).expect("active workload");
            a.record.completion_s = Some(now);
            self.finished.push(a.record);
            self.emit(EventKind::WorkloadDone, wid, Some(id), Some(host));
        }
    }

    fn running_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.hosts.len()];
        for &i in &self.active {
            let f = &self.fragments[i];
            if f.state == FragmentState::Running {
                counts[f.host] += 1;
            }
        }
        counts
    }

    /// Advances the simulation by `dt` seconds, processing every fragment
    /// completion and transfer arrival that falls inside the window.
    pub fn step(&mut self, dt: f64) {
        let end = self.now + dt;
        let mut busy = vec![0.0; self.hosts.len()];
        loop {
            let counts = self.running_counts();
            let rate =
                |f: &FragmentInstance| self.hosts[f.host].capacity_mips / counts[f.host] as f64;

            let mut next = end;
            for &i in &self.active {
                let f = &self.fragments[i];
                if f.state == FragmentState::Running {
                    next = next.min(self.now + f.remaining_mi / rate(f));
                }
            }
            for t in &self.in_flight {
                next = next.min(t.end_s);
            }
            let next = next.max(self.now);
            let h = next - self.now;
            let eps = time_eps(next);

            let mut finishing = Vec::new();
            let mut progressed = 0.0;
            let mut updates = Vec::new();
            for &i in &self.active {
                let f = &self.fragments[i];
                if f.state != FragmentState::Running {
                    continue;
                }
                let r = rate(f);
                if self.now + f.remaining_mi / r <= next + eps {
                    progressed += f.remaining_mi;
                    finishing.push(i);
                    updates.push((i, 0.0));
                } else {
                    let w = r * h;
                    progressed += w;
                    updates.push((i, f.remaining_mi - w));
                }
            }
            for (i, rem) in updates {
                self.fragments[i].remaining_mi = rem;
            }
            for (host, &c) in counts.iter().enumerate() {
                if c > 0 {
                    busy[host] += h;
                }
            }
            self.work_done_mi += progressed;
            self.now = next;

            for i in finishing {
                self.complete(i);
            }
            let mut arrived: Vec<InFlight> = Vec::new();
            self.in_flight.retain(|t| {
                if t.end_s <= next + eps {
                    arrived.push(*t);
                    false
                } else {
                    true
                }
            });
            for t in arrived {
                let to = self.transfers[t.event].to_fragment;
                let (wid, host) = (self.fragments[to].workload, self.fragments[to].host);
                self.emit(EventKind::TransferDone, wid, Some(to), Some(host));
                self.deliver(to);
            }

            if next >= end {
                break;
            }
        }
        self.now = end;
        for (i, host) in self.hosts.iter().enumerate() {
            let u = if dt > 0.0 {
                (busy[i] / dt).clamp(0.0, 1.0)
            } else {
                0.0
            };
            self.energy.busy_s[i] += busy[i];
            self.energy.last_utilization[i] = u;
            self.energy.joules[i] += interval_energy(host, u, dt);
        }
    }
}
