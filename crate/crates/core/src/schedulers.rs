//! Fragment placement policies.
//!
//! A policy sees a fragment graph and a read-only snapshot of the cluster and
//! either assigns every node to a host or queues the whole workload. New
//! policies (including learned ones) plug in through [`PlacementPolicy`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::FragmentGraph;

const RAM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HostView {
    pub id: usize,
    pub capacity_mips: f64,
    pub ram_mb: f64,
    pub free_ram_mb: f64,
    /// Fragments assigned to the host and not yet finished.
    pub load: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterView {
    pub hosts: Vec<HostView>,
}

impl ClusterView {
    /// Hosts with the given free RAM and load, all 1000 MIPS.
    pub fn from_free_ram(free: &[f64], load: &[usize]) -> Self {
        ClusterView {
            hosts: free
                .iter()
                .zip(load)
                .enumerate()
                .map(|(id, (&f, &l))| HostView {
                    id,
                    capacity_mips: 1000.0,
                    ram_mb: f,
                    free_ram_mb: f,
                    load: l,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    /// Host id per graph node, in graph order.
    Assigned(Vec<usize>),
    Queued,
}

impl Placement {
    pub fn hosts(&self) -> Option<&[usize]> {
        match self {
            Placement::Assigned(h) => Some(h),
            Placement::Queued => None,
        }
    }
}

pub trait PlacementPolicy: Send {
    fn name(&self) -> &'static str;
    fn place(&mut self, graph: &FragmentGraph, view: &ClusterView) -> Placement;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    FirstFit,
    LeastLoaded,
    Random,
}

impl SchedulerKind {
    pub fn build(self, rng: ChaCha8Rng) -> Box<dyn PlacementPolicy> {
        match self {
            SchedulerKind::FirstFit => Box::new(FirstFit),
            SchedulerKind::LeastLoaded => Box::new(LeastLoaded),
            SchedulerKind::Random => Box::new(RandomPlacement::new(rng)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::FirstFit => "first_fit",
            SchedulerKind::LeastLoaded => "least_loaded",
            SchedulerKind::Random => "random",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first_fit" => Ok(SchedulerKind::FirstFit),
            "least_loaded" => Ok(SchedulerKind::LeastLoaded),
            "random" => Ok(SchedulerKind::Random),
            other => Err(format!(
                "unknown scheduler `{other}` (expected first_fit, least_loaded or random)"
            )),
        }
    }
}

/// Shared walk for the deterministic policies.
///
/// A node with predecessors stays on its first predecessor's host when it
/// fits, which keeps layer chains together and collects semantic branches
/// at the first branch's host. A semantic branch head avoids hosts already
/// used by this graph when any other host fits. Otherwise `better(a, b)`
/// chooses among feasible hosts.
fn place_with<F>(graph: &FragmentGraph, view: &ClusterView, better: F) -> Placement
where
    F: Fn(&HostView, usize, &HostView, usize) -> bool,
{
    let mut free: Vec<f64> = view.hosts.iter().map(|h| h.free_ram_mb).collect();
    let mut load: Vec<usize> = view.hosts.iter().map(|h| h.load).collect();
    let mut assigned: Vec<usize> = Vec::with_capacity(graph.len());

    for node in &graph.nodes {
        let need = node.fragment.ram_mb;
        let fits = |h: usize, free: &[f64]| free[h] + RAM_EPS >= need;

        let sticky = node
            .preds
            .first()
            .map(|&p| assigned[p])
            .filter(|&h| fits(h, &free));

        let best_among = |allowed: &dyn Fn(usize) -> bool| {
            let mut best: Option<usize> = None;
            for h in 0..view.hosts.len() {
                if !fits(h, &free) || !allowed(h) {
                    continue;
                }
                best = match best {
                    Some(b) if !better(&view.hosts[h], load[h], &view.hosts[b], load[b]) => Some(b),
                    _ => Some(h),
                };
            }
            best
        };

        let choice = sticky.or_else(|| {
            if node.branch.is_some() && node.preds.is_empty() {
                best_among(&|h| !assigned.contains(&h)).or_else(|| best_among(&|_| true))
            } else {
                best_among(&|_| true)
            }
        });

        match choice {
            Some(h) => {
                free[h] -= need;
                load[h] += 1;
                assigned.push(h);
            }
            None => return Placement::Queued,
        }
    }
    Placement::Assigned(assigned)
}

/// Lowest-id host with enough free RAM.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstFit;

impl PlacementPolicy for FirstFit {
    fn name(&self) -> &'static str {
        "first_fit"
    }

    fn place(&mut self, graph: &FragmentGraph, view: &ClusterView) -> Placement {
        place_first_fit(graph, view)
    }
}

pub fn place_first_fit(graph: &FragmentGraph, view: &ClusterView) -> Placement {
    place_with(graph, view, |a, _, b, _| a.id < b.id)
}

/// Feasible host with the fewest unfinished fragments; ties to the lower id.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastLoaded;

impl PlacementPolicy for LeastLoaded {
    fn name(&self) -> &'static str {
        "least_loaded"
    }

    fn place(&mut self, graph: &FragmentGraph, view: &ClusterView) -> Placement {
        place_least_loaded(graph, view)
    }
}

pub fn place_least_loaded(graph: &FragmentGraph, view: &ClusterView) -> Placement {
    place_with(graph, view, |a, la, b, lb| (la, a.id) < (lb, b.id))
}

/// Uniform over feasible hosts, independently per fragment.
#[derive(Debug, Clone)]
pub struct RandomPlacement {
    rng: ChaCha8Rng,
}

impl RandomPlacement {
    pub fn new(rng: ChaCha8Rng) -> Self {
        RandomPlacement { rng }
    }
}

impl PlacementPolicy for RandomPlacement {
    fn name(&self) -> &'static str {
        "random"
    }

    fn place(&mut self, graph: &FragmentGraph, view: &ClusterView) -> Placement {
        place_random(graph, view, &mut self.rng)
    }
}

pub fn place_random<R: Rng + ?Sized>(
    graph: &FragmentGraph,
    view: &ClusterView,
    rng: &mut R,
) -> Placement {
    let mut free: Vec<f64> = view.hosts.iter().map(|h| h.free_ram_mb).collect();
    let mut assigned = Vec::with_capacity(graph.len());
    for node in &graph.nodes {
        let need = node.fragment.ram_mb;
        let feasible: Vec<usize> = (0..free.len())
            .filter(|&h| free[h] + RAM_EPS >= need)
            .collect();
        if feasible.is_empty() {
            return Placement::Queued;
        }
        let h = feasible[rng.random_range(0..feasible.len())];
        free[h] -= need;
        assigned.push(h);
    }
    Placement::Assigned(assigned)
}
