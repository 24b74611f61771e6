//! Interval loop tying the decider, a placement policy and the engine together.
//!
//! Each interval: admit arrivals, choose a split for each, try to place every
//! waiting workload in FIFO order, advance the engine, then feed completed
//! workloads back to the decider.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decider::{BanditSummary, Decider, DeciderConfig, DeciderError, WorkloadOutcome};
use crate::engine::{
    instantiate_variant, EnergyAccount, Engine, EngineError, Event, FragmentGraph, Variant,
    WorkloadRecord,
};
use crate::model::{ClusterConfig, ProfileSet, Workload};
use crate::rng::{self, Stream};
use crate::schedulers::{Placement, SchedulerKind};

/// Modeled scheduler cost per host examined while placing one fragment.
pub const HOST_EVAL_COST_MS: f64 = 0.0005;
/// Modeled cost of one bandit decision (context test plus two UCB scores).
pub const DECISION_COST_MS: f64 = 0.002;
/// Runs stop at the last arrival plus this many multiples of the largest deadline.
pub const DRAIN_SLA_MULTIPLE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Decider(#[from] DeciderError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("trace references unknown application `{0}`")]
    UnknownApplication(String),
    #[error("trace contains workload id {0} more than once")]
    DuplicateWorkload(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[serde(rename = "splitplace")]
    SplitPlace,
    AllLayer,
    AllSemantic,
    Compressed,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::SplitPlace => "splitplace",
            Policy::AllLayer => "all_layer",
            Policy::AllSemantic => "all_semantic",
            Policy::Compressed => "compressed",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "splitplace" => Ok(Policy::SplitPlace),
            "all_layer" => Ok(Policy::AllLayer),
            "all_semantic" => Ok(Policy::AllSemantic),
            "compressed" => Ok(Policy::Compressed),
            other => Err(format!(
                "unknown policy `{other}` (expected splitplace, all_layer, all_semantic or compressed)"
            )),
        }
    }
}

/// How scheduling time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchedTiming {
    /// Deterministic cost model from decisions taken and hosts examined.
    #[default]
    Modeled,
    /// Wall-clock time of the decide and place calls. Not reproducible.
    WallClock,
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub policy: Policy,
    pub scheduler: SchedulerKind,
    pub decider: DeciderConfig,
    pub seed: u64,
    pub timing: SchedTiming,
    pub record_events: bool,
    /// Overrides the default stop time.
    pub horizon_s: Option<f64>,
}

impl SimulationConfig {
    pub fn new(policy: Policy, scheduler: SchedulerKind, seed: u64) -> Self {
        SimulationConfig {
            policy,
            scheduler,
            decider: DeciderConfig::default(),
            seed,
            timing: SchedTiming::Modeled,
            record_events: false,
            horizon_s: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One record per trace workload, sorted by id; unfinished ones have no completion.
    pub records: Vec<WorkloadRecord>,
    pub energy: EnergyAccount,
    /// Scheduling time of every interval that had something to decide or place.
    pub sched_times_ms: Vec<f64>,
    pub bandit: Option<BanditSummary>,
    /// Simulated time at which the run stopped.
    pub end_s: f64,
    pub events: Option<Vec<Event>>,
    /// Decisions taken by the decider, by workload id, in decision order.
    pub decisions: Vec<(u64, Variant)>,
}

struct Waiting {
    workload: Workload,
    variant: Variant,
    accuracy: f64,
    graph: FragmentGraph,
}

pub fn outcome_of(record: &WorkloadRecord, response_time_s: f64) -> WorkloadOutcome {
    WorkloadOutcome {
        response_time_s,
        sla_s: record.workload.sla_s,
        accuracy: record.accuracy,
        decision: record.variant.decision(),
        app: record.workload.app.clone(),
    }
}

pub fn simulate(
    cluster: &ClusterConfig,
    profiles: &ProfileSet,
    trace: &[Workload],
    cfg: &SimulationConfig,
) -> Result<RunOutput, SimError> {
    let mut ids = BTreeSet::new();
    for w in trace {
        if profiles.get(&w.app).is_none() {
            return Err(SimError::UnknownApplication(w.app.clone()));
        }
        if !ids.insert(w.id) {
            return Err(SimError::DuplicateWorkload(w.id));
        }
    }
    let mut arrivals: Vec<&Workload> = trace.iter().collect();
    arrivals.sort_by(|a, b| a.arrival_s.total_cmp(&b.arrival_s).then(a.id.cmp(&b.id)));

    let dt = cluster.interval_s;
    let stop_at = cfg.horizon_s.unwrap_or_else(|| {
        let last = arrivals.last().map_or(0.0, |w| w.arrival_s);
        let max_sla = trace.iter().map(|w| w.sla_s).fold(0.0, f64::max);
        last + DRAIN_SLA_MULTIPLE * max_sla + dt
    });

    let mut engine = Engine::new(cluster.hosts.clone(), cfg.seed);
    if cfg.record_events {
        engine = engine.with_event_log();
    }
    let mut scheduler = cfg
        .scheduler
        .build(rng::stream(cfg.seed, Stream::Scheduler));
    let mut decider = match cfg.policy {
        Policy::SplitPlace => Some(Decider::new(cfg.decider, profiles)?),
        _ => None,
    };

    let mut queue: VecDeque<Waiting> = VecDeque::new();
    let mut next_arrival = 0;
    let mut records = Vec::with_capacity(trace.len());
    let mut sched_times_ms = Vec::new();
    let mut decisions = Vec::new();
    let hosts = cluster.hosts.len() as f64;

    loop {
        let now = engine.now();
        let eps = 1e-9 * (1.0 + now.abs());
        let started = Instant::now();
        let mut modeled_ms = 0.0;
        let mut attempted = false;

        while next_arrival < arrivals.len() && arrivals[next_arrival].arrival_s <= now + eps {
            let w = arrivals[next_arrival].clone();
            next_arrival += 1;
            attempted = true;
            let variant = match (cfg.policy, decider.as_mut()) {
                (Policy::SplitPlace, Some(d)) => {
                    modeled_ms += DECISION_COST_MS;
                    let v = Variant::from(d.decide(&w)?);
                    decisions.push((w.id, v));
                    v
                }
                (Policy::AllSemantic, _) => Variant::Semantic,
                (Policy::Compressed, _) => Variant::Compressed,
                _ => Variant::Layer,
            };
            let profile = profiles.get(&w.app).expect("checked above");
            queue.push_back(Waiting {
                accuracy: variant.accuracy(profile),
                graph: instantiate_variant(variant, profile),
                workload: w,
                variant,
            });
        }

        let mut still_waiting = VecDeque::with_capacity(queue.len());
        while let Some(item) = queue.pop_front() {
            attempted = true;
            modeled_ms += HOST_EVAL_COST_MS * hosts * item.graph.len() as f64;
            match scheduler.place(&item.graph, &engine.view()) {
                Placement::Assigned(hosts) => engine.dispatch(
                    item.workload,
                    item.variant,
                    item.accuracy,
                    &item.graph,
                    &hosts,
                )?,
                Placement::Queued => still_waiting.push_back(item),
            }
        }
        queue = still_waiting;

        if attempted {
            sched_times_ms.push(match cfg.timing {
                SchedTiming::Modeled => modeled_ms,
                SchedTiming::WallClock => started.elapsed().as_secs_f64() * 1e3,
            });
        }

        engine.step(dt);

        for record in engine.drain_finished() {
            if let Some(d) = decider.as_mut() {
                let rt = record.response_time()?;
                d.feedback(record.workload.id, &outcome_of(&record, rt))?;
            }
            records.push(record);
        }

        let drained = next_arrival == arrivals.len() && queue.is_empty() && engine.is_idle();
        if drained || engine.now() >= stop_at - eps {
            break;
        }
    }

    records.extend(engine.unfinished());
    records.extend(queue.into_iter().map(|item| WorkloadRecord {
        workload: item.workload,
        variant: item.variant,
        dispatch_s: None,
        completion_s: None,
        accuracy: item.accuracy,
    }));
    records.sort_by_key(|r| r.workload.id);

    Ok(RunOutput {
        records,
        energy: engine.energy().clone(),
        sched_times_ms,
        bandit: decider.as_ref().map(|d| d.bandit().summary()),
        end_s: engine.now(),
        events: engine.events().map(|e| e.to_vec()),
        decisions,
    })
}
