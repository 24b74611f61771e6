//! Run summaries in the shape of a policy comparison table: energy,
//! scheduling time, SLA violations, accuracy and reward.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decider::{aggregate_reward, ArmStats, BanditSummary, ContextSummary, WorkloadOutcome};
use crate::engine::{EnergyAccount, WorkloadRecord};
use crate::simulation::outcome_of;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no workload completed; metrics are undefined")]
    NothingCompleted,
    #[error("no reports to aggregate")]
    NoReports,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

pub const CSV_HEADER: &str = "model,energy_wh,sched_time_ms_mean,sched_time_ms_std,sla_violation_rate,sla_violation_std,accuracy_mean,reward";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimeStats {
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub replications: usize,
    pub workloads: usize,
    pub completed: usize,
    pub energy_wh: f64,
    pub sched_time_ms_mean: f64,
    pub sched_time_ms_std: f64,
    pub sla_violation_rate: f64,
    pub sla_violation_std: f64,
    pub accuracy_mean: f64,
    pub reward: f64,
    pub response_time_s: ResponseTimeStats,
    pub bandit: Option<BanditSummary>,
}

/// Reward outcomes for every record. Workloads still open when the run
/// stopped count as deadline misses with zero accuracy.
pub fn closed_outcomes(records: &[WorkloadRecord], end_s: f64) -> Vec<WorkloadOutcome> {
    records
        .iter()
        .map(|r| match r.response_time() {
            Ok(rt) => outcome_of(r, rt),
            Err(_) => WorkloadOutcome {
                accuracy: 0.0,
                ..outcome_of(
                    r,
                    (end_s - r.workload.arrival_s).max(2.0 * r.workload.sla_s),
                )
            },
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(
    model: &str,
    records: &[WorkloadRecord],
    energy: &EnergyAccount,
    sched_times_ms: &[f64],
    end_s: f64,
    bandit: Option<BanditSummary>,
) -> Result<MetricsReport, MetricsError> {
    let mut rts: Vec<f64> = records
        .iter()
        .filter_map(|r| r.response_time().ok())
        .collect();
    if rts.is_empty() {
        return Err(MetricsError::NothingCompleted);
    }
    let outcomes = closed_outcomes(records, end_s);
    let violations = outcomes.iter().filter(|o| !o.sla_met()).count();
    let accuracies: Vec<f64> = records
        .iter()
        .filter(|r| r.is_complete())
        .map(|r| r.accuracy)
        .collect();
    let response_time_s = ResponseTimeStats {
        mean: mean(&rts),
        p95: {
            rts.sort_by(f64::total_cmp);
            percentile(&rts, 0.95)
        },
        max: rts.last().copied().unwrap_or(0.0),
    };
    Ok(MetricsReport {
        model: model.to_string(),
        replications: 1,
        workloads: records.len(),
        completed: rts.len(),
        energy_wh: energy.total_joules() / 3600.0,
        sched_time_ms_mean: mean(sched_times_ms),
        sched_time_ms_std: sample_std(sched_times_ms),
        sla_violation_rate: violations as f64 / outcomes.len() as f64,
        sla_violation_std: 0.0,
        accuracy_mean: mean(&accuracies),
        reward: aggregate_reward(&outcomes).expect("non-empty"),
        response_time_s,
        bandit,
    })
}

/// Combines per-replication reports into mean ± sample standard deviation.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoReports)?;
    let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let sched = col(|r| r.sched_time_ms_mean);
    let sla = col(|r| r.sla_violation_rate);
    Ok(MetricsReport {
        model: first.model.clone(),
        replications: reports.iter().map(|r| r.replications).sum(),
        workloads: reports.iter().map(|r| r.workloads).sum(),
        completed: reports.iter().map(|r| r.completed).sum(),
        energy_wh: mean(&col(|r| r.energy_wh)),
        sched_time_ms_mean: mean(&sched),
        sched_time_ms_std: sample_std(&sched),
        sla_violation_rate: mean(&sla),
        sla_violation_std: sample_std(&sla),
        accuracy_mean: mean(&col(|r| r.accuracy_mean)),
        reward: mean(&col(|r| r.reward)),
        response_time_s: ResponseTimeStats {
            mean: mean(&col(|r| r.response_time_s.mean)),
            p95: mean(&col(|r| r.response_time_s.p95)),
            max: reports
                .iter()
                .map(|r| r.response_time_s.max)
                .fold(0.0, f64::max),
        },
        bandit: pool_bandits(reports),
    })
}

/// Sums pulls across replications; arm means are pull-weighted.
fn pool_bandits(reports: &[MetricsReport]) -> Option<BanditSummary> {
    let all: Vec<&BanditSummary> = reports.iter().filter_map(|r| r.bandit.as_ref()).collect();
    if all.is_empty() {
        return None;
    }
    let arm = |pick: fn(&BanditSummary) -> ArmStats| {
        let pulls: u64 = all.iter().map(|b| pick(b).pulls).sum();
        let weighted: f64 = all
            .iter()
            .map(|b| pick(b).pulls as f64 * pick(b).mean)
            .sum();
        ArmStats {
            pulls,
            mean: if pulls == 0 {
                0.0
            } else {
                weighted / pulls as f64
            },
        }
    };
    Some(BanditSummary {
        tight: ContextSummary {
            total_pulls: all.iter().map(|b| b.tight.total_pulls).sum(),
            layer: arm(|b| b.tight.layer),
            semantic: arm(|b| b.tight.semantic),
        },
        loose: ContextSummary {
            total_pulls: all.iter().map(|b| b.loose.total_pulls).sum(),
            layer: arm(|b| b.loose.layer),
            semantic: arm(|b| b.loose.semantic),
        },
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    model: &'a str,
    energy_wh: f64,
    sched_time_ms_mean: f64,
    sched_time_ms_std: f64,
    sla_violation_rate: f64,
    sla_violation_std: f64,
    accuracy_mean: f64,
    reward: f64,
}

pub fn to_csv(reports: &[MetricsReport]) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow {
            model: &r.model,
            energy_wh: r.energy_wh,
            sched_time_ms_mean: r.sched_time_ms_mean,
            sched_time_ms_std: r.sched_time_ms_std,
            sla_violation_rate: r.sla_violation_rate,
            sla_violation_std: r.sla_violation_std,
            accuracy_mean: r.accuracy_mean,
            reward: r.reward,
        })?;
    }
    if reports.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_json(reports: &[MetricsReport]) -> String {
    let mut s = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(reports)
    }
    .expect("reports serialize");
    s.push('\n');
    s
}

/// Parses either a single report object or an array of reports.
pub fn from_json(text: &str) -> Result<Vec<MetricsReport>, serde_json::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Box<MetricsReport>),
        Many(Vec<MetricsReport>),
    }
    Ok(match serde_json::from_str(text)? {
        OneOrMany::One(r) => vec![*r],
        OneOrMany::Many(v) => v,
    })
}

pub fn render(reports: &[MetricsReport], format: Format) -> Result<String, MetricsError> {
    match format {
        Format::Json => Ok(to_json(reports)),
        Format::Csv => to_csv(reports),
    }
}

pub fn export(reports: &[MetricsReport], format: Format, path: &Path) -> Result<(), MetricsError> {
    let text = render(reports, format)?;
    fs::write(path, text).map_err(|source| MetricsError::Write {
        path: path.to_path_buf(),
        source,
    })
}
