//! Workload traces: Poisson arrivals per interval, categorical application
//! mix, deadlines scaled from each application's reference layer time.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProfileSet, Workload};
use crate::rng::{self, Stream};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unknown application `{0}` in app_mix")]
    UnknownApplication(String),
    #[error("invalid trace spec: {0}")]
    InvalidSpec(String),
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn default_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub horizon_s: f64,
    /// Arrivals are batched at the start of each interval of this length.
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    pub lambda_per_interval: f64,
    pub app_mix: BTreeMap<String, f64>,
    pub sla_multiplier_range: [f64; 2],
    pub seed: u64,
}

impl TraceSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::InvalidSpec(m.to_string()));
        if !(self.horizon_s.is_finite() && self.horizon_s > 0.0) {
            return bad("horizon_s must be > 0");
        }
        if !(self.interval_s.is_finite() && self.interval_s > 0.0) {
            return bad("interval_s must be > 0");
        }
        if !(self.lambda_per_interval.is_finite() && self.lambda_per_interval >= 0.0) {
            return bad("lambda_per_interval must be >= 0");
        }
        if self.app_mix.is_empty() || self.app_mix.values().any(|&p| p.is_nan() || p < 0.0) {
            return bad("app_mix must be a non-empty set of non-negative probabilities");
        }
        let total: f64 = self.app_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("app_mix probabilities must sum to 1");
        }
        let [lo, hi] = self.sla_multiplier_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("sla_multiplier_range must satisfy 0 < min <= max");
        }
        Ok(())
    }
}

/// Generates a trace. Workload ids are dense from 0 in arrival order.
pub fn generate(spec: &TraceSpec, profiles: &ProfileSet) -> Result<Vec<Workload>, TraceError> {
    spec.validate()?;
    let mut priors = Vec::with_capacity(spec.app_mix.len());
    for name in spec.app_mix.keys() {
        let p = profiles
            .get(name)
            .ok_or_else(|| TraceError::UnknownApplication(name.clone()))?;
        priors.push((name.clone(), p.prior_layer_time_s()));
    }
    let mut rng = rng::stream(spec.seed, Stream::Workloads);
    if spec.lambda_per_interval == 0.0 {
        return Ok(Vec::new());
    }
    let arrivals = Poisson::new(spec.lambda_per_interval)
        .map_err(|e| TraceError::InvalidSpec(e.to_string()))?;
    let mix = WeightedIndex::new(spec.app_mix.values().copied())
        .map_err(|e| TraceError::InvalidSpec(e.to_string()))?;
    let [lo, hi] = spec.sla_multiplier_range;

    let mut out = Vec::new();
    let intervals = (spec.horizon_s / spec.interval_s).ceil() as u64;
    for k in 0..intervals {
        let t = k as f64 * spec.interval_s;
        let count = arrivals.sample(&mut rng) as u64;
        for _ in 0..count {
            let (app, prior) = &priors[mix.sample(&mut rng)];
            let u = if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            };
            out.push(Workload {
                id: out.len() as u64,
                arrival_s: t,
                app: app.clone(),
                sla_s: u * prior,
            });
        }
    }
    Ok(out)
}

pub fn write_trace<W: Write>(trace: &[Workload], mut out: W) -> std::io::Result<()> {
    for w in trace {
        serde_json::to_writer(&mut out, w)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_trace(trace: &[Workload], path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    let io = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).map_err(io)?;
    fs::write(path, buf).map_err(io)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<Workload>, TraceError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_trace(BufReader::new(file), path)
}

/// Parses a JSON-lines trace; blank lines are skipped.
pub fn read_trace<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<Workload>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let malformed = |message: String| TraceError::Malformed {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let w: Workload = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if !(w.sla_s.is_finite() && w.sla_s > 0.0) {
            return Err(malformed(format!("sla_s must be > 0, got {}", w.sla_s)));
        }
        if !(w.arrival_s.is_finite() && w.arrival_s >= 0.0) {
            return Err(malformed(format!(
                "arrival_s must be >= 0, got {}",
                w.arrival_s
            )));
        }
        out.push(w);
    }
    Ok(out)
}
