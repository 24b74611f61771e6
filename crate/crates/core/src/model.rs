//! Shared domain types: hosts, fragments, application profiles, workloads and
//! cluster configuration, with validation and JSON loading.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid cluster: {}", join(.0))]
    InvalidCluster(Vec<ClusterViolation>),
    #[error("invalid profile `{name}`: {}", join(.violations))]
    InvalidProfile {
        name: String,
        violations: Vec<ProfileViolation>,
    },
    #[error("duplicate profile name `{0}`")]
    DuplicateProfile(String),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl ModelError {
    fn parse(path: &Path, err: serde_json::Error) -> Self {
        ModelError::Parse {
            path: path.to_path_buf(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// An edge node.
///
/// The `id` is not part of the file format; it is the host's position in the
/// cluster's host list and is assigned when a cluster is parsed or built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Host {
    #[serde(skip)]
    pub id: usize,
    pub capacity_mips: f64,
    pub ram_mb: f64,
    pub power_idle_w: f64,
    pub power_max_w: f64,
    pub bandwidth_mbps: f64,
    pub latency_base_s: f64,
    pub latency_jitter_std_s: f64,
}

/// One piece of a split network: its compute demand, resident memory and
/// the size of the intermediate it forwards to its successor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fragment {
    pub compute_mi: f64,
    pub ram_mb: f64,
    pub output_mb: f64,
}

impl Fragment {
    pub fn new(compute_mi: f64, ram_mb: f64, output_mb: f64) -> Self {
        Fragment {
            compute_mi,
            ram_mb,
            output_mb,
        }
    }

    fn is_valid(&self) -> bool {
        self.compute_mi.is_finite()
            && self.compute_mi > 0.0
            && self.ram_mb.is_finite()
            && self.ram_mb > 0.0
            && self.output_mb.is_finite()
            && self.output_mb >= 0.0
    }
}

/// Split definitions for one application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationProfile {
    pub name: String,
    pub layer_chain: Vec<Fragment>,
    pub semantic_branches: Vec<Vec<Fragment>>,
    pub aggregation: Fragment,
    pub accuracy_layer: f64,
    pub accuracy_semantic: f64,
    pub reference_mips: f64,
}

impl ApplicationProfile {
    pub fn layer_compute_mi(&self) -> f64 {
        self.layer_chain.iter().map(|f| f.compute_mi).sum()
    }

    pub fn layer_ram_mb(&self) -> f64 {
        self.layer_chain.iter().map(|f| f.ram_mb).sum()
    }

    /// Expected layer-split execution time on a reference host, used as the
    /// starting estimate before any layer execution has been observed.
    pub fn prior_layer_time_s(&self) -> f64 {
        self.layer_compute_mi() / self.reference_mips
    }

    pub fn accuracy_of(&self, decision: SplitDecision) -> f64 {
        match decision {
            SplitDecision::Layer => self.accuracy_layer,
            SplitDecision::Semantic => self.accuracy_semantic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProfileViolation {
    EmptyName,
    LayerChainEmpty,
    TooFewBranches(usize),
    EmptyBranch(usize),
    InvalidLayerFragment(usize),
    InvalidBranchFragment { branch: usize, index: usize },
    InvalidAggregation,
    AccuracyOutOfRange(&'static str),
    AccuracyOrdering,
    ReferenceMips,
}

impl fmt::Display for ProfileViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileViolation::EmptyName => write!(f, "name empty"),
            ProfileViolation::LayerChainEmpty => write!(f, "layer_chain empty"),
            ProfileViolation::TooFewBranches(n) => {
                write!(f, "semantic_branches needs at least 2 branches, got {n}")
            }
            ProfileViolation::EmptyBranch(b) => write!(f, "semantic branch {b} empty"),
            ProfileViolation::InvalidLayerFragment(i) => {
                write!(f, "layer_chain fragment {i} invalid")
            }
            ProfileViolation::InvalidBranchFragment { branch, index } => {
                write!(f, "semantic branch {branch} fragment {index} invalid")
            }
            ProfileViolation::InvalidAggregation => write!(f, "aggregation fragment invalid"),
            ProfileViolation::AccuracyOutOfRange(field) => write!(f, "{field} outside [0, 1]"),
            ProfileViolation::AccuracyOrdering => write!(f, "accuracy ordering violated"),
            ProfileViolation::ReferenceMips => write!(f, "reference_mips must be > 0"),
        }
    }
}

/// Checks every profile invariant and reports each violation found.
pub fn validate_profile(p: &ApplicationProfile) -> Result<(), Vec<ProfileViolation>> {
    let mut v = Vec::new();
    if p.name.trim().is_empty() {
        v.push(ProfileViolation::EmptyName);
    }
    if p.layer_chain.is_empty() {
        v.push(ProfileViolation::LayerChainEmpty);
    }
    for (i, f) in p.layer_chain.iter().enumerate() {
        if !f.is_valid() {
            v.push(ProfileViolation::InvalidLayerFragment(i));
        }
    }
    if p.semantic_branches.len() < 2 {
        v.push(ProfileViolation::TooFewBranches(p.semantic_branches.len()));
    }
    for (b, branch) in p.semantic_branches.iter().enumerate() {
        if branch.is_empty() {
            v.push(ProfileViolation::EmptyBranch(b));
        }
        for (i, f) in branch.iter().enumerate() {
            if !f.is_valid() {
                v.push(ProfileViolation::InvalidBranchFragment {
                    branch: b,
                    index: i,
                });
            }
        }
    }
    if !p.aggregation.is_valid() {
        v.push(ProfileViolation::InvalidAggregation);
    }
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    let layer_ok = in_unit(p.accuracy_layer);
    let semantic_ok = in_unit(p.accuracy_semantic);
    if !layer_ok {
        v.push(ProfileViolation::AccuracyOutOfRange("accuracy_layer"));
    }
    if !semantic_ok {
        v.push(ProfileViolation::AccuracyOutOfRange("accuracy_semantic"));
    }
    if layer_ok && semantic_ok && p.accuracy_layer < p.accuracy_semantic {
        v.push(ProfileViolation::AccuracyOrdering);
    }
    if !(p.reference_mips.is_finite() && p.reference_mips > 0.0) {
        v.push(ProfileViolation::ReferenceMips);
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// One inference job. `sla_s` is relative to `arrival_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub id: u64,
    pub arrival_s: f64,
    pub app: String,
    pub sla_s: f64,
}

impl Workload {
    pub fn deadline_s(&self) -> f64 {
        self.arrival_s + self.sla_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitDecision {
    Layer,
    Semantic,
}

impl SplitDecision {
    pub const ALL: [SplitDecision; 2] = [SplitDecision::Layer, SplitDecision::Semantic];

    pub fn index(self) -> usize {
        match self {
            SplitDecision::Layer => 0,
            SplitDecision::Semantic => 1,
        }
    }
}

impl fmt::Display for SplitDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitDecision::Layer => "layer",
            SplitDecision::Semantic => "semantic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterViolation {
    NoHosts,
    Interval,
    Host { id: usize, field: &'static str },
    PowerEnvelope(usize),
}

impl fmt::Display for ClusterViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterViolation::NoHosts => write!(f, "≥1 host required"),
            ClusterViolation::Interval => write!(f, "interval_s must be > 0"),
            ClusterViolation::Host { id, field } => write!(f, "host {id}: {field} out of range"),
            ClusterViolation::PowerEnvelope(id) => {
                write!(f, "host {id}: power_max_w < power_idle_w")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub hosts: Vec<Host>,
    pub interval_s: f64,
    pub seed: u64,
}

impl ClusterConfig {
    /// Ten Raspberry-Pi class devices alternating between 4 GB and 8 GB of RAM.
    pub fn default_cluster() -> Self {
        let hosts = (0..10)
            .map(|id| {
                let big = id % 2 == 1;
                Host {
                    id,
                    capacity_mips: if big { 2500.0 } else { 2000.0 },
                    ram_mb: if big { 8192.0 } else { 4096.0 },
                    power_idle_w: 2.7,
                    power_max_w: if big { 7.3 } else { 6.4 },
                    bandwidth_mbps: 12.5,
                    latency_base_s: 0.05,
                    latency_jitter_std_s: 0.02,
                }
            })
            .collect();
        ClusterConfig {
            hosts,
            interval_s: 1.0,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), Vec<ClusterViolation>> {
        let mut v = Vec::new();
        if self.hosts.is_empty() {
            v.push(ClusterViolation::NoHosts);
        }
        if !(self.interval_s.is_finite() && self.interval_s > 0.0) {
            v.push(ClusterViolation::Interval);
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        for (i, h) in self.hosts.iter().enumerate() {
            let checks: [(&'static str, bool); 7] = [
                ("id", h.id == i),
                ("capacity_mips", positive(h.capacity_mips)),
                ("ram_mb", positive(h.ram_mb)),
                ("power_idle_w", non_negative(h.power_idle_w)),
                ("bandwidth_mbps", positive(h.bandwidth_mbps)),
                ("latency_base_s", non_negative(h.latency_base_s)),
                ("latency_jitter_std_s", non_negative(h.latency_jitter_std_s)),
            ];
            for (field, ok) in checks {
                if !ok {
                    v.push(ClusterViolation::Host { id: i, field });
                }
            }
            if !h.power_max_w.is_finite() {
                v.push(ClusterViolation::Host {
                    id: i,
                    field: "power_max_w",
                });
            } else if h.power_max_w < h.power_idle_w {
                v.push(ClusterViolation::PowerEnvelope(i));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    fn assign_ids(&mut self) {
        for (i, h) in self.hosts.iter_mut().enumerate() {
            h.id = i;
        }
    }

    /// Parses and validates a cluster from JSON text.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ModelError> {
        let mut cfg: ClusterConfig =
            serde_json::from_str(text).map_err(|e| ModelError::parse(origin, e))?;
        cfg.assign_ids();
        cfg.validate().map_err(ModelError::InvalidCluster)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster serializes")
    }
}

pub fn load_cluster(path: impl AsRef<Path>) -> Result<ClusterConfig, ModelError> {
    let path = path.as_ref();
    let text = read(path)?;
    ClusterConfig::from_json(&text, path)
}

fn read(path: &Path) -> Result<String, ModelError> {
    fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Validated, name-unique set of application profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: Vec<ApplicationProfile>,
}

impl ProfileSet {
    pub fn new(profiles: Vec<ApplicationProfile>) -> Result<Self, ModelError> {
        for (i, p) in profiles.iter().enumerate() {
            if let Err(violations) = validate_profile(p) {
                return Err(ModelError::InvalidProfile {
                    name: p.name.clone(),
                    violations,
                });
            }
            if profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(ModelError::DuplicateProfile(p.name.clone()));
            }
        }
        Ok(ProfileSet { profiles })
    }

    pub fn get(&self, name: &str) -> Option<&ApplicationProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ApplicationProfile> {
        self.profiles.iter()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn as_slice(&self) -> &[ApplicationProfile] {
        &self.profiles
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ModelError> {
        let profiles: Vec<ApplicationProfile> =
            serde_json::from_str(text).map_err(|e| ModelError::parse(origin, e))?;
        ProfileSet::new(profiles)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.profiles).expect("profiles serialize")
    }

    /// Synthetic stand-ins for ResNet50-V2, MobileNetV2 and InceptionV3.
    ///
    /// The demands are invented numbers of plausible relative magnitude, not
    /// measurements of the real networks. Each model has a four-stage layer
    /// chain and four single-fragment semantic branches whose total compute
    /// equals the chain's; aggregation costs 1% of branch compute.
    pub fn defaults() -> Self {
        let profiles = vec![
            synthetic_profile(
                "resnet50v2",
                [
                    (2400.0, 1200.0, 3.2),
                    (2000.0, 1000.0, 1.6),
                    (2000.0, 1000.0, 0.8),
                    (1600.0, 800.0, 0.0),
                ],
                (950.0, 0.25),
                0.93,
                0.89,
            ),
            synthetic_profile(
                "mobilenetv2",
                [
                    (1000.0, 500.0, 2.4),
                    (800.0, 400.0, 1.2),
                    (700.0, 400.0, 0.6),
                    (500.0, 300.0, 0.0),
                ],
                (420.0, 0.15),
                0.90,
                0.86,
            ),
            synthetic_profile(
                "inceptionv3",
                [
                    (3400.0, 1800.0, 4.0),
                    (3000.0, 1600.0, 2.0),
                    (2800.0, 1600.0, 1.0),
                    (2300.0, 1400.0, 0.0),
                ],
                (1500.0, 0.3),
                0.94,
                0.90,
            ),
        ];
        ProfileSet::new(profiles).expect("default profiles are valid")
    }
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileSet, ModelError> {
    let path = path.as_ref();
    let text = read(path)?;
    ProfileSet::from_json(&text, path)
}

fn synthetic_profile(
    name: &str,
    chain: [(f64, f64, f64); 4],
    (branch_ram, branch_out): (f64, f64),
    accuracy_layer: f64,
    accuracy_semantic: f64,
) -> ApplicationProfile {
    let layer_chain: Vec<Fragment> = chain
        .iter()
        .map(|&(c, r, o)| Fragment::new(c, r, o))
        .collect();
    let total: f64 = layer_chain.iter().map(|f| f.compute_mi).sum();
    let semantic_branches = (0..4)
        .map(|_| vec![Fragment::new(total / 4.0, branch_ram, branch_out)])
        .collect();
    ApplicationProfile {
        name: name.to_string(),
        layer_chain,
        semantic_branches,
        aggregation: Fragment::new(total * 0.01, 128.0, 0.0),
        accuracy_layer,
        accuracy_semantic,
        reference_mips: 2000.0,
    }
}
