//! Experiment runner: run configs, replication grids, comparisons and the
//! `splitplace` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decider::DeciderConfig;
use crate::engine::write_event_log;
use crate::metrics::{self, Format, MetricsError, MetricsReport};
use crate::model::{load_cluster, load_profiles, ClusterConfig, ModelError, ProfileSet, Workload};
use crate::schedulers::SchedulerKind;
use crate::simulation::{simulate, Policy, RunOutput, SchedTiming, SimError, SimulationConfig};
use crate::trace::{self, TraceError, TraceSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Either a trace file or a spec to generate one from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceSource {
    File(PathBuf),
    Spec(TraceSpec),
}

fn default_alpha() -> f64 {
    DeciderConfig::default().alpha
}

fn default_ucb_c() -> f64 {
    DeciderConfig::default().ucb_c
}

fn default_replications() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// On-disk run configuration. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cluster: PathBuf,
    pub profiles: PathBuf,
    pub trace: TraceSource,
    pub policy: Policy,
    pub scheduler: SchedulerKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_ucb_c")]
    pub ucb_c: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Base seed; replication `r` runs with `seed + r`. Falls back to the cluster seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.cluster);
        fix(&mut self.profiles);
        fix(&mut self.out);
        if let TraceSource::File(p) = &mut self.trace {
            fix(p);
        }
    }
}

/// A run config with every referenced file loaded and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cluster: ClusterConfig,
    pub profiles: ProfileSet,
    pub trace: TraceInput,
    pub policy: Policy,
    pub scheduler: SchedulerKind,
    pub decider: DeciderConfig,
    pub replications: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub timing: SchedTiming,
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceInput {
    Fixed(Vec<Workload>),
    Generated(TraceSpec),
}

impl TraceInput {
    /// The trace replayed by replication `r`. Generated traces advance the
    /// spec seed per replication.
    pub fn for_replication(
        &self,
        r: usize,
        profiles: &ProfileSet,
    ) -> Result<Vec<Workload>, TraceError> {
        match self {
            TraceInput::Fixed(t) => Ok(t.clone()),
            TraceInput::Generated(spec) => {
                let spec = TraceSpec {
                    seed: spec.seed.wrapping_add(r as u64),
                    ..spec.clone()
                };
                trace::generate(&spec, profiles)
            }
        }
    }
}

impl Experiment {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let cluster = load_cluster(&cfg.cluster)?;
        let profiles = load_profiles(&cfg.profiles)?;
        let trace = match &cfg.trace {
            TraceSource::File(p) => TraceInput::Fixed(trace::load_trace(p)?),
            TraceSource::Spec(s) => {
                s.validate()?;
                TraceInput::Generated(s.clone())
            }
        };
        let decider = DeciderConfig {
            alpha: cfg.alpha,
            ucb_c: cfg.ucb_c,
        };
        if !(decider.alpha > 0.0 && decider.alpha <= 1.0) {
            return Err(CliError::Config(format!(
                "alpha must lie in (0, 1], got {}",
                decider.alpha
            )));
        }
        if !(decider.ucb_c.is_finite() && decider.ucb_c >= 0.0) {
            return Err(CliError::Config(format!(
                "ucb_c must be >= 0, got {}",
                decider.ucb_c
            )));
        }
        if cfg.replications == 0 {
            return Err(CliError::Config("replications must be >= 1".into()));
        }
        let seed = cfg.seed.unwrap_or(cluster.seed);
        let exp = Experiment {
            cluster,
            profiles,
            trace,
            policy: cfg.policy,
            scheduler: cfg.scheduler,
            decider,
            replications: cfg.replications,
            seed,
            out: cfg.out.clone(),
            timing: SchedTiming::Modeled,
            record_events: false,
        };
        // Surface unknown applications before any simulation starts.
        for r in 0..exp.replications.min(1) {
            let t = exp.trace.for_replication(r, &exp.profiles)?;
            if let Some(w) = t.iter().find(|w| exp.profiles.get(&w.app).is_none()) {
                return Err(CliError::Config(format!(
                    "trace references unknown application `{}`",
                    w.app
                )));
            }
        }
        Ok(exp)
    }

    pub fn sim_config(&self, replication: usize) -> SimulationConfig {
        SimulationConfig {
            policy: self.policy,
            scheduler: self.scheduler,
            decider: self.decider,
            seed: self.seed.wrapping_add(replication as u64),
            timing: self.timing,
            record_events: self.record_events,
            horizon_s: None,
        }
    }

    pub fn run_replication(&self, r: usize) -> Result<RunOutput, CliError> {
        let trace = self.trace.for_replication(r, &self.profiles)?;
        Ok(simulate(
            &self.cluster,
            &self.profiles,
            &trace,
            &self.sim_config(r),
        )?)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub output: RunOutput,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub replications: Vec<ReplicationResult>,
    pub aggregate: MetricsReport,
}

/// Runs every replication (in parallel) and summarizes them.
pub fn run(exp: &Experiment) -> Result<RunResult, CliError> {
    let replications = (0..exp.replications)
        .into_par_iter()
        .map(|r| {
            let output = exp.run_replication(r)?;
            let report = metrics::summarize(
                exp.policy.as_str(),
                &output.records,
                &output.energy,
                &output.sched_times_ms,
                output.end_s,
                output.bandit.clone(),
            )?;
            Ok(ReplicationResult { output, report })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let reports: Vec<_> = replications.iter().map(|r| r.report.clone()).collect();
    let aggregate = metrics::aggregate(&reports)?;
    Ok(RunResult {
        replications,
        aggregate,
    })
}

/// Rows in comparison order: fixed baselines first, the learned policy last.
pub fn comparison_order(reports: &mut [MetricsReport]) {
    reports.sort_by_key(|r| r.model == Policy::SplitPlace.as_str());
}

/// Runs each experiment on the shared trace and cluster and returns one
/// aggregate row per policy.
pub fn compare(exps: &[Experiment]) -> Result<Vec<MetricsReport>, CliError> {
    if exps.len() < 2 {
        return Err(CliError::Config(
            "comparison needs at least two configs".into(),
        ));
    }
    let first = &exps[0];
    for e in &exps[1..] {
        if e.cluster != first.cluster {
            return Err(CliError::Config(
                "comparison requires a shared cluster".into(),
            ));
        }
        if e.trace != first.trace
            || e.replications != first.replications
            || e.seed != first.seed
            || e.profiles != first.profiles
        {
            return Err(CliError::Config(
                "comparison requires a shared trace".into(),
            ));
        }
    }
    let mut rows = exps
        .iter()
        .map(|e| run(e).map(|r| r.aggregate))
        .collect::<Result<Vec<_>, _>>()?;
    comparison_order(&mut rows);
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(
    name = "splitplace",
    version,
    about = "Split neural-network placement simulator for edge clusters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a trace file from the run config's trace spec.
    GenTrace(GenTraceArgs),
    /// Run one policy for all replications and write reports.
    Run(RunArgs),
    /// Run several policies on one trace and write a comparison table.
    Compare(CompareArgs),
    /// Re-render saved JSON reports as JSON or CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Base seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace file override.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Policy override.
    #[arg(long)]
    pub policy: Option<Policy>,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    /// Measure scheduling time with the wall clock instead of the cost model.
    #[arg(long)]
    pub wall_clock: bool,
    /// Also write a JSON-lines event log per replication.
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run config files; with one config, use --policy to list the policies.
    #[arg(long, required = true)]
    pub config: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Policies to compare (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<Policy>,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report files written by `run` or `compare`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    /// Output directory; prints to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn apply_overrides(
    cfg: &mut RunConfig,
    seed: Option<u64>,
    out: &Option<PathBuf>,
    trace: &Option<PathBuf>,
) {
    if let Some(s) = seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = out {
        cfg.out = o.clone();
    }
    if let Some(t) = trace {
        cfg.trace = TraceSource::File(t.clone());
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

/// Writes a set of files only after all of them have been rendered.
fn write_all(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    files
        .into_iter()
        .map(|(name, bytes)| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
            Ok(p)
        })
        .collect()
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.common.config)?;
    apply_overrides(&mut cfg, None, &args.common.out, &None);
    let TraceSource::Spec(mut spec) = cfg.trace.clone() else {
        return Err(CliError::Config(
            "gen-trace needs a trace spec in the config".into(),
        ));
    };
    if let Some(s) = args.common.seed {
        spec.seed = s;
    }
    let profiles = load_profiles(&cfg.profiles)?;
    let workloads = trace::generate(&spec, &profiles)?;
    let target = args
        .common
        .trace
        .unwrap_or_else(|| cfg.out.join("trace.jsonl"));
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    trace::save_trace(&workloads, &target).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {} workloads to {}",
        workloads.len(),
        target.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.common.config)?;
    apply_overrides(
        &mut cfg,
        args.common.seed,
        &args.common.out,
        &args.common.trace,
    );
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    let mut exp = Experiment::from_config(&cfg)?;
    if args.wall_clock {
        exp.timing = SchedTiming::WallClock;
    }
    exp.record_events = args.events;
    let result = run(&exp)?;

    let name = exp.policy.as_str();
    let mut files = Vec::new();
    for (r, rep) in result.replications.iter().enumerate() {
        files.push((
            format!("{name}_rep{r}.json"),
            metrics::to_json(std::slice::from_ref(&rep.report)).into_bytes(),
        ));
        if let Some(events) = &rep.output.events {
            let mut buf = Vec::new();
            write_event_log(events, &mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
            files.push((format!("{name}_rep{r}_events.jsonl"), buf));
        }
    }
    let aggregate = std::slice::from_ref(&result.aggregate);
    files.push((
        format!("{name}_aggregate.json"),
        metrics::to_json(aggregate).into_bytes(),
    ));
    files.push((
        format!("{name}_aggregate.csv"),
        metrics::to_csv(aggregate)?.into_bytes(),
    ));
    write_all(&exp.out, files)?;
    print!("{}", metrics::render(aggregate, args.format)?);
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let mut configs = Vec::new();
    for path in &args.config {
        let mut cfg = RunConfig::load(path)?;
        apply_overrides(&mut cfg, args.seed, &args.out, &args.trace);
        configs.push(cfg);
    }
    if !args.policy.is_empty() {
        if configs.len() != 1 {
            return Err(CliError::Config(
                "--policy expands a single --config".into(),
            ));
        }
        let base = configs.pop().expect("one config");
        configs = args
            .policy
            .iter()
            .map(|&p| RunConfig {
                policy: p,
                ..base.clone()
            })
            .collect();
    }
    let mut exps = configs
        .iter()
        .map(Experiment::from_config)
        .collect::<Result<Vec<_>, _>>()?;
    if args.wall_clock {
        for e in &mut exps {
            e.timing = SchedTiming::WallClock;
        }
    }
    let rows = compare(&exps)?;
    let out = exps[0].out.clone();
    write_all(
        &out,
        vec![
            (
                "comparison.csv".into(),
                metrics::to_csv(&rows)?.into_bytes(),
            ),
            (
                "comparison.json".into(),
                metrics::to_json(&rows).into_bytes(),
            ),
        ],
    )?;
    print!("{}", metrics::render(&rows, args.format)?);
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for p in &args.reports {
        let text =
            fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        rows.extend(
            metrics::from_json(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        );
    }
    let text = metrics::render(&rows, args.format)?;
    match args.out {
        Some(dir) => {
            write_all(
                &dir,
                vec![(format!("report.{}", ext(args.format)), text.into_bytes())],
            )?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenTrace(a) => cmd_gen_trace(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("splitplace: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
