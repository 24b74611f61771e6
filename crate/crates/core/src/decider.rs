//! Split decision policy.
//!
//! Each application keeps a moving-average estimate of how long a layer split
//! takes end to end. A new workload whose deadline is below that estimate is
//! in the `Tight` context, otherwise `Loose`. Each context owns an independent
//! two-armed UCB1 bandit over {layer, semantic}; rewards arrive when the
//! workload completes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProfileSet, SplitDecision, Workload};

#[derive(Debug, Error, PartialEq)]
pub enum DeciderError {
    #[error("reward undefined for empty workload set")]
    EmptyWorkloadSet,
    #[error("observation must be > 0, got {0}")]
    NonPositiveObservation(f64),
    #[error("reward must lie in [0, 1], got {0}")]
    RewardOutOfRange(f64),
    #[error("unknown application `{0}`")]
    UnknownApplication(String),
    #[error("workload {0} already has a pending decision")]
    DuplicateWorkload(u64),
    #[error("no pending decision for workload {0}")]
    NotPending(u64),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("ucb_c must be finite and >= 0, got {0}")]
    InvalidExploration(f64),
}

/// What happened to one workload, as far as the reward is concerned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadOutcome {
    pub response_time_s: f64,
    pub sla_s: f64,
    pub accuracy: f64,
    pub decision: SplitDecision,
    pub app: String,
}

impl WorkloadOutcome {
    pub fn sla_met(&self) -> bool {
        self.response_time_s <= self.sla_s
    }
}

/// Per-workload reward: (1[response ≤ SLA] + accuracy) / 2.
pub fn reward_of(o: &WorkloadOutcome) -> f64 {
    let met = if o.sla_met() { 1.0 } else { 0.0 };
    (met + o.accuracy) / 2.0
}

/// Mean reward over a set of workloads.
pub fn aggregate_reward(outcomes: &[WorkloadOutcome]) -> Result<f64, DeciderError> {
    if outcomes.is_empty() {
        return Err(DeciderError::EmptyWorkloadSet);
    }
    let total: f64 = outcomes.iter().map(reward_of).sum();
    Ok(total / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Estimate {
    value: f64,
    observed: bool,
}

/// Exponential moving average of layer-split response time per application.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaEstimator {
    alpha: f64,
    estimates: BTreeMap<String, Estimate>,
}

impl EmaEstimator {
    pub fn new(alpha: f64) -> Result<Self, DeciderError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(DeciderError::InvalidAlpha(alpha));
        }
        Ok(EmaEstimator {
            alpha,
            estimates: BTreeMap::new(),
        })
    }

    /// Seeds every application with its reference-host layer time.
    pub fn with_priors(alpha: f64, profiles: &ProfileSet) -> Result<Self, DeciderError> {
        let mut ema = EmaEstimator::new(alpha)?;
        for p in profiles.iter() {
            ema.set_prior(&p.name, p.prior_layer_time_s());
        }
        Ok(ema)
    }

    /// Sets a value that the first real observation replaces outright.
    pub fn set_prior(&mut self, app: &str, value: f64) {
        self.estimates.insert(
            app.to_string(),
            Estimate {
                value,
                observed: false,
            },
        );
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn estimate(&self, app: &str) -> Option<f64> {
        self.estimates.get(app).map(|e| e.value)
    }

    pub fn is_initialized(&self, app: &str) -> bool {
        self.estimates.get(app).is_some_and(|e| e.observed)
    }

    pub fn update(&mut self, app: &str, observed_s: f64) -> Result<f64, DeciderError> {
        if !(observed_s.is_finite() && observed_s > 0.0) {
            return Err(DeciderError::NonPositiveObservation(observed_s));
        }
        let alpha = self.alpha;
        let entry = self.estimates.entry(app.to_string()).or_insert(Estimate {
            value: observed_s,
            observed: false,
        });
        entry.value = if entry.observed {
            alpha * observed_s + (1.0 - alpha) * entry.value
        } else {
            observed_s
        };
        entry.observed = true;
        Ok(entry.value)
    }

    /// `Tight` when the deadline is strictly below the layer-time estimate.
    pub fn context_of(&self, w: &Workload) -> Result<Context, DeciderError> {
        let e = self
            .estimate(&w.app)
            .ok_or_else(|| DeciderError::UnknownApplication(w.app.clone()))?;
        Ok(if w.sla_s < e {
            Context::Tight
        } else {
            Context::Loose
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Tight,
    Loose,
}

impl Context {
    pub const ALL: [Context; 2] = [Context::Tight, Context::Loose];

    fn index(self) -> usize {
        match self {
            Context::Tight => 0,
            Context::Loose => 1,
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Context::Tight => "tight",
            Context::Loose => "loose",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub mean: f64,
}

/// One UCB1 bandit per context, each over the two split decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    arms: [[ArmStats; 2]; 2],
    totals: [u64; 2],
    c: f64,
}

impl BanditState {
    pub fn new(c: f64) -> Result<Self, DeciderError> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(DeciderError::InvalidExploration(c));
        }
        Ok(BanditState {
            arms: [[ArmStats::default(); 2]; 2],
            totals: [0; 2],
            c,
        })
    }

    pub fn exploration(&self) -> f64 {
        self.c
    }

    pub fn arm(&self, ctx: Context, arm: SplitDecision) -> ArmStats {
        self.arms[ctx.index()][arm.index()]
    }

    pub fn total_pulls(&self, ctx: Context) -> u64 {
        self.totals[ctx.index()]
    }

    /// Upper confidence bound of an arm that has been pulled at least once.
    pub fn ucb_score(&self, ctx: Context, arm: SplitDecision) -> f64 {
        let s = self.arm(ctx, arm);
        let n_total = self.total_pulls(ctx) as f64;
        s.mean + self.c * (n_total.ln() / s.pulls as f64).sqrt()
    }

    pub fn select_arm(&self, ctx: Context) -> SplitDecision {
        if let Some(untried) = SplitDecision::ALL
            .into_iter()
            .find(|&a| self.arm(ctx, a).pulls == 0)
        {
            return untried;
        }
        let layer = self.ucb_score(ctx, SplitDecision::Layer);
        let semantic = self.ucb_score(ctx, SplitDecision::Semantic);
        if semantic > layer {
            SplitDecision::Semantic
        } else {
            SplitDecision::Layer
        }
    }

    /// Highest empirical mean, ties toward layer. Used once learning is frozen.
    pub fn greedy_arm(&self, ctx: Context) -> SplitDecision {
        let layer = self.arm(ctx, SplitDecision::Layer).mean;
        let semantic = self.arm(ctx, SplitDecision::Semantic).mean;
        if semantic > layer {
            SplitDecision::Semantic
        } else {
            SplitDecision::Layer
        }
    }

    pub fn update_arm(
        &mut self,
        ctx: Context,
        arm: SplitDecision,
        reward: f64,
    ) -> Result<(), DeciderError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(DeciderError::RewardOutOfRange(reward));
        }
        let s = &mut self.arms[ctx.index()][arm.index()];
        s.pulls += 1;
        s.mean += (reward - s.mean) / s.pulls as f64;
        self.totals[ctx.index()] += 1;
        Ok(())
    }

    pub fn summary(&self) -> BanditSummary {
        let ctx_summary = |ctx| ContextSummary {
            total_pulls: self.total_pulls(ctx),
            layer: self.arm(ctx, SplitDecision::Layer),
            semantic: self.arm(ctx, SplitDecision::Semantic),
        };
        BanditSummary {
            tight: ctx_summary(Context::Tight),
            loose: ctx_summary(Context::Loose),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub total_pulls: u64,
    pub layer: ArmStats,
    pub semantic: ArmStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSummary {
    pub tight: ContextSummary,
    pub loose: ContextSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeciderConfig {
    pub alpha: f64,
    pub ucb_c: f64,
}

impl Default for DeciderConfig {
    fn default() -> Self {
        DeciderConfig {
            alpha: 0.1,
            ucb_c: std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    context: Context,
    decision: SplitDecision,
}

/// The full decision loop: context, bandit choice, and deferred feedback.
#[derive(Debug, Clone)]
pub struct Decider {
    ema: EmaEstimator,
    bandit: BanditState,
    pending: HashMap<u64, Pending>,
    frozen: bool,
}

impl Decider {
    pub fn new(config: DeciderConfig, profiles: &ProfileSet) -> Result<Self, DeciderError> {
        Ok(Decider {
            ema: EmaEstimator::with_priors(config.alpha, profiles)?,
            bandit: BanditState::new(config.ucb_c)?,
            pending: HashMap::new(),
            frozen: false,
        })
    }

    pub fn from_parts(ema: EmaEstimator, bandit: BanditState) -> Self {
        Decider {
            ema,
            bandit,
            pending: HashMap::new(),
            frozen: false,
        }
    }

    pub fn ema(&self) -> &EmaEstimator {
        &self.ema
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    /// Stops bandit learning; subsequent decisions are greedy on the current means.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn context_of(&self, w: &Workload) -> Result<Context, DeciderError> {
        self.ema.context_of(w)
    }

    pub fn decide(&mut self, w: &Workload) -> Result<SplitDecision, DeciderError> {
        let context = self.ema.context_of(w)?;
        if self.pending.contains_key(&w.id) {
            return Err(DeciderError::DuplicateWorkload(w.id));
        }
        let decision = if self.frozen {
            self.bandit.greedy_arm(context)
        } else {
            self.bandit.select_arm(context)
        };
        self.pending.insert(w.id, Pending { context, decision });
        Ok(decision)
    }

    /// Routes a completed workload's reward to the bandit that chose it and,
    /// for layer executions, folds its response time into the estimate.
    pub fn feedback(
        &mut self,
        workload_id: u64,
        outcome: &WorkloadOutcome,
    ) -> Result<f64, DeciderError> {
        let pending = self
            .pending
            .remove(&workload_id)
            .ok_or(DeciderError::NotPending(workload_id))?;
        let reward = reward_of(outcome);
        if !self.frozen {
            self.bandit
                .update_arm(pending.context, pending.decision, reward)?;
        }
        if pending.decision == SplitDecision::Layer {
            // Zero response times cannot occur for real executions; skip rather than fail.
            if outcome.response_time_s > 0.0 {
                self.ema.update(&outcome.app, outcome.response_time_s)?;
            }
        }
        Ok(reward)
    }
}
