//! The flip Markov chain.
//!
//! Each step draws one `(boundary node, adjacent district)` pair uniformly,
//! previews the flip, and commits it only if every enabled constraint holds
//! (and, under greedy acceptance, the dispersion strictly improves).
//! Rejected proposals leave the plan untouched and still count as steps.

use std::fmt;
use std::str::FromStr;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    first_violation, CheckInput, Constraint, ConstraintContext, ConstraintError, ConstraintSet, EpsilonSense,
};
use crate::diagnostics::{DiagnosticsError, DiagnosticsTrace};
use crate::graph::ContiguityGraph;
use crate::partition::{ContiguityScratch, FlipMove, Partition, PartitionError};
use crate::scores::{self, CompactnessFormula, PlanScores, ScoreError, ScoreWeights};

/// Seeded generator used by every chain: ChaCha with 8 rounds.
pub type ChainRng = ChaCha8Rng;

const PROGRESS_EVERY: u64 = 100_000;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("no boundary pairs: the plan has a single non-empty district")]
    EmptyBoundary,
    #[error("chain stalled after {rejections} consecutive rejections at step {step}")]
    Stalled { step: u64, rejections: u64 },
    #[error("initial plan violates {0}")]
    InvalidInitial(Constraint),
    #[error("initial plan has no defined score: {0}")]
    UnscorableInitial(#[source] ScoreError),
    #[error("epsilon must be finite and non-negative, got {0}")]
    BadEpsilon(f64),
    #[error("initial plan does not match the graph: {0}")]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// Balanced, always accept.
    #[serde(rename = "BAA", alias = "baa")]
    Baa,
    /// Balanced and compact, always accept.
    #[serde(rename = "BCAA", alias = "bcaa")]
    Bcaa,
    /// Accept improving objective.
    #[serde(rename = "AIO", alias = "aio")]
    Aio,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Baa => "BAA",
            Model::Bcaa => "BCAA",
            Model::Aio => "AIO",
            Model::Custom => "custom",
        })
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baa" => Ok(Model::Baa),
            "bcaa" => Ok(Model::Bcaa),
            "aio" => Ok(Model::Aio),
            "custom" => Ok(Model::Custom),
            other => Err(format!("unknown model {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acceptance {
    #[default]
    Always,
    /// Accept only if the dispersion strictly decreases.
    #[serde(alias = "accept_improving")]
    AcceptImproving,
}

/// What to do when `max_consecutive_rejections` is hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StallPolicy {
    #[default]
    Error,
    /// End the run early and report the step; the plan is frozen anyway.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub model: Model,
    pub constraints: ConstraintSet,
    pub acceptance: Acceptance,
    /// Proposals to make, rejected ones included.
    pub steps: u64,
    pub seed: u64,
    pub weights: ScoreWeights,
    pub epsilon: f64,
    pub epsilon_sense: EpsilonSense,
    pub max_consecutive_rejections: u64,
    pub on_stall: StallPolicy,
    /// Sample diagnostics every this many proposals; `None` disables them.
    pub diagnostics_cadence: Option<u64>,
    pub compactness_formula: CompactnessFormula,
}

impl ChainConfig {
    pub const DEFAULT_STEPS: u64 = 10_000_000;
    pub const DEFAULT_MAX_CONSECUTIVE_REJECTIONS: u64 = 1_000_000;

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_diagnostics(mut self, cadence: Option<u64>) -> Self {
        self.diagnostics_cadence = cadence;
        self
    }

    fn scored(&self) -> bool {
        self.constraints.needs_context() || self.acceptance == Acceptance::AcceptImproving
    }
}

/// Constraint set and acceptance rule of each model.
pub fn model_preset(model: Model) -> ChainConfig {
    use Constraint::*;
    let base = ConstraintSet::of(&[Contiguity, NonVanishing, SingleCenter, Compactness]);
    let (constraints, acceptance, on_stall) = match model {
        Model::Baa => (base.with(Balance), Acceptance::Always, StallPolicy::Error),
        Model::Bcaa => (base.with(Dispersion), Acceptance::Always, StallPolicy::Error),
        Model::Aio => (base, Acceptance::AcceptImproving, StallPolicy::Stop),
        Model::Custom => (
            ConstraintSet::of(&[Contiguity, NonVanishing, SingleCenter]),
            Acceptance::Always,
            StallPolicy::Error,
        ),
    };
    ChainConfig {
        model,
        constraints,
        acceptance,
        steps: ChainConfig::DEFAULT_STEPS,
        seed: 0,
        weights: ScoreWeights::default(),
        epsilon: ConstraintContext::DEFAULT_EPSILON,
        epsilon_sense: EpsilonSense::default(),
        max_consecutive_rejections: ChainConfig::DEFAULT_MAX_CONSECUTIVE_REJECTIONS,
        on_stall,
        diagnostics_cadence: Some(DiagnosticsTrace::DEFAULT_CADENCE),
        compactness_formula: CompactnessFormula::default(),
    }
}

/// Seed of trial `trial` in a batch started from `base`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base.wrapping_add(trial)
}

/// Draws a flip uniformly from the boundary pairs of `partition`.
pub fn propose_flip<R: Rng + ?Sized>(partition: &Partition, rng: &mut R) -> Result<FlipMove, ChainError> {
    let pairs = partition.boundary_pairs();
    if pairs.is_empty() {
        return Err(ChainError::EmptyBoundary);
    }
    let (node, recipient) = pairs[rng.gen_range(0..pairs.len())];
    Ok(FlipMove {
        node,
        donor: partition.district_of(node),
        recipient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Constraint(Constraint),
    NotImproving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted(FlipMove),
    Rejected { mv: FlipMove, reason: RejectReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RejectionCounts {
    /// Indexed by constraint (C0..C5).
    pub by_constraint: [u64; 6],
    pub not_improving: u64,
}

impl RejectionCounts {
    pub fn total(&self) -> u64 {
        self.by_constraint.iter().sum::<u64>() + self.not_improving
    }

    fn record(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::Constraint(c) => self.by_constraint[c.index()] += 1,
            RejectReason::NotImproving => self.not_improving += 1,
        }
    }
}

/// A running chain: the current plan, its constraint references and the RNG.
#[derive(Debug, Clone)]
pub struct ChainState<'g> {
    graph: &'g ContiguityGraph,
    config: ChainConfig,
    partition: Partition,
    ctx: Option<ConstraintContext>,
    rng: ChainRng,
    scratch: ContiguityScratch,
    current_dispersion: Option<f64>,
    proposed: u64,
    accepted: u64,
    consecutive_rejections: u64,
    rejections: RejectionCounts,
}

impl<'g> ChainState<'g> {
    pub fn new(graph: &'g ContiguityGraph, initial: Partition, config: ChainConfig) -> Result<Self, ChainError> {
        if initial.num_nodes() != graph.num_nodes() || initial.num_districts() != graph.num_districts() {
            return Err(PartitionError::LengthMismatch {
                expected: graph.num_nodes(),
                got: initial.num_nodes(),
            }
            .into());
        }
        if !config.epsilon.is_finite() || config.epsilon < 0.0 {
            return Err(ChainError::BadEpsilon(config.epsilon));
        }
        let ctx = match ConstraintContext::new(&initial, config.weights, config.epsilon, config.epsilon_sense) {
            Ok(ctx) => Some(ctx),
            Err(ConstraintError::Score(e)) if config.scored() => return Err(ChainError::UnscorableInitial(e)),
            Err(ConstraintError::Score(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let current_dispersion = scores::dispersion(initial.districts(), config.weights).ok();
        Ok(ChainState {
            graph,
            rng: ChainRng::seed_from_u64(config.seed),
            scratch: ContiguityScratch::new(graph.num_nodes()),
            config,
            partition: initial,
            ctx,
            current_dispersion,
            proposed: 0,
            accepted: 0,
            consecutive_rejections: 0,
            rejections: RejectionCounts::default(),
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn into_partition(self) -> Partition {
        self.partition
    }

    pub fn context(&self) -> Option<&ConstraintContext> {
        self.ctx.as_ref()
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    /// Dispersion of the current plan, if defined.
    pub fn current_dispersion(&self) -> Option<f64> {
        self.current_dispersion
    }

    pub fn proposed_count(&self) -> u64 {
        self.proposed
    }

    pub fn accepted_count(&self) -> u64 {
        self.accepted
    }

    pub fn rejections(&self) -> &RejectionCounts {
        &self.rejections
    }

    /// One proposal: draw, check, and commit or reject.
    pub fn step(&mut self) -> Result<StepOutcome, ChainError> {
        let mv = propose_flip(&self.partition, &mut self.rng)?;
        self.proposed += 1;
        let proposal = self.partition.preview_flip(self.graph, mv);

        let mut reason = None;
        {
            let input = CheckInput {
                graph: self.graph,
                after: self.partition.view_with(&proposal),
                mv: &mv,
                ctx: self.ctx.as_ref(),
                weights: self.config.weights,
            };
            if let Some(c) = first_violation(self.config.constraints, &input, &mut self.scratch)? {
                reason = Some(RejectReason::Constraint(c));
            } else if self.config.acceptance == Acceptance::AcceptImproving {
                let after = scores::dispersion(input.after.districts(), self.config.weights).ok();
                let improves = matches!((after, self.current_dispersion), (Some(a), Some(b)) if a < b);
                if !improves {
                    reason = Some(RejectReason::NotImproving);
                }
            }
        }

        if let Some(reason) = reason {
            self.rejections.record(reason);
            self.consecutive_rejections += 1;
            if self.consecutive_rejections >= self.config.max_consecutive_rejections {
                return Err(ChainError::Stalled {
                    step: self.proposed,
                    rejections: self.consecutive_rejections,
                });
            }
            return Ok(StepOutcome::Rejected { mv, reason });
        }

        self.partition.commit(self.graph, &proposal);
        self.accepted += 1;
        self.consecutive_rejections = 0;
        let districts = self.partition.districts();
        self.current_dispersion = scores::dispersion(districts, self.config.weights).ok();
        if let (Some(ctx), Ok(h)) = (self.ctx.as_mut(), scores::harmonic_pp(districts)) {
            ctx.advance(h);
        }
        Ok(StepOutcome::Accepted(mv))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub seed: u64,
    /// Plan with the lowest dispersion among bookkept states.
    pub best_plan: Partition,
    pub best_scores: Option<PlanScores>,
    /// Proposal count at which `best_plan` was reached.
    pub best_step: u64,
    pub initial_scores: Option<PlanScores>,
    pub accepted_count: u64,
    pub proposed_count: u64,
    pub rejections: RejectionCounts,
    pub final_plan: Partition,
    pub trace: Option<DiagnosticsTrace>,
    /// Set when the run ended early under [`StallPolicy::Stop`].
    pub stalled_at: Option<u64>,
}

fn validate_initial(graph: &ContiguityGraph, initial: &Partition, set: ConstraintSet) -> Result<(), ChainError> {
    if set.contains(Constraint::NonVanishing) && initial.districts().iter().any(|d| d.size == 0) {
        return Err(ChainError::InvalidInitial(Constraint::NonVanishing));
    }
    if set.contains(Constraint::SingleCenter) && initial.districts().iter().any(|d| d.centers != 1) {
        return Err(ChainError::InvalidInitial(Constraint::SingleCenter));
    }
    if set.contains(Constraint::Contiguity) && !initial.all_districts_connected(graph) {
        return Err(ChainError::InvalidInitial(Constraint::Contiguity));
    }
    Ok(())
}

/// Runs `config.steps` proposals from `initial`.
///
/// The best plan is bookkept greedily: an accepted plan replaces it whenever
/// its dispersion is no larger than the best so far.
pub fn run_chain(graph: &ContiguityGraph, initial: Partition, config: &ChainConfig) -> Result<ChainResult, ChainError> {
    validate_initial(graph, &initial, config.constraints)?;
    let weights = config.weights;
    let formula = config.compactness_formula;
    let initial_scores = PlanScores::of_partition(&initial, weights, formula).ok();

    let mut trace = config
        .diagnostics_cadence
        .map(|c| DiagnosticsTrace::new(graph.num_nodes(), c))
        .transpose()?;
    if let Some(trace) = trace.as_mut() {
        trace.record_sample(&initial, 0, weights, formula)?;
    }

    let mut best_assignment = initial.assignment().to_vec();
    let mut best_step = 0;
    let mut state = ChainState::new(graph, initial, config.clone())?;
    let mut best_dispersion = state.current_dispersion();
    let mut stalled_at = None;

    for t in 1..=config.steps {
        match state.step() {
            Ok(StepOutcome::Accepted(_)) => {
                if let Some(j) = state.current_dispersion() {
                    if best_dispersion.is_none_or(|b| j <= b) {
                        best_dispersion = Some(j);
                        best_assignment.copy_from_slice(state.partition().assignment());
                        best_step = t;
                    }
                }
            }
            Ok(StepOutcome::Rejected { .. }) => {}
            Err(ChainError::Stalled { .. }) if config.on_stall == StallPolicy::Stop => {
                info!("seed {}: stalled at step {t}, stopping", config.seed);
                stalled_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        }
        if let Some(trace) = trace.as_mut() {
            if trace.is_due(t) {
                trace.record_sample(state.partition(), t, weights, formula)?;
            }
        }
        if t % PROGRESS_EVERY == 0 {
            info!(
                "seed {}: step {t}/{} accepted {} J {:?}",
                config.seed,
                config.steps,
                state.accepted_count(),
                state.current_dispersion()
            );
        }
    }

    let best_plan = Partition::from_assignment(graph, best_assignment)?;
    let best_scores = PlanScores::of_partition(&best_plan, weights, formula).ok();
    Ok(ChainResult {
        seed: config.seed,
        best_plan,
        best_scores,
        best_step,
        initial_scores,
        accepted_count: state.accepted_count(),
        proposed_count: state.proposed_count(),
        rejections: *state.rejections(),
        final_plan: state.into_partition(),
        trace,
        stalled_at,
    })
}
