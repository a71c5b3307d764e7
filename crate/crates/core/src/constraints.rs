//! Admissibility predicates for proposed plans.
//!
//! C0 contiguity, C1 non-vanishing districts, C2 one center per district,
//! C3 compactness lower bound, C4 balance no worse than the start plan,
//! C5 dispersion no worse than the start plan.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::ContiguityGraph;
use crate::partition::{ContiguityScratch, FlipMove, Partition, PlanView};
use crate::scores::{self, ScoreError, ScoreWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("{0} needs a constraint context but none was supplied")]
    MissingContext(Constraint),
    #[error("epsilon must be finite and non-negative, got {0}")]
    BadEpsilon(f64),
    #[error("reference score is undefined: {0}")]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Contiguity,
    NonVanishing,
    SingleCenter,
    Compactness,
    Balance,
    Dispersion,
}

impl Constraint {
    pub const ALL: [Constraint; 6] = [
        Constraint::Contiguity,
        Constraint::NonVanishing,
        Constraint::SingleCenter,
        Constraint::Compactness,
        Constraint::Balance,
        Constraint::Dispersion,
    ];

    /// Evaluation order used by [`check_all`]: cheapest first.
    pub const CHECK_ORDER: [Constraint; 6] = [
        Constraint::NonVanishing,
        Constraint::SingleCenter,
        Constraint::Balance,
        Constraint::Dispersion,
        Constraint::Compactness,
        Constraint::Contiguity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["C0", "C1", "C2", "C3", "C4", "C5"][self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Contiguity => "contiguity",
            Constraint::NonVanishing => "non-vanishing",
            Constraint::SingleCenter => "single-center",
            Constraint::Compactness => "compactness",
            Constraint::Balance => "balance",
            Constraint::Dispersion => "dispersion",
        }
    }

    /// Whether the predicate compares scores against a [`ConstraintContext`].
    pub fn needs_context(self) -> bool {
        matches!(
            self,
            Constraint::Compactness | Constraint::Balance | Constraint::Dispersion
        )
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.label(), self.name())
    }
}

impl FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Constraint::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s) || c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown constraint {s:?}"))
    }
}

/// Subset of {C0..C5}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ConstraintSet(u8);

impl ConstraintSet {
    pub const fn empty() -> Self {
        ConstraintSet(0)
    }

    pub fn of(constraints: &[Constraint]) -> Self {
        constraints.iter().copied().collect()
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.insert(c);
        self
    }

    pub fn without(mut self, c: Constraint) -> Self {
        self.0 &= !(1 << c.index());
        self
    }

    pub fn insert(&mut self, c: Constraint) {
        self.0 |= 1 << c.index();
    }

    pub fn contains(&self, c: Constraint) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Constraint> + '_ {
        Constraint::ALL.into_iter().filter(|c| self.contains(*c))
    }

    pub fn needs_context(&self) -> bool {
        self.iter().any(Constraint::needs_context)
    }
}

impl FromIterator<Constraint> for ConstraintSet {
    fn from_iter<T: IntoIterator<Item = Constraint>>(iter: T) -> Self {
        let mut set = ConstraintSet::empty();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<&str> = self.iter().map(Constraint::label).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

impl Serialize for ConstraintSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter().map(Constraint::label))
    }
}

impl<'de> Deserialize<'de> for ConstraintSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(deserializer)?;
        labels
            .iter()
            .map(|l| l.parse::<Constraint>().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Direction of the epsilon term in the compactness bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSense {
    /// `H(t) >= H(t-1) + eps`: every accepted step must improve.
    AsPrinted,
    /// `H(t) >= H(t-1) - eps`: bounded degradation per accepted step.
    #[default]
    Slack,
}

/// Reference values the relative constraints compare against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintContext {
    pub initial_imbalance: f64,
    pub initial_dispersion: f64,
    /// Harmonic-mean Polsby-Popper of the last accepted plan.
    pub previous_harmonic_pp: f64,
    pub epsilon: f64,
    pub epsilon_sense: EpsilonSense,
}

impl ConstraintContext {
    pub const DEFAULT_EPSILON: f64 = 0.05;

    pub fn new(
        initial: &Partition,
        weights: ScoreWeights,
        epsilon: f64,
        epsilon_sense: EpsilonSense,
    ) -> Result<Self, ConstraintError> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(ConstraintError::BadEpsilon(epsilon));
        }
        let districts = initial.districts();
        Ok(ConstraintContext {
            initial_imbalance: scores::imbalance(districts)?,
            initial_dispersion: scores::dispersion(districts, weights)?,
            previous_harmonic_pp: scores::harmonic_pp(districts)?,
            epsilon,
            epsilon_sense,
        })
    }

    /// Moves the compactness reference to a newly accepted plan.
    pub fn advance(&mut self, accepted_harmonic_pp: f64) {
        self.previous_harmonic_pp = accepted_harmonic_pp;
    }

    pub fn compactness_bound(&self) -> f64 {
        match self.epsilon_sense {
            EpsilonSense::AsPrinted => self.previous_harmonic_pp + self.epsilon,
            EpsilonSense::Slack => self.previous_harmonic_pp - self.epsilon,
        }
    }
}

/// C0: the donor stays connected without the flipped node. The recipient
/// is adjacent to the node, so it stays connected automatically.
pub fn c0_contiguity(graph: &ContiguityGraph, partition: &Partition, mv: &FlipMove) -> bool {
    partition.is_district_connected_after_removal(graph, mv.node)
}

pub fn c0_contiguity_with(
    graph: &ContiguityGraph,
    partition: &Partition,
    mv: &FlipMove,
    scratch: &mut ContiguityScratch,
) -> bool {
    partition.is_district_connected_after_removal_with(graph, mv.node, scratch)
}

/// C1: no district is empty.
pub fn c1_non_vanishing(after: &PlanView<'_>) -> bool {
    after.districts().all(|d| d.size > 0)
}

/// C2: every district holds exactly one center.
pub fn c2_single_center(after: &PlanView<'_>) -> bool {
    after.districts().all(|d| d.centers == 1)
}

/// C3: compactness lower bound relative to the last accepted plan.
pub fn c3_compactness(after: &PlanView<'_>, ctx: &ConstraintContext) -> Result<bool, ScoreError> {
    Ok(scores::harmonic_pp(after.districts())? >= ctx.compactness_bound())
}

/// C4: imbalance no worse than the initial plan's.
pub fn c4_balance(after: &PlanView<'_>, ctx: &ConstraintContext) -> Result<bool, ScoreError> {
    Ok(scores::imbalance(after.districts())? <= ctx.initial_imbalance)
}

/// C5: dispersion no worse than the initial plan's.
pub fn c5_dispersion(after: &PlanView<'_>, ctx: &ConstraintContext, weights: ScoreWeights) -> Result<bool, ScoreError> {
    Ok(scores::dispersion(after.districts(), weights)? <= ctx.initial_dispersion)
}

/// Everything one constraint evaluation needs.
pub struct CheckInput<'a> {
    pub graph: &'a ContiguityGraph,
    pub after: PlanView<'a>,
    pub mv: &'a FlipMove,
    pub ctx: Option<&'a ConstraintContext>,
    pub weights: ScoreWeights,
}

/// Evaluates a single constraint. A plan whose score is undefined (an empty
/// or capacity-less district) does not satisfy a score-based constraint.
pub fn check_one(
    c: Constraint,
    input: &CheckInput<'_>,
    scratch: &mut ContiguityScratch,
) -> Result<bool, ConstraintError> {
    let ctx = || input.ctx.ok_or(ConstraintError::MissingContext(c));
    let scored = |r: Result<bool, ScoreError>| Ok(r.unwrap_or(false));
    match c {
        Constraint::Contiguity => Ok(c0_contiguity_with(
            input.graph,
            input.after.partition(),
            input.mv,
            scratch,
        )),
        Constraint::NonVanishing => Ok(c1_non_vanishing(&input.after)),
        Constraint::SingleCenter => Ok(c2_single_center(&input.after)),
        Constraint::Compactness => scored(c3_compactness(&input.after, ctx()?)),
        Constraint::Balance => scored(c4_balance(&input.after, ctx()?)),
        Constraint::Dispersion => scored(c5_dispersion(&input.after, ctx()?, input.weights)),
    }
}

/// First enabled constraint (in [`Constraint::CHECK_ORDER`]) the proposal
/// violates, or `None` if it is admissible.
pub fn first_violation(
    set: ConstraintSet,
    input: &CheckInput<'_>,
    scratch: &mut ContiguityScratch,
) -> Result<Option<Constraint>, ConstraintError> {
    for c in Constraint::CHECK_ORDER {
        if set.contains(c) && !check_one(c, input, scratch)? {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Conjunction of every enabled constraint.
pub fn check_all(
    graph: &ContiguityGraph,
    after: PlanView<'_>,
    mv: &FlipMove,
    ctx: Option<&ConstraintContext>,
    set: ConstraintSet,
    weights: ScoreWeights,
) -> Result<bool, ConstraintError> {
    let mut scratch = ContiguityScratch::new(graph.num_nodes());
    let input = CheckInput {
        graph,
        after,
        mv,
        ctx,
        weights,
    };
    Ok(first_violation(set, &input, &mut scratch)?.is_none())
}
