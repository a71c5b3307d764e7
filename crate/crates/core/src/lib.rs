//! Flip-proposal Markov chain sampling of districting plans on a contiguity
//! graph with one fixed center per district.
//!
//! - [`graph`]: the immutable contiguity graph and its JSON format.
//! - [`partition`]: the plan with incrementally maintained aggregates.
//! - [`scores`]: Polsby-Popper, imbalance, dispersion and reporting metrics.
//! - [`constraints`]: the admissibility predicates C0..C5.
//! - [`chain`]: proposal, rejection sampling, model presets, `run_chain`.
//! - [`init`]: distance, random and repaired starting plans.
//! - [`diagnostics`]: sampled traces and the co-occurrence matrix.
//! - [`plan`]: the plan CSV format.

pub mod chain;
pub mod constraints;
pub mod diagnostics;
pub mod graph;
pub mod init;
pub mod partition;
pub mod plan;
pub mod scores;

pub use chain::{model_preset, run_chain, Acceptance, ChainConfig, ChainError, ChainResult, Model};
pub use constraints::{Constraint, ConstraintSet, EpsilonSense};
pub use graph::{load_graph, make_grid_instance, ContiguityGraph, GraphError, SchoolLevel};
pub use partition::{DistrictStats, FlipMove, Partition};
pub use scores::{CompactnessFormula, PlanScores, ScoreWeights};
