//! Commands behind the `flipdist` binary: batch chain runs, plan evaluation
//! and synthetic instance generation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flipdist::chain::{model_preset, run_chain, trial_seed, Acceptance, ChainConfig, ChainResult, Model, StallPolicy};
use flipdist::constraints::{ConstraintContext, ConstraintSet, EpsilonSense};
use flipdist::diagnostics::{export_trace, DiagnosticsTrace};
use flipdist::graph::{load_graph, make_grid_instance, ContiguityGraph, SchoolLevel};
use flipdist::init::{init_distance, init_random, repair_plan};
use flipdist::partition::Partition;
use flipdist::plan::{load_plan, save_plan};
use flipdist::scores::{self, CompactnessFormula, PlanScores, ScoreWeights};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    #[default]
    Distance,
    Random,
    /// An existing plan from `initial_plan`, repaired if needed.
    Present,
}

/// Run configuration as read from JSON. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub steps: u64,
    pub seed: u64,
    pub lambda: f64,
    pub epsilon: f64,
    pub epsilon_sense: EpsilonSense,
    pub level: SchoolLevel,
    pub trials: usize,
    /// `null` disables diagnostics.
    pub diagnostics_cadence: Option<u64>,
    pub init: InitScheme,
    pub initial_plan: Option<PathBuf>,
    /// Only with `model: "custom"`.
    pub constraints: Option<ConstraintSet>,
    /// Only with `model: "custom"`.
    pub acceptance: Option<Acceptance>,
    pub compactness_formula: CompactnessFormula,
    pub max_consecutive_rejections: u64,
    /// Defaults to the model preset.
    pub on_stall: Option<StallPolicy>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Baa,
            steps: ChainConfig::DEFAULT_STEPS,
            seed: 0,
            lambda: 0.5,
            epsilon: ConstraintContext::DEFAULT_EPSILON,
            epsilon_sense: EpsilonSense::default(),
            level: SchoolLevel::default(),
            trials: 25,
            diagnostics_cadence: Some(DiagnosticsTrace::DEFAULT_CADENCE),
            init: InitScheme::default(),
            initial_plan: None,
            constraints: None,
            acceptance: None,
            compactness_formula: CompactnessFormula::default(),
            max_consecutive_rejections: ChainConfig::DEFAULT_MAX_CONSECUTIVE_REJECTIONS,
            on_stall: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file; a relative `initial_plan` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let (Some(plan), Some(dir)) = (&config.initial_plan, path.parent()) {
            if plan.is_relative() {
                config.initial_plan = Some(dir.join(plan));
            }
        }
        Ok(config)
    }

    pub fn weights(&self) -> Result<ScoreWeights> {
        Ok(ScoreWeights::new(self.lambda)?)
    }

    /// Chain configuration for trial `trial`.
    pub fn chain_config(&self, trial: usize) -> Result<ChainConfig> {
        if self.model != Model::Custom && (self.constraints.is_some() || self.acceptance.is_some()) {
            bail!("`constraints` and `acceptance` can only be set with model \"custom\"");
        }
        let mut config = model_preset(self.model);
        if let Some(set) = self.constraints {
            config.constraints = set;
        }
        if let Some(acceptance) = self.acceptance {
            config.acceptance = acceptance;
        }
        if let Some(policy) = self.on_stall {
            config.on_stall = policy;
        }
        if self.max_consecutive_rejections == 0 {
            bail!("max_consecutive_rejections must be positive");
        }
        config.steps = self.steps;
        config.seed = trial_seed(self.seed, trial as u64);
        config.weights = self.weights()?;
        config.epsilon = self.epsilon;
        config.epsilon_sense = self.epsilon_sense;
        config.max_consecutive_rejections = self.max_consecutive_rejections;
        config.diagnostics_cadence = self.diagnostics_cadence;
        config.compactness_formula = self.compactness_formula;
        Ok(config)
    }

    /// Starting plan for trial `trial`.
    pub fn initial_partition(&self, graph: &ContiguityGraph, trial: usize) -> Result<Partition> {
        let seed = trial_seed(self.seed, trial as u64);
        Ok(match self.init {
            InitScheme::Distance => init_distance(graph, seed)?,
            InitScheme::Random => init_random(graph, seed)?,
            InitScheme::Present => {
                let Some(path) = &self.initial_plan else {
                    bail!("init \"present\" needs `initial_plan`");
                };
                let assignment = load_plan(graph, path)?;
                repair_plan(graph, assignment)?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    /// Trials with a defined value.
    pub n: usize,
}

impl MeanStd {
    /// Mean and sample standard deviation (`n - 1` denominator; 0 for a
    /// single value). Both are NaN for no values.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std, n }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub best_plan: String,
    pub initial: Option<PlanScores>,
    pub best: Option<PlanScores>,
    pub best_step: u64,
    pub accepted: u64,
    pub proposed: u64,
    pub rejected_by_constraint: [u64; 6],
    pub rejected_not_improving: u64,
    pub stalled_at: Option<u64>,
    pub sparsity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: Model,
    pub constraints: ConstraintSet,
    pub acceptance: Acceptance,
    pub level: SchoolLevel,
    pub nodes: usize,
    pub districts: usize,
    pub steps: u64,
    pub trials: usize,
    pub bal: MeanStd,
    pub com: MeanStd,
    pub j: MeanStd,
    pub imb: MeanStd,
    pub hpp: MeanStd,
    pub per_trial: Vec<TrialSummary>,
}

impl RunSummary {
    /// Aggregates per-trial rows; a pure function of them.
    pub fn from_trials(
        config: &RunConfig,
        chain: &ChainConfig,
        graph: &ContiguityGraph,
        per_trial: Vec<TrialSummary>,
    ) -> Self {
        let stat = |f: fn(&PlanScores) -> f64| {
            let values: Vec<f64> = per_trial.iter().filter_map(|t| t.best.as_ref().map(f)).collect();
            MeanStd::of(&values)
        };
        RunSummary {
            model: config.model,
            constraints: chain.constraints,
            acceptance: chain.acceptance,
            level: config.level,
            nodes: graph.num_nodes(),
            districts: graph.num_districts(),
            steps: config.steps,
            trials: per_trial.len(),
            bal: stat(|s| s.balance),
            com: stat(|s| s.compactness),
            j: stat(|s| s.dispersion),
            imb: stat(|s| s.imbalance),
            hpp: stat(|s| s.harmonic_pp),
            per_trial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

pub fn trial_stem(trial: usize) -> String {
    format!("trial_{trial:02}")
}

fn run_trial(config: &RunConfig, graph: &ContiguityGraph, out: &Path, trial: usize) -> Result<TrialSummary> {
    let chain = config.chain_config(trial)?;
    let initial = config.initial_partition(graph, trial)?;
    let result: ChainResult =
        run_chain(graph, initial, &chain).with_context(|| format!("trial {trial} (seed {})", chain.seed))?;
    let stem = trial_stem(trial);
    let best_plan = format!("{stem}_best_plan.csv");
    save_plan(graph, &result.best_plan, &out.join(&best_plan))?;
    let sparsity = match &result.trace {
        Some(trace) => {
            export_trace(trace, out, &stem)?;
            Some(trace.sparsity())
        }
        None => None,
    };
    info!(
        "trial {trial}: best J {:?} after {} accepted",
        result.best_scores.map(|s| s.dispersion),
        result.accepted_count
    );
    Ok(TrialSummary {
        trial,
        seed: result.seed,
        best_plan,
        initial: result.initial_scores,
        best: result.best_scores,
        best_step: result.best_step,
        accepted: result.accepted_count,
        proposed: result.proposed_count,
        rejected_by_constraint: result.rejections.by_constraint,
        rejected_not_improving: result.rejections.not_improving,
        stalled_at: result.stalled_at,
        sparsity,
    })
}

/// Runs `config.trials` independent chains and writes per-trial plans,
/// diagnostics and `summary.json` into `out`.
pub fn cmd_run(config: &RunConfig, graph_path: &Path, out: &Path, options: RunOptions) -> Result<RunSummary> {
    if config.trials == 0 {
        bail!("trials must be positive");
    }
    let graph = load_graph(graph_path, config.level)?;
    let chain = config.chain_config(0)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build()?;
    let per_trial = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| run_trial(config, &graph, out, trial))
            .collect::<Result<Vec<_>>>()
    })?;

    let summary = RunSummary::from_trials(config, &chain, &graph, per_trial);
    write_json(&out.join("config.json"), config)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictReport {
    /// Numbered from 1, as in plan files.
    pub district: u32,
    pub size: usize,
    pub centers: u32,
    pub population: u64,
    pub capacity: u64,
    pub area: f64,
    pub perimeter: f64,
    pub polsby_popper: Option<f64>,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub level: SchoolLevel,
    pub scores: Option<PlanScores>,
    pub districts: Vec<DistrictReport>,
    pub violations: Vec<String>,
}

/// Scores a plan file and checks it against C0..C2.
pub fn cmd_evaluate(
    graph_path: &Path,
    plan_path: &Path,
    level: SchoolLevel,
    weights: ScoreWeights,
    formula: CompactnessFormula,
) -> Result<EvaluationReport> {
    let graph = load_graph(graph_path, level)?;
    let assignment = load_plan(&graph, plan_path).with_context(|| format!("reading plan {}", plan_path.display()))?;
    Ok(evaluate_partition(
        &graph,
        &Partition::from_assignment(&graph, assignment)?,
        weights,
        formula,
    ))
}

pub fn evaluate_partition(
    graph: &ContiguityGraph,
    partition: &Partition,
    weights: ScoreWeights,
    formula: CompactnessFormula,
) -> EvaluationReport {
    let mut violations = Vec::new();
    let districts: Vec<DistrictReport> = partition
        .districts()
        .iter()
        .enumerate()
        .map(|(d, s)| {
            let connected = partition.is_district_connected(graph, d as u32);
            let label = d + 1;
            if s.size == 0 {
                violations.push(format!("C1: district {label} is empty"));
            } else if !connected {
                violations.push(format!("C0: district {label} is not connected"));
            }
            if s.centers != 1 {
                violations.push(format!("C2: district {label} has {} centers", s.centers));
            }
            DistrictReport {
                district: label as u32,
                size: s.size,
                centers: s.centers,
                population: s.population,
                capacity: s.capacity,
                area: s.area,
                perimeter: s.perimeter,
                polsby_popper: scores::polsby_popper(s.area, s.perimeter).ok(),
                connected,
            }
        })
        .collect();
    EvaluationReport {
        level: graph.level(),
        scores: PlanScores::of_partition(partition, weights, formula).ok(),
        districts,
        violations,
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "level: {}", self.level)?;
        match &self.scores {
            Some(s) => {
                writeln!(f, "bal: {:.4}", s.balance)?;
                writeln!(f, "com: {:.4}", s.compactness)?;
                writeln!(f, "imb: {:.6}", s.imbalance)?;
                writeln!(f, "hpp: {:.6}", s.harmonic_pp)?;
                writeln!(f, "j:   {:.6}", s.dispersion)?;
            }
            None => writeln!(f, "scores: undefined (empty or zero-capacity district)")?,
        }
        writeln!(f, "district  size  centers  population  capacity  pp")?;
        for d in &self.districts {
            let pp = d.polsby_popper.map_or_else(|| "-".to_string(), |p| format!("{p:.4}"));
            writeln!(
                f,
                "{:>8}  {:>4}  {:>7}  {:>10}  {:>8}  {}",
                d.district, d.size, d.centers, d.population, d.capacity, pp
            )?;
        }
        if self.violations.is_empty() {
            write!(f, "constraints C0-C2: ok")
        } else {
            write!(f, "violations:")?;
            for v in &self.violations {
                write!(f, "\n  {v}")?;
            }
            Ok(())
        }
    }
}

/// Writes a synthetic `rows x cols` grid instance with `k` centers.
pub fn cmd_gen(rows: usize, cols: usize, k: usize, seed: u64, out: &Path) -> Result<ContiguityGraph> {
    let graph = make_grid_instance(rows, cols, k, seed)?;
    graph.save(out)?;
    Ok(graph)
}
