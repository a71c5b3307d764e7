use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use flipdist::graph::SchoolLevel;
use flipdist::scores::{CompactnessFormula, ScoreWeights};
use flipdist_cli::{cmd_evaluate, cmd_gen, cmd_run, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "flipdist", version, about = "Flip-chain sampler for districting plans")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured chain for every trial.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Parallel trials (default: one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Score a plan and check C0-C2.
    Evaluate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "elem")]
        level: SchoolLevel,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, value_enum, default_value = "mean-pp")]
        compactness_formula: Formula,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic grid instance.
    Gen {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Formula {
    MeanPp,
    AsPrinted,
}

impl From<Formula> for CompactnessFormula {
    fn from(f: Formula) -> Self {
        match f {
            Formula::MeanPp => CompactnessFormula::MeanPp,
            Formula::AsPrinted => CompactnessFormula::AsPrinted,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            graph,
            out,
            jobs,
        } => {
            let config = RunConfig::load(&config)?;
            let summary = cmd_run(&config, &graph, &out, RunOptions { jobs })?;
            println!(
                "{} trials of {}: bal {}  com {}  J {}",
                summary.trials, summary.model, summary.bal, summary.com, summary.j
            );
        }
        Command::Evaluate {
            graph,
            plan,
            level,
            lambda,
            compactness_formula,
            json,
        } => {
            let report = cmd_evaluate(
                &graph,
                &plan,
                level,
                ScoreWeights::new(lambda)?,
                compactness_formula.into(),
            )?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
        }
        Command::Gen {
            rows,
            cols,
            k,
            seed,
            out,
        } => {
            let graph = cmd_gen(rows, cols, k, seed, &out)?;
            println!(
                "wrote {} nodes, {} edges, {} centers to {}",
                graph.num_nodes(),
                graph.num_edges(),
                k,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
