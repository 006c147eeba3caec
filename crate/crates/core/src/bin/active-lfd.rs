//! Command-line entry point for the active learning-from-demonstration
//! experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use active_lfd::env::{Family, ScenarioSpec, SCENARIO_NAMES};
use active_lfd::expert::{generate_pool, save_pool};
use active_lfd::harness::{aggregate_dir, run_transfer, train_source, ExperimentConfig, SourceConfig};

#[derive(Parser)]
#[command(name = "active-lfd", about = "Active LfD policy-transfer experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a source policy with SAC and the dense reward.
    TrainSource {
        /// Task family: push | carry
        #[arg(long)]
        family: String,
        #[arg(long)]
        seed: u64,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV output path.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Environment-step budget.
        #[arg(long, default_value_t = 200_000)]
        steps: usize,
        /// Early-stop evaluation success threshold.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// Hidden layer widths, comma separated.
        #[arg(long, default_value = "64,64")]
        hidden: String,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long, default_value_t = 5000)]
        eval_every: usize,
        #[arg(long, default_value_t = 20)]
        eval_episodes: usize,
    },
    /// Generate a demonstration pool for a scenario.
    GenDemos {
        /// One of the canonical scenario names (see `scenarios`).
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 30)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a transfer experiment from a config file.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured seed list.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Aggregate per-seed evaluation CSVs into mean/stderr curves.
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the canonical transfer scenario names.
    Scenarios,
}

fn parse_hidden(s: &str) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("bad hidden layer list '{s}'"))
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::TrainSource {
            family,
            seed,
            out,
            log,
            steps,
            threshold,
            hidden,
            batch_size,
            eval_every,
            eval_episodes,
        } => {
            let family = match family.as_str() {
                "push" => Family::Push,
                "carry" => Family::Carry,
                other => anyhow::bail!("unknown family '{other}' (expected push | carry)"),
            };
            let cfg = SourceConfig {
                budget_steps: steps,
                success_threshold: threshold,
                hidden: parse_hidden(&hidden)?,
                batch_size,
                eval_every,
                eval_episodes,
                ..SourceConfig::default()
            };
            let outcome = train_source(family, seed, &cfg, &out, log.as_deref())?;
            println!(
                "source {:?} seed {seed}: success rate {} after {} env steps -> {}",
                family,
                outcome.final_success_rate,
                outcome.env_steps,
                out.display()
            );
        }
        Command::GenDemos {
            scenario,
            size,
            seed,
            out,
        } => {
            let spec = ScenarioSpec::by_name(&scenario)?;
            let pool = generate_pool(&spec, size, seed)?;
            save_pool(&pool, &out)?;
            println!(
                "pool for {scenario}: {} successful episodes -> {}",
                pool.episodes.len(),
                out.display()
            );
        }
        Command::Transfer {
            config,
            seed_override,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed_override {
                cfg.seeds = vec![seed];
            }
            let records = run_transfer(&cfg)?;
            let final_step = records.iter().map(|r| r.env_step).max().unwrap_or(0);
            for r in records.iter().filter(|r| r.env_step == final_step) {
                println!(
                    "{} {} seed {}: final success rate {} ({} queries)",
                    r.scenario,
                    r.method.as_str(),
                    r.seed,
                    r.success_rate,
                    r.queries_so_far
                );
            }
        }
        Command::Aggregate { input, out } => {
            let rows = aggregate_dir(&input, &out)?;
            println!("aggregated {} rows -> {}", rows.len(), out.display());
        }
        Command::Scenarios => {
            for name in SCENARIO_NAMES {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
