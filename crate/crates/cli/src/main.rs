use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use distillrec::config::RunConfig;
use distillrec::pipeline::{set_jobs, Pipeline, StageOutcome};
use distillrec::Error;

/// Train per-feedback DDQN teachers on a simulated recommender environment
/// and distill them into one multi-branch student.
#[derive(Parser, Debug)]
#[command(name = "distillrec", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed, overriding `run.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run directory, overriding `run.out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads for data generation and evaluation.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic catalog and interaction log.
    Simulate,
    /// Train one teacher per feedback type.
    TrainTeachers {
        /// Interaction log to warm-start user histories from.
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
    },
    /// Build the student's training set from teacher outputs.
    GenDistill,
    /// Train the student on the distill dataset.
    TrainStudent,
    /// Score the student, the teachers and a random policy on held-out users.
    Evaluate,
    /// Time one student pass against sequential teacher passes.
    Bench,
    /// Every stage in order.
    RunAll,
}

fn run(cli: Cli) -> Result<Vec<StageOutcome>, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.clone();
    }
    set_jobs(cli.jobs)?;
    let out = cfg.run.out.clone();
    let mut pipeline = Pipeline::new(cfg, out, cli.force)?;
    Ok(match cli.command {
        Command::Simulate => vec![pipeline.simulate()?],
        Command::TrainTeachers { log } => {
            pipeline.log_override = log;
            vec![pipeline.train_teachers(false)?]
        }
        Command::GenDistill => vec![pipeline.gen_distill()?],
        Command::TrainStudent => vec![pipeline.train_student(false)?],
        Command::Evaluate => vec![pipeline.evaluate()?],
        Command::Bench => vec![pipeline.bench()?],
        Command::RunAll => pipeline.run_all()?,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcomes) => {
            for o in outcomes {
                println!("{}", o.summary.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
