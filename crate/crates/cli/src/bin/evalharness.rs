use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use facebreed_cli::{run_convergence, run_lineups, write_convergence_report, ConvergenceOptions};
use facebreed_core::eval::{PolicyKind, DEFAULT_LINEUP_SIGMA};
use facebreed_core::latent::DEFAULT_DIM;

/// Scripted-constructor experiments and lineup recognition.
#[derive(Debug, Parser)]
#[command(name = "evalharness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Greedy,
    Random,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs scripted sessions against hidden targets and reports distance traces.
    Convergence {
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        #[arg(long, default_value_t = 30)]
        generations: usize,
        #[arg(long, value_enum, default_value_t = Policy::Greedy)]
        policy: Policy,
        /// CSV output; the JSON summary goes to `<stem>.summary.json` beside it.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        /// Save each finished session and its target for later lineups.
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
    },
    /// Judges finished sessions' composites against noisy lineups.
    Lineup {
        #[arg(long, required = true)]
        session: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_LINEUP_SIGMA)]
        sigma: f64,
        /// Target latent (JSON array). Defaults to `<session stem>.target.json`.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Convergence {
            seeds,
            generations,
            policy,
            report,
            dim,
            sessions_dir,
        } => {
            let opts = ConvergenceOptions {
                seeds,
                generations,
                policy: match policy {
                    Policy::Greedy => PolicyKind::GreedyLatentDistance,
                    Policy::Random => PolicyKind::RandomBaseline,
                },
                dim,
                sessions_dir,
            };
            let result = run_convergence(&opts)?;
            let summary = write_convergence_report(&result, &report)?;
            println!(
                "{seeds} seeds, {generations} generations, D={dim}: median reduction {:.1}%, mean {:.1}%",
                result.summary.median_reduction * 100.0,
                result.summary.mean_reduction * 100.0
            );
            println!("trace: {}\nsummary: {}", report.display(), summary.display());
        }
        Command::Lineup {
            session,
            sigma,
            target,
            trials,
            seed,
            report,
        } => {
            let result = run_lineups(&session, target.as_deref(), sigma, trials, seed)?;
            let json = serde_json::to_string_pretty(&result)?;
            match report {
                Some(path) => {
                    std::fs::write(&path, json)?;
                    println!(
                        "recognition rate {:.1}% over {} lineups; report: {}",
                        result.recognition_rate,
                        result.trials.len(),
                        path.display()
                    );
                }
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
