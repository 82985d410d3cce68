use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use facebreed_cli::{export_session, write_synthetic_axes};
use facebreed_core::latent::DEFAULT_DIM;

/// Session export and setup utilities.
#[derive(Debug, Parser)]
#[command(name = "facebreed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Renders a finished session's stills and animation.
    Export {
        #[arg(long)]
        session: PathBuf,
        /// Frames per animation segment, endpoints included.
        #[arg(long, default_value_t = 12)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        frame_delay_ms: u32,
    },
    /// Writes the synthetic generator's feature axes as an axis file.
    SyntheticAxes {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Export {
            session,
            frames,
            out,
            frame_delay_ms,
        } => {
            let written = export_session(&session, frames, &out, frame_delay_ms)?;
            println!("wrote {} files to {}", written.len(), out.display());
        }
        Command::SyntheticAxes { seed, dim, out } => {
            write_synthetic_axes(seed, dim, &out)?;
            println!("wrote {}", out.display());
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
