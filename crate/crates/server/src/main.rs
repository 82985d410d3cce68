use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use facebreed_server::{app, ServerConfig};
use tracing_subscriber::EnvFilter;

/// Serves the composite construction API.
#[derive(Debug, Parser)]
#[command(name = "facebreed-server", version)]
struct Args {
    #[arg(long, env = "FACEBREED_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Generator descriptor JSON. Defaults to the synthetic backend at 512 dimensions.
    #[arg(long, env = "FACEBREED_GENERATOR")]
    generator: Option<PathBuf>,
    /// Axis registry JSON. Optional for the synthetic backend.
    #[arg(long, env = "FACEBREED_AXES")]
    axes: Option<PathBuf>,
    /// Directory for session files.
    #[arg(long, env = "FACEBREED_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let router = match ServerConfig::from_paths(args.generator.as_deref(), args.axes.as_deref(), args.data_dir)
        .and_then(app)
    {
        Ok(r) => r,
        Err(e) => {
            tracing::error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let listener = match tokio::net::TcpListener::bind(args.listen).await {
        Ok(l) => l,
        Err(e) => {
            tracing::error!("cannot bind {}: {e}", args.listen);
            return ExitCode::FAILURE;
        }
    };
    tracing::info!("listening on {}", args.listen);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router).with_graceful_shutdown(shutdown).await {
        tracing::error!("{e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
