use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use optoslime_core::calibration::Calibration;
use optoslime_gateway::{router, AppState, GatewayConfig};

#[derive(Parser)]
#[command(name = "optoslime-gateway", version, about = "Serve live gate sessions over HTTP")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Maximum number of open sessions.
    #[arg(long, default_value_t = 16)]
    capacity: usize,
    /// Milliseconds between timer ticks and stream messages.
    #[arg(long, default_value_t = 250)]
    cadence_ms: u64,
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let calibration = match &args.calibration {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Calibration::from_toml(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => Calibration::default(),
    };
    let config = GatewayConfig { capacity: args.capacity, cadence: Duration::from_millis(args.cadence_ms.max(1)), calibration };
    let listener = tokio::net::TcpListener::bind(args.addr).await.with_context(|| format!("binding {}", args.addr))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await?;
    Ok(())
}
