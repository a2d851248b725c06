use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use constellation_core::device::load_manifest_dir;
use constellation_core::gateway::{GatewayServer, MockGateway};

/// Serves a directory of thing manifests over the gateway HTTP interface.
/// Prints `READY <url>` once listening.
#[derive(Parser)]
#[command(name = "constellation-gateway", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    #[arg(long)]
    things: PathBuf,
    /// Require `Authorization: Bearer <token>` on every request.
    #[arg(long)]
    token: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let manifests = match load_manifest_dir(&args.things) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("cannot load things from {}: {e}", args.things.display());
            return ExitCode::from(2);
        }
    };
    let count = manifests.len();
    let server = match GatewayServer::start(MockGateway::new(manifests, args.token), &args.listen) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "READY {} ({count} things)", server.url());
    let _ = out.flush();
    drop(out);
    server.join();
    ExitCode::SUCCESS
}
