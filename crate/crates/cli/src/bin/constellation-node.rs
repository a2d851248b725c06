use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use constellation_cli::parse_rtt_bias;
use constellation_core::cluster::{Node, NodeConfig, Role};
use constellation_core::device::load_manifest_dir;

/// Runs one cluster node. Prints `READY <id> <address>` once listening.
#[derive(Parser)]
#[command(name = "constellation-node", version)]
struct Args {
    #[arg(long)]
    role: Role,
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// Defaults to `<role>-<port>`.
    #[arg(long)]
    id: Option<String>,
    /// Registry address (leaders and edges).
    #[arg(long)]
    registry: Option<String>,
    /// File of `nodeId host:port` lines, tried when the registry is unreachable.
    #[arg(long)]
    bootstrap: Option<PathBuf>,
    /// Maximum edges per leader.
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_leaders: usize,
    /// Edge volunteers for promotion to leader.
    #[arg(long)]
    potential: bool,
    /// Directory of device manifests hosted by this edge.
    #[arg(long)]
    devices: Option<PathBuf>,
    #[arg(long, default_value = "keystore")]
    keystore: PathBuf,
    /// Registry leader-list log.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Tab-separated trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Time advances only on coordinator CLOCK messages.
    #[arg(long)]
    sim_clock: bool,
    /// `leader=ms,...` added to measured RTTs.
    #[arg(long, value_parser = parse_rtt_bias)]
    rtt_bias: Option<std::collections::BTreeMap<String, f64>>,
}

fn default_id(role: Role, listen: &str) -> String {
    match listen.rsplit_once(':').map(|(_, p)| p) {
        Some(port) if port != "0" => format!("{}-{port}", role.as_str()),
        _ => format!("{}-{}", role.as_str(), std::process::id()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let id = args.id.clone().unwrap_or_else(|| default_id(args.role, &args.listen));
    let mut cfg = NodeConfig::new(&id, args.role, &args.listen);
    cfg.registry = args.registry;
    cfg.bootstrap = args.bootstrap;
    if let Some(t) = args.threshold {
        if t == 0 {
            eprintln!("--threshold must be at least 1");
            return ExitCode::from(2);
        }
        cfg.threshold = t;
    }
    cfg.min_leaders = args.min_leaders;
    cfg.potential = args.potential;
    cfg.keystore = args.keystore;
    cfg.store = args.store;
    cfg.trace = args.trace;
    cfg.sim_clock = args.sim_clock;
    cfg.rtt_bias = args.rtt_bias.unwrap_or_default();
    if let Some(dir) = &args.devices {
        match load_manifest_dir(dir) {
            Ok(m) => cfg.devices = m,
            Err(e) => {
                eprintln!("cannot load devices from {}: {e}", dir.display());
                return ExitCode::from(2);
            }
        }
    }
    if cfg.role != Role::Registry && cfg.registry.is_none() && cfg.bootstrap.is_none() {
        eprintln!("a {} needs --registry or --bootstrap", cfg.role.as_str());
        return ExitCode::from(2);
    }
    let node = match Node::start(cfg) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("node {id} failed to start: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "READY {} {}", node.id(), node.address());
    let _ = out.flush();
    drop(out);
    node.wait();
    ExitCode::SUCCESS
}
