use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use constellation_core::harness::{
    emit_report, generate, parse_delta, parse_delta_grid, parse_error_grid, parse_model_spec, run_cache_experiment,
    run_cluster_scenario, run_privacy_overhead, write_overhead_csv, CacheGrid, HarnessError, ReplaySeries, Scenario,
    SeriesKind,
};
use constellation_core::Millis;

/// Experiment driver: cache trade-off replays, cluster fault scenarios and
/// privacy overhead timings.
#[derive(Parser)]
#[command(name = "constellation-harness", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a series through the cache for every (model, delta, error) combination.
    Cache {
        /// `timestamp_ms,value` CSV file, or `preset:<kind>` for a generated series.
        #[arg(long)]
        series: String,
        /// Comma-separated model specs, e.g. `LinearRegression,Cyclic:window=200`.
        #[arg(long, default_value = "LinearRegression")]
        models: String,
        /// Comma-separated deltas: `none`, `kP` multiples of the period, or `15m`, `1h`, `900000ms`.
        #[arg(long, default_value = "0,P,2P,4P,8P")]
        delta_grid: String,
        /// Comma-separated ERROR tolerances; `none` disables the check.
        #[arg(long, default_value = "none")]
        error: String,
        /// Lookup period; defaults to the series' median step.
        #[arg(long)]
        period: Option<String>,
        #[arg(long, default_value = "out/cache")]
        out: PathBuf,
        /// Points in a generated series.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 900_000)]
        step_ms: Millis,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a `.scn` fault scenario against real node processes.
    Cluster {
        #[arg(long)]
        scenario: PathBuf,
        /// Node executable; defaults to `constellation-node` next to this binary.
        #[arg(long)]
        node_bin: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time privacy rules and envelope sealing; writes per-rule latency percentiles.
    Privacy {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/privacy_overhead.csv")]
        out: PathBuf,
    },
    /// Write a generated series as CSV.
    Series {
        /// linear, polynomial, diurnal, step or random-walk.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 900_000)]
        step_ms: Millis,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn preset(kind: &str) -> Result<SeriesKind, HarnessError> {
    SeriesKind::preset(kind).ok_or_else(|| HarnessError::Series(format!("unknown series kind '{kind}'")))
}

fn create_parent(path: &Path) -> Result<(), HarnessError> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn sibling_node_bin() -> PathBuf {
    let name = format!("constellation-node{}", std::env::consts::EXE_SUFFIX);
    std::env::current_exe()
        .ok()
        .and_then(|p| p.parent().map(|d| d.join(&name)))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn run(cmd: Cmd) -> Result<bool, HarnessError> {
    match cmd {
        Cmd::Cache {
            series,
            models,
            delta_grid,
            error,
            period,
            out,
            steps,
            step_ms,
            seed,
        } => {
            let series = match series.strip_prefix("preset:") {
                Some(kind) => generate(&preset(kind)?, steps, step_ms, seed),
                None => ReplaySeries::load(Path::new(&series))?,
            };
            let base = series.period();
            let period = match period {
                Some(p) => Some(parse_delta(&p, base)?.ok_or_else(|| HarnessError::Grid("period cannot be none".into()))?),
                None => None,
            };
            let p = period.unwrap_or(base).max(1);
            let grid = CacheGrid {
                models: models.split(',').map(parse_model_spec).collect::<Result<_, _>>()?,
                deltas: parse_delta_grid(&delta_grid, p)?,
                errors: parse_error_grid(&error)?,
                period,
            };
            let exp = run_cache_experiment(&series, &grid)?;
            for r in &exp.results {
                let row = &r.row;
                println!(
                    "{} error={} delta={} reduction={:.4} median_err={:.4} p95_err={:.4} unsafe={}",
                    row.model,
                    row.error_tol.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
                    row.delta_ms.map(|d| d.to_string()).unwrap_or_else(|| "none".into()),
                    row.reduction,
                    row.median_err,
                    row.p95_err,
                    r.unsafe_served
                );
            }
            for path in emit_report(&exp, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Cmd::Cluster { scenario, node_bin, out } => {
            let scn = Scenario::load(&scenario)?;
            let node_bin = node_bin.unwrap_or_else(sibling_node_bin);
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&scn.name));
            std::fs::create_dir_all(&out)?;
            let report = run_cluster_scenario(&scn, &node_bin, &out)?;
            report.write(&out)?;
            print!("{}", report.render());
            println!("artifacts in {}", out.display());
            Ok(report.passed())
        }
        Cmd::Privacy { samples, seed, out } => {
            let rows = run_privacy_overhead(samples, seed);
            let csv = write_overhead_csv(&rows);
            create_parent(&out)?;
            std::fs::write(&out, &csv)?;
            print!("{csv}");
            Ok(true)
        }
        Cmd::Series {
            kind,
            steps,
            step_ms,
            seed,
            out,
        } => {
            let s = generate(&preset(&kind)?, steps, step_ms, seed);
            create_parent(&out)?;
            s.write_csv(std::fs::File::create(&out)?)?;
            println!("wrote {} points to {}", s.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse().cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
