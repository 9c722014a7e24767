use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use trustroute::config::ExperimentConfig;
use trustroute::experiment::run_experiment;
use trustroute::latency::LatencyReport;
use trustroute::service::{serve, SessionStore};
use trustroute_core::align::{
    retrieval_accuracy, train_alignment, write_loss_curve, AlignmentConfig, SyntheticConfig,
};
use trustroute_core::engine::{adaptive_value, brute_force_policy, Clock, Policy, SessionConfig};
use trustroute_core::target::ArchetypeName;

/// Environment variable holding the port for `serve`.
const PORT_ENV: &str = "TRUSTROUTE_PORT";
const DEFAULT_PORT: u16 = 8787;

#[derive(Parser)]
#[command(name = "trustroute", version, about = "Trust-state routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write traces plus a report.
    Run {
        config: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency table (min / max / nearest-rank P90 / avg) over a trace directory.
    Report {
        traces: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the session API on 127.0.0.1 (port from TRUSTROUTE_PORT).
    Serve,
    /// Compare the router against exhaustive search on a deterministic instance.
    Oracle {
        #[arg(long, default_value = "Trusting")]
        archetype: ArchetypeName,
        #[arg(long, default_value_t = 3)]
        horizon: u32,
    },
    /// Train the contrastive adapters on synthetic pairs.
    Align {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Writes `pairs.jsonl` and `loss.txt` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("run `trustroute --help` for usage");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.or_else(|| cfg.output_dir.clone()).context("no output directory: pass --out or set output_dir")?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let result = run_experiment(&cfg, Some(&out))?;
            print!("{}", result.report.render());
            println!("\n{} trace files in {}", result.trace_files.len(), out.join("traces").display());
        }
        Command::Report { traces, json } => {
            let report = LatencyReport::from_trace_dir(&traces)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
        }
        Command::Serve => {
            let port = match std::env::var(PORT_ENV) {
                Ok(v) => v.parse::<u16>().with_context(|| format!("{PORT_ENV}={v} is not a port"))?,
                Err(_) => DEFAULT_PORT,
            };
            let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(addr, Arc::new(SessionStore::default())))?;
        }
        Command::Oracle { archetype, horizon } => {
            let cfg = SessionConfig { clock: Clock::Frozen, ..SessionConfig::new(archetype, Policy::Adaptive, 0) };
            let best = brute_force_policy(&cfg, horizon)?;
            let adaptive = adaptive_value(&cfg, horizon)?;
            println!("sequences scored: {}", best.evaluated);
            println!("oracle sequence:  {:?}", best.best_sequence);
            println!("oracle value:     {:.6}", best.best_value);
            println!("adaptive value:   {adaptive:.6}");
            if best.best_value > 0.0 {
                println!("ratio:            {:.4}", adaptive / best.best_value);
            }
        }
        Command::Align { seed, steps, out } => {
            let data = SyntheticConfig { seed, ..SyntheticConfig::default() }.generate()?;
            let cfg = AlignmentConfig { seed, steps, ..AlignmentConfig::default() };
            let run = train_alignment(&data, &cfg)?;
            let merged = run.encoders.merge()?;
            let acc = retrieval_accuracy(&merged, data.image_matrix()?.view(), data.text_matrix()?.view())?;
            println!("loss {:.6} -> {:.6} over {steps} steps", run.initial_loss(), run.final_loss());
            println!("top-1 retrieval {:.1}%", acc * 100.0);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                data.write_jsonl(&dir.join("pairs.jsonl"))?;
                write_loss_curve(&dir.join("loss.txt"), &run.loss_curve)?;
            }
            if !run.final_loss().is_finite() {
                bail!("training produced a non-finite loss");
            }
        }
    }
    Ok(())
}
