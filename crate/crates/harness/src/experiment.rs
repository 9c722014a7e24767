use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustroute_core::engine::trace::{write_jsonl, TraceIoError};
use trustroute_core::engine::{run_batch, EngineError, Policy, SessionOutcome, StopReason};
use trustroute_core::router::TemplateLibrary;
use trustroute_core::target::ArchetypeName;
use trustroute_core::Channel;

use crate::config::{ConfigError, ExperimentConfig};
use crate::latency::{LatencyError, LatencyReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{arm} / {archetype} seed {seed}: {source}")]
    Session {
        arm: Policy,
        archetype: ArchetypeName,
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error("writing {path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceIoError,
    },
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Aggregates for one (arm, archetype) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub arm: Policy,
    pub archetype: ArchetypeName,
    pub sessions: usize,
    /// Mean fraction of ladder rungs granted per session.
    pub mean_compliance: f64,
    /// Fraction of sessions in which each channel was granted.
    pub per_channel: BTreeMap<Channel, f64>,
    /// Over sessions whose estimate reached the readiness threshold.
    pub mean_turns_to_readiness: Option<f64>,
    pub readiness_reached: usize,
    /// Mean agent trust estimate at each turn, over sessions that reached it.
    pub mean_trust_trajectory: Vec<f64>,
    pub mean_final_suspicion: f64,
    pub disengaged: usize,
}

impl CellReport {
    pub fn from_outcomes(
        arm: Policy,
        archetype: ArchetypeName,
        ladder: &[Channel],
        outcomes: &[SessionOutcome],
    ) -> Self {
        let n = outcomes.len().max(1) as f64;
        let mean_compliance = outcomes.iter().map(|o| o.result.compliance_rate(ladder.len())).sum::<f64>() / n;
        let per_channel = ladder
            .iter()
            .map(|c| {
                let hits = outcomes.iter().filter(|o| o.result.granted.contains(c)).count();
                (*c, hits as f64 / n)
            })
            .collect();
        let ready: Vec<f64> = outcomes.iter().filter_map(|o| o.result.turns_to_readiness.map(f64::from)).collect();
        let mean_turns_to_readiness = (!ready.is_empty()).then(|| ready.iter().sum::<f64>() / ready.len() as f64);
        let longest = outcomes.iter().map(|o| o.trace.len()).max().unwrap_or(0);
        let mean_trust_trajectory = (0..longest)
            .map(|t| {
                let vals: Vec<f64> = outcomes.iter().filter_map(|o| o.trace.get(t).map(|r| r.trust_estimate)).collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect();
        CellReport {
            arm,
            archetype,
            sessions: outcomes.len(),
            mean_compliance,
            per_channel,
            mean_turns_to_readiness,
            readiness_reached: ready.len(),
            mean_trust_trajectory,
            mean_final_suspicion: outcomes.iter().map(|o| o.result.final_suspicion).sum::<f64>() / n,
            disengaged: outcomes.iter().filter(|o| o.result.stop == StopReason::Disengaged).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub sessions_per_cell: u64,
    pub horizon: u32,
    pub channels: Vec<Channel>,
    pub cells: Vec<CellReport>,
    pub latency: LatencyReport,
}

impl ExperimentReport {
    pub fn cell(&self, arm: Policy, archetype: ArchetypeName) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.arm == arm && c.archetype == archetype)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "experiment `{}`: {} sessions per cell, seeds {}..{}, horizon {}",
            self.name,
            self.sessions_per_cell,
            self.seed,
            self.seed + self.sessions_per_cell,
            self.horizon
        );
        let _ = writeln!(out);
        let mut header = format!("{:<12} {:<10} {:>5} {:>10}", "arm", "archetype", "n", "compliance");
        for c in &self.channels {
            let _ = write!(header, " {:>10}", c.to_string());
        }
        let _ = write!(header, " {:>9} {:>9} {:>10}", "ready_at", "ready_n", "suspicion");
        let _ = writeln!(out, "{header}");
        for cell in &self.cells {
            let mut line = format!(
                "{:<12} {:<10} {:>5} {:>10.4}",
                cell.arm.to_string(),
                cell.archetype.to_string(),
                cell.sessions,
                cell.mean_compliance
            );
            for c in &self.channels {
                let _ = write!(line, " {:>10.4}", cell.per_channel.get(c).copied().unwrap_or(0.0));
            }
            let ready = cell.mean_turns_to_readiness.map_or("-".to_string(), |v| format!("{v:.2}"));
            let _ = write!(line, " {:>9} {:>9} {:>10.4}", ready, cell.readiness_reached, cell.mean_final_suspicion);
            let _ = writeln!(out, "{line}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "latency per stage (ms, nearest-rank P90)");
        out.push_str(&self.latency.render());
        out
    }
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub outcomes: Vec<((Policy, ArchetypeName), Vec<SessionOutcome>)>,
    pub trace_files: Vec<PathBuf>,
}

pub fn trace_file_name(arm: Policy, archetype: ArchetypeName, seed: u64) -> String {
    format!("{arm}_{archetype}_{seed:06}.jsonl")
}

/// Runs every (arm, archetype) cell. When `out_dir` is set, writes one trace
/// per session under `out_dir/traces/` plus `report.txt` and `report.json`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutput, ExperimentError> {
    let library = Arc::new(TemplateLibrary::builtin());
    let channels: Vec<Channel> = cfg.router.ladder.iter().map(|r| r.channel).collect();
    let trace_dir = out_dir.map(|d| d.join("traces"));
    if let Some(d) = &trace_dir {
        std::fs::create_dir_all(d)?;
    }

    let mut cells = Vec::new();
    let mut all = Vec::new();
    let mut trace_files = Vec::new();
    for &arm in &cfg.arms {
        for (ai, &archetype) in cfg.archetypes.iter().enumerate() {
            let sessions = cfg
                .seeds()
                .map(|seed| cfg.session(arm, ai, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let results = run_batch(&sessions, cfg.parallelism, Arc::clone(&library));
            let mut outcomes = Vec::with_capacity(results.len());
            for (s, r) in sessions.iter().zip(results) {
                let o = r.map_err(|source| ExperimentError::Session { arm, archetype, seed: s.seed, source })?;
                if let Some(d) = &trace_dir {
                    let path = d.join(trace_file_name(arm, archetype, s.seed));
                    write_jsonl(&path, &o.trace).map_err(|source| ExperimentError::Trace { path: path.clone(), source })?;
                    trace_files.push(path);
                }
                outcomes.push(o);
            }
            tracing::info!(%arm, %archetype, sessions = outcomes.len(), "cell finished");
            cells.push(CellReport::from_outcomes(arm, archetype, &channels, &outcomes));
            all.push(((arm, archetype), outcomes));
        }
    }
    let latency = LatencyReport::from_records(all.iter().flat_map(|(_, o)| o.iter().flat_map(|s| s.trace.iter())))?;
    let report = ExperimentReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        sessions_per_cell: cfg.sessions,
        horizon: cfg.horizon,
        channels,
        cells,
        latency,
    };
    if let Some(d) = out_dir {
        std::fs::write(d.join("report.txt"), report.render())?;
        std::fs::write(d.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(ExperimentOutput { report, outcomes: all, trace_files })
}
