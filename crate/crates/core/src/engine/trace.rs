//! Routing-trace records, JSON Lines I/O, the trace auditor, and trust replay.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::router::{count_sentences, InteractionState, RequestSpec, RouterConfig, TemplateLibrary};
use crate::trust::{
    update_trust, EngagementFeatures, NoiseStream, StrategyGains, SuspicionRisk, TrustError,
    TrustParams, TrustState,
};
use crate::StrategyClass;

/// Version of the JSON Lines record layout documented in `docs/trace-schema.md`.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub perceive: f64,
    pub route: f64,
    pub realize: f64,
    pub respond: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 4] = ["perceive", "route", "realize", "respond"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.perceive, self.route, self.realize, self.respond]
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn: u32,
    /// Interaction state as the router saw it.
    pub state: InteractionState,
    pub trust_estimate: f64,
    pub strategy_class: StrategyClass,
    pub suggestion: String,
    pub template_id: String,
    pub facts: Vec<String>,
    pub exit_flag: bool,
    pub request: Option<RequestSpec>,
    pub engagement: EngagementFeatures,
    pub suspicion: SuspicionRisk,
    pub compliance: Option<bool>,
    pub timings_ms: StageTimings,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn write_jsonl(path: &Path, records: &[TraceRecord]) -> Result<(), TraceIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| TraceIoError::Json { line: r.turn as usize + 1, source: e })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_jsonl_string(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceRecord>, TraceIoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TraceIoError::Json { line: i + 1, source: e })?);
    }
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("turn indices are not contiguous at record {0}")]
    Turns(usize),
    #[error("turn {0}: negative or non-finite timing")]
    Timing(u32),
    #[error("turn {0}: Commitment routed below the readiness threshold")]
    PrematureCommitment(u32),
    #[error("turn {0}: suspicion above threshold without Rapport + exit")]
    MissedDeescalation(u32),
    #[error("turn {0}: request issued below the readiness threshold")]
    PrematureRequest(u32),
    #[error("turn {0}: request outside a Commitment move")]
    StrayRequest(u32),
    #[error("turn {0}: ladder rung skipped or repeated")]
    Ladder(u32),
    #[error("turn {0}: suggestion constraint violated: {1}")]
    Suggestion(u32, String),
}

/// Checks a trace against the router and suggestion invariants. `routed`
/// selects whether the router-specific safety rules apply (scripted
/// baselines are exempt from them, but not from the rest).
pub fn audit_trace(
    records: &[TraceRecord],
    cfg: &RouterConfig,
    library: &TemplateLibrary,
    routed: bool,
) -> Result<(), AuditError> {
    let mut granted = 0usize;
    for (i, r) in records.iter().enumerate() {
        let t = r.turn;
        if t as usize != i {
            return Err(AuditError::Turns(i));
        }
        if r.timings_ms.as_array().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AuditError::Timing(t));
        }
        if routed {
            if r.state.suspicion.value() >= cfg.s_high {
                if !(r.strategy_class == StrategyClass::Rapport && r.exit_flag) {
                    return Err(AuditError::MissedDeescalation(t));
                }
            } else if r.strategy_class == StrategyClass::Commitment && r.trust_estimate < cfg.theta_ready {
                return Err(AuditError::PrematureCommitment(t));
            }
            if r.request.is_some() && r.trust_estimate < cfg.theta_ready {
                return Err(AuditError::PrematureRequest(t));
            }
        }
        if let Some(req) = r.request {
            if r.strategy_class != StrategyClass::Commitment {
                return Err(AuditError::StrayRequest(t));
            }
            match cfg.ladder.get(granted) {
                Some(rung) if rung.channel == req.channel && rung.difficulty == req.difficulty => {}
                _ => return Err(AuditError::Ladder(t)),
            }
            if r.compliance == Some(true) {
                granted += 1;
            }
        }
        audit_suggestion(r, library).map_err(|m| AuditError::Suggestion(t, m))?;
    }
    Ok(())
}

fn audit_suggestion(r: &TraceRecord, library: &TemplateLibrary) -> Result<(), String> {
    let n = count_sentences(&r.suggestion);
    if n == 0 || n > 2 {
        return Err(format!("{n} sentences"));
    }
    let template = library
        .get(&r.template_id)
        .ok_or_else(|| format!("unknown template `{}`", r.template_id))?;
    if template.class != r.strategy_class || template.venue != r.state.context.venue {
        return Err("template does not match class/venue".into());
    }
    let profile_facts = r.state.profile.facts();
    for f in &r.facts {
        if !profile_facts.contains(f) || !r.suggestion.contains(f.as_str()) {
            return Err(format!("fact `{f}` not grounded in the profile"));
        }
    }
    if r.exit_flag {
        let line = library.render_exit(&r.state).map_err(|e| e.to_string())?;
        if !r.suggestion.contains(&line) {
            return Err("exit move missing".into());
        }
    }
    if let Some(req) = r.request {
        if !r.suggestion.contains(req.channel.phrase()) {
            return Err("request marker missing".into());
        }
    }
    Ok(())
}

/// Recomputes the agent's trust estimate for every turn from the recorded
/// engagement, class, and suspicion. Element `t` is the estimate the router
/// saw at turn `t`; the final element is the estimate after the last turn.
pub fn replay_estimates(
    records: &[TraceRecord],
    params: &TrustParams,
    gains: &StrategyGains,
    noise: &mut NoiseStream,
) -> Result<Vec<f64>, TrustError> {
    let mut state = TrustState::new(0.0);
    let mut out = vec![state.value];
    for r in records {
        state = update_trust(
            state,
            &r.engagement,
            r.strategy_class,
            r.suspicion,
            params,
            gains,
            noise.next_draw(),
        )?;
        out.push(state.value);
    }
    Ok(out)
}
