//! Exhaustive small-horizon oracle.
//!
//! With zero noise, the class sequence a session follows does not depend on
//! request outcomes: only which ladder rung comes next does. So a policy's
//! value can be computed exactly from one deterministic trajectory plus a
//! distribution over how many rungs have been granted so far.
//!
//! The value of a trajectory is the expected compliance probability of the
//! request issued on its final turn (zero when the final turn issues none).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EngineError, Observation, Pilot, Session, SessionConfig, SimulatedTarget};
use crate::router::TemplateLibrary;
use crate::trust::{compliance_probability, ComplianceOutcome};
use crate::StrategyClass;

pub const MAX_ORACLE_HORIZON: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub class: StrategyClass,
    pub request: bool,
    /// Target's ground-truth trust when the move is made.
    pub target_trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_sequence: Vec<StrategyClass>,
    pub best_value: f64,
    /// Sequences that respect the request gate and were scored.
    pub evaluated: usize,
}

fn deterministic(cfg: &SessionConfig) -> Result<(), EngineError> {
    if cfg.agent_trust.noise.sigma != 0.0 || cfg.persona.archetype.volatility_sigma != 0.0 {
        return Err(EngineError::Config("the oracle requires zero noise".into()));
    }
    Ok(())
}

pub(crate) fn trajectory_with(
    cfg: &SessionConfig,
    pilot: Pilot,
    horizon: u32,
    library: &Arc<TemplateLibrary>,
) -> Result<Vec<TrajectoryStep>, EngineError> {
    let cfg = SessionConfig { horizon, ..cfg.clone() };
    let mut session = Session::with_pilot(cfg.clone(), Arc::clone(library), pilot)?;
    let mut target = SimulatedTarget::new(cfg.persona.clone(), cfg.seed);
    let mut steps = Vec::with_capacity(horizon as usize);
    for _ in 0..horizon {
        let Some(decision) = session.decide()? else { break };
        let target_trust = target.state.internal_trust.value;
        let request = decision.suggestion.request.is_some();
        // Outcomes are accounted for analytically, so the walk never grants.
        let (engagement, suspicion, _) = target.react(
            &crate::engine::Decision {
                suggestion: crate::router::Suggestion { request: None, ..decision.suggestion.clone() },
                ..decision.clone()
            },
            &cfg.factors,
        )?;
        session.observe(Observation {
            engagement,
            suspicion,
            compliance: request.then_some(ComplianceOutcome(false)),
            reply: None,
            respond_ms: 0.0,
        })?;
        steps.push(TrajectoryStep { class: decision.suggestion.class, request, target_trust });
        if session.stopped().is_some_and(|r| r != super::StopReason::Horizon) {
            break;
        }
    }
    Ok(steps)
}

/// Deterministic trajectory of `cfg`'s own policy over `horizon` turns.
pub fn trajectory(cfg: &SessionConfig, horizon: u32) -> Result<Vec<TrajectoryStep>, EngineError> {
    deterministic(cfg)?;
    let lib = Arc::new(TemplateLibrary::builtin());
    trajectory_with(cfg, Pilot::for_policy(cfg), horizon, &lib)
}

/// Expected compliance probability of the final-turn request, marginalizing
/// over the outcomes of every earlier request.
pub fn expected_final_compliance(
    steps: &[TrajectoryStep],
    cfg: &SessionConfig,
    horizon: u32,
) -> Result<f64, EngineError> {
    if steps.len() < horizon as usize {
        return Ok(0.0);
    }
    let ladder = &cfg.router.ladder;
    let compliance = &cfg.persona.archetype.compliance;
    // dist[k] = probability that exactly k rungs have been granted
    let mut dist = vec![0.0; ladder.len() + 1];
    dist[0] = 1.0;
    let last = steps.len() - 1;
    for (t, step) in steps.iter().enumerate() {
        if !step.request {
            if t == last {
                return Ok(0.0);
            }
            continue;
        }
        let mut p = vec![0.0; ladder.len()];
        for (k, rung) in ladder.iter().enumerate() {
            p[k] = compliance_probability(step.target_trust, rung.difficulty, &cfg.factors, compliance)?;
        }
        if t == last {
            return Ok((0..ladder.len()).map(|k| dist[k] * p[k]).sum());
        }
        let mut next = vec![0.0; dist.len()];
        for k in 0..dist.len() {
            if k < ladder.len() {
                next[k] += dist[k] * (1.0 - p[k]);
                next[k + 1] += dist[k] * p[k];
            } else {
                next[k] += dist[k];
            }
        }
        dist = next;
    }
    Ok(0.0)
}

/// Value the configured policy attains under the oracle's objective.
pub fn adaptive_value(cfg: &SessionConfig, horizon: u32) -> Result<f64, EngineError> {
    let steps = trajectory(cfg, horizon)?;
    expected_final_compliance(&steps, cfg, horizon)
}

/// Enumerates every strategy-class sequence of length `horizon` (at most
/// 3^4), discarding sequences that place a Commitment move where the request
/// gate forbids one, and returns the best. Ties go to the earliest sequence in
/// Rapport < Credibility < Commitment lexicographic order.
pub fn brute_force_policy(cfg: &SessionConfig, horizon: u32) -> Result<OracleResult, EngineError> {
    if horizon == 0 || horizon > MAX_ORACLE_HORIZON {
        return Err(EngineError::HorizonTooLarge(horizon));
    }
    deterministic(cfg)?;
    let lib = Arc::new(TemplateLibrary::builtin());
    let total = 3usize.pow(horizon);
    let mut best: Option<(Vec<StrategyClass>, f64)> = None;
    let mut evaluated = 0;
    for code in 0..total {
        let mut c = code;
        let mut seq = vec![StrategyClass::Rapport; horizon as usize];
        for slot in seq.iter_mut().rev() {
            *slot = StrategyClass::ALL[c % 3];
            c /= 3;
        }
        let steps = match trajectory_with(cfg, Pilot::Script(seq.clone()), horizon, &lib) {
            Ok(s) => s,
            Err(EngineError::UnsafeScript(_)) => continue,
            Err(e) => return Err(e),
        };
        evaluated += 1;
        let value = expected_final_compliance(&steps, cfg, horizon)?;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((seq, value));
        }
    }
    let (best_sequence, best_value) = best.expect("the all-Rapport sequence is always admissible");
    Ok(OracleResult { best_sequence, best_value, evaluated })
}
