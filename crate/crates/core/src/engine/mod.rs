//! Turn loop: perceive, route, realize, respond, update.
//!
//! [`Session`] holds the agent side of one conversation and is driven one
//! turn at a time, either by [`run_session`] against a synthetic target or by
//! an external caller feeding observed replies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::router::{
    realize_with_hook, route_strategy, select_request, static_baseline_policy, ContextSnapshot,
    DialogueTurn, InteractionState, RequestError, RequestSpec, RouterConfig, RouterConfigError,
    StageLengths, SuggestionGenerator, Suggestion, TemplateError, TemplateLibrary,
};
use crate::target::{decide_compliance, respond, ArchetypeName, Persona, PersonaError, TargetState, VolatilityStream};
use crate::trust::{
    update_trust, ComplianceOutcome, ComplianceParams, EngagementFeatures, NoiseConfig,
    NoiseStream, ObservableFactors, StrategyGains, SuspicionRisk, TrustError, TrustParams,
    TrustState,
};
use crate::{Channel, ParseNameError, StrategyClass};

mod batch;
mod oracle;
pub mod trace;

pub use batch::run_batch;
pub use oracle::{
    adaptive_value, brute_force_policy, expected_final_compliance, trajectory, OracleResult,
    TrajectoryStep, MAX_ORACLE_HORIZON,
};
pub use trace::{audit_trace, replay_estimates, AuditError, StageTimings, TraceRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Router(#[from] RouterConfigError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error("no decision is awaiting a response")]
    NoPendingTurn,
    #[error("a decision is already awaiting a response")]
    TurnPending,
    #[error("session has finished: {0:?}")]
    Finished(StopReason),
    #[error("scripted Commitment at turn {0} is not permitted below the readiness threshold")]
    UnsafeScript(u32),
    #[error("oracle horizon {0} exceeds the enumeration limit")]
    HorizonTooLarge(u32),
}

/// Experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    /// Latent-trust routing with the full inferred profile.
    Adaptive,
    /// Fixed-stage script.
    StaticStage,
    /// Adaptive routing over a degraded profile (interests stripped).
    NoAlignment,
    /// Routing agent removed: the fixed-stage script drives the session.
    NoAgent,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Adaptive, Policy::StaticStage, Policy::NoAlignment, Policy::NoAgent];

    /// Whether the router (and its safety rules) chooses the moves.
    pub fn is_routed(self) -> bool {
        matches!(self, Policy::Adaptive | Policy::NoAlignment)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Policy {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseNameError { kind: "arm", value: s.to_string() })
    }
}

/// How stage timings are recorded. `Frozen` writes zeros so that trace
/// files are byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Clock {
    #[default]
    Monotonic,
    Frozen,
}

impl Clock {
    fn time<T>(self, f: impl FnOnce() -> T) -> (T, f64) {
        match self {
            Clock::Frozen => (f(), 0.0),
            Clock::Monotonic => {
                let start = Instant::now();
                let out = f();
                (out, start.elapsed().as_secs_f64() * 1e3)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub persona: Persona,
    pub router: RouterConfig,
    /// Agent-side estimator.
    pub agent_trust: TrustParams,
    pub agent_gains: StrategyGains,
    /// Agent-side compliance model, used for previews only.
    pub agent_compliance: ComplianceParams,
    pub horizon: u32,
    pub seed: u64,
    pub policy: Policy,
    pub stages: StageLengths,
    pub factors: ObservableFactors,
    pub clock: Clock,
}

impl SessionConfig {
    pub fn new(archetype: ArchetypeName, policy: Policy, seed: u64) -> Self {
        SessionConfig {
            persona: Persona::builtin(archetype),
            router: RouterConfig::default(),
            agent_trust: TrustParams::default(),
            agent_gains: StrategyGains::default(),
            agent_compliance: ComplianceParams::default(),
            horizon: 12,
            seed,
            policy,
            stages: StageLengths::default(),
            factors: ObservableFactors::default(),
            clock: Clock::Monotonic,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.horizon == 0 {
            return Err(EngineError::Config("horizon must be >= 1".into()));
        }
        self.router.validate()?;
        self.agent_trust.validate()?;
        self.agent_compliance.validate()?;
        if !self.agent_gains.is_finite() {
            return Err(EngineError::Config("agent gains must be finite".into()));
        }
        self.persona.archetype.validate()?;
        if self.persona.archetype.compliance.eta.len() != self.factors.as_slice().len()
            || self.agent_compliance.eta.len() != self.factors.as_slice().len()
        {
            return Err(EngineError::Config("eta length must match the observable factors".into()));
        }
        if self.stages.rapport == 0 || self.stages.credibility == 0 {
            return Err(EngineError::Config("stage lengths must be positive".into()));
        }
        Ok(())
    }

    /// Profile handed to the router under this arm.
    pub fn agent_profile(&self) -> crate::ProfileSummary {
        match self.policy {
            Policy::NoAlignment => self.persona.profile.without_interests(),
            _ => self.persona.profile.clone(),
        }
    }
}

/// splitmix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_AGENT_NOISE: u64 = 1;
const STREAM_VOLATILITY: u64 = 2;
const STREAM_COMPLIANCE: u64 = 3;

/// Noise stream the agent estimator uses for a session seed.
pub fn agent_noise_stream(cfg: &SessionConfig) -> Result<NoiseStream, TrustError> {
    NoiseStream::new(NoiseConfig {
        sigma: cfg.agent_trust.noise.sigma,
        seed: mix_seed(cfg.seed ^ cfg.agent_trust.noise.seed, STREAM_AGENT_NOISE),
    })
}

pub fn compliance_seed(session_seed: u64, turn: u32) -> u64 {
    mix_seed(mix_seed(session_seed, STREAM_COMPLIANCE), turn as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Horizon,
    LadderExhausted,
    Disengaged,
}

/// Who picks the strategy class each turn.
#[derive(Debug, Clone)]
pub(crate) enum Pilot {
    Router,
    Static(StageLengths),
    Script(Vec<StrategyClass>),
}

impl Pilot {
    fn for_policy(cfg: &SessionConfig) -> Self {
        if cfg.policy.is_routed() {
            Pilot::Router
        } else {
            Pilot::Static(cfg.stages)
        }
    }
}

/// A decision awaiting the target's response.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub turn: u32,
    pub suggestion: Suggestion,
    pub trust_estimate: f64,
}

/// What the target did in response to the pending decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub engagement: EngagementFeatures,
    pub suspicion: SuspicionRisk,
    pub compliance: Option<ComplianceOutcome>,
    pub reply: Option<String>,
    pub respond_ms: f64,
}

#[derive(Debug, Clone)]
struct Pending {
    decision: Decision,
    snapshot: InteractionState,
    timings: StageTimings,
}

/// Agent side of one conversation.
pub struct Session {
    cfg: SessionConfig,
    library: Arc<TemplateLibrary>,
    hook: Option<Arc<dyn SuggestionGenerator>>,
    pilot: Pilot,
    state: InteractionState,
    estimate: TrustState,
    noise: NoiseStream,
    granted: Vec<Channel>,
    records: Vec<TraceRecord>,
    pending: Option<Pending>,
    exit_streak: u32,
    stopped: Option<StopReason>,
    turns_to_readiness: Option<u32>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("turn", &self.turn())
            .field("estimate", &self.estimate.value)
            .field("stopped", &self.stopped)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(cfg: SessionConfig, library: Arc<TemplateLibrary>) -> Result<Self, EngineError> {
        let pilot = Pilot::for_policy(&cfg);
        Self::with_pilot(cfg, library, pilot)
    }

    pub(crate) fn with_pilot(
        cfg: SessionConfig,
        library: Arc<TemplateLibrary>,
        pilot: Pilot,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let context: ContextSnapshot = cfg.persona.context.clone();
        if library.candidates(StrategyClass::Rapport, &context.venue).next().is_none() {
            return Err(EngineError::Config(format!("no templates for venue `{}`", context.venue)));
        }
        let state = InteractionState::new(cfg.agent_profile(), context);
        let noise = agent_noise_stream(&cfg)?;
        Ok(Session {
            cfg,
            library,
            hook: None,
            pilot,
            state,
            estimate: TrustState::new(0.0),
            noise,
            granted: Vec::new(),
            records: Vec::new(),
            pending: None,
            exit_streak: 0,
            stopped: None,
            turns_to_readiness: None,
        })
    }

    pub fn set_hook(&mut self, hook: Option<Arc<dyn SuggestionGenerator>>) {
        self.hook = hook;
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn state(&self) -> &InteractionState {
        &self.state
    }

    pub fn trust_estimate(&self) -> f64 {
        self.estimate.value
    }

    /// Index of the next turn to be decided.
    pub fn turn(&self) -> u32 {
        self.records.len() as u32
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn pending(&self) -> Option<&Decision> {
        self.pending.as_ref().map(|p| &p.decision)
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn granted(&self) -> &[Channel] {
        &self.granted
    }

    pub fn last_granted(&self) -> Option<Channel> {
        self.granted.last().copied()
    }

    /// Agent-side compliance probability for every ladder rung at the current estimate.
    pub fn compliance_preview(&self) -> Result<Vec<(RequestSpec, f64)>, TrustError> {
        self.cfg
            .router
            .ladder
            .iter()
            .map(|r| {
                let p = crate::trust::compliance_probability(
                    self.estimate.value,
                    r.difficulty,
                    &self.cfg.factors,
                    &self.cfg.agent_compliance,
                )?;
                Ok((RequestSpec { channel: r.channel, difficulty: r.difficulty }, p))
            })
            .collect()
    }

    fn next_rung(&self) -> Option<RequestSpec> {
        let idx = match self.last_granted() {
            None => 0,
            Some(c) => self.cfg.router.rung_index(c)? + 1,
        };
        self.cfg
            .router
            .ladder
            .get(idx)
            .map(|r| RequestSpec { channel: r.channel, difficulty: r.difficulty })
    }

    /// Perceive, route, and realize one move. Returns `None` when the ladder
    /// is exhausted (the session goal is complete).
    pub fn decide(&mut self) -> Result<Option<Decision>, EngineError> {
        if self.pending.is_some() {
            return Err(EngineError::TurnPending);
        }
        if let Some(r) = self.stopped {
            return Err(EngineError::Finished(r));
        }
        let turn = self.turn();
        let clock = self.cfg.clock;

        let (snapshot, perceive) = clock.time(|| {
            let mut s = self.state.clone();
            s.trust_estimate = self.estimate.value;
            s
        });
        if self.turns_to_readiness.is_none() && snapshot.trust_estimate >= self.cfg.router.theta_ready {
            self.turns_to_readiness = Some(turn);
        }

        let (routed, route) = clock.time(|| -> Result<_, EngineError> {
            let (class, exit_flag) = match &self.pilot {
                Pilot::Router => {
                    let d = route_strategy(&snapshot, &self.cfg.router);
                    (d.class, d.exit_flag)
                }
                Pilot::Static(stages) => (static_baseline_policy(turn, *stages), false),
                Pilot::Script(seq) => {
                    let class = seq.get(turn as usize).copied().unwrap_or(StrategyClass::Rapport);
                    (class, false)
                }
            };
            if class != StrategyClass::Commitment {
                return Ok((class, exit_flag, None));
            }
            let request = match &self.pilot {
                Pilot::Static(_) => self.next_rung().ok_or(RequestError::LadderExhausted),
                Pilot::Router | Pilot::Script(_) => {
                    select_request(&snapshot, &self.cfg.router, self.last_granted())
                }
            };
            match request {
                Ok(r) => Ok((class, exit_flag, Some(r))),
                Err(RequestError::LadderExhausted) => Ok((class, exit_flag, None)),
                Err(RequestError::NotReady { .. }) => Err(EngineError::UnsafeScript(turn)),
                Err(RequestError::UnknownChannel(c)) => {
                    Err(EngineError::Config(format!("granted channel {c} missing from ladder")))
                }
            }
        });
        let (class, exit_flag, request) = routed?;
        if class == StrategyClass::Commitment && request.is_none() {
            self.stopped = Some(StopReason::LadderExhausted);
            return Ok(None);
        }

        let (realized, realize) = clock.time(|| -> Result<Suggestion, EngineError> {
            let (base, template) = self
                .library
                .realize_for_turn(class, &snapshot, exit_flag, request, turn)?;
            match &self.hook {
                None => Ok(base),
                Some(h) => {
                    let exit = if exit_flag { self.library.exit_move(&snapshot.context.venue) } else { None };
                    let (s, _) = realize_with_hook(Some(h.as_ref()), class, &snapshot, template, exit, request)?;
                    Ok(s)
                }
            }
        });
        let suggestion = realized?;

        let decision = Decision {
            turn,
            suggestion,
            trust_estimate: snapshot.trust_estimate,
        };
        self.pending = Some(Pending {
            decision: decision.clone(),
            snapshot,
            timings: StageTimings { perceive, route, realize, respond: 0.0 },
        });
        Ok(Some(decision))
    }

    /// Folds the target's response into the estimate and closes the turn record.
    pub fn observe(&mut self, obs: Observation) -> Result<&TraceRecord, EngineError> {
        let pending = self.pending.take().ok_or(EngineError::NoPendingTurn)?;
        let s = &pending.decision.suggestion;
        let next = match update_trust(
            self.estimate,
            &obs.engagement,
            s.class,
            obs.suspicion,
            &self.cfg.agent_trust,
            &self.cfg.agent_gains,
            self.noise.next_draw(),
        ) {
            Ok(n) => n,
            Err(e) => {
                self.pending = Some(pending);
                return Err(e.into());
            }
        };
        self.estimate = next;
        if let (Some(req), Some(out)) = (s.request, obs.compliance) {
            if out.complied() && !self.granted.contains(&req.channel) {
                self.granted.push(req.channel);
            }
        }
        self.state.engagement = obs.engagement;
        self.state.suspicion = obs.suspicion;
        self.state.trust_estimate = next.value;
        self.state.push_dialogue(
            DialogueTurn { turn: pending.decision.turn, agent: s.text.clone(), reply: obs.reply },
            self.cfg.router.window,
        );

        let exit_flag = s.exit_flag;
        let mut timings = pending.timings;
        timings.respond = obs.respond_ms;
        self.records.push(TraceRecord {
            turn: pending.decision.turn,
            state: pending.snapshot,
            trust_estimate: pending.decision.trust_estimate,
            strategy_class: s.class,
            suggestion: s.text.clone(),
            template_id: s.template_id.clone(),
            facts: s.facts.clone(),
            exit_flag: s.exit_flag,
            request: s.request,
            engagement: obs.engagement,
            suspicion: obs.suspicion,
            compliance: obs.compliance.map(|c| c.complied()),
            timings_ms: timings,
        });
        if exit_flag && obs.suspicion.value() >= 1.0 {
            self.exit_streak += 1;
        } else {
            self.exit_streak = 0;
        }
        if self.exit_streak >= 2 {
            self.stopped = Some(StopReason::Disengaged);
        } else if self.granted.len() == self.cfg.router.ladder.len() {
            self.stopped = Some(StopReason::LadderExhausted);
        } else if self.turn() >= self.cfg.horizon {
            self.stopped = Some(StopReason::Horizon);
        }

        Ok(self.records.last().expect("just pushed"))
    }

    pub fn turns_to_readiness(&self) -> Option<u32> {
        self.turns_to_readiness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub archetype: ArchetypeName,
    pub policy: Policy,
    pub seed: u64,
    pub granted: Vec<Channel>,
    pub turns: u32,
    pub turns_to_readiness: Option<u32>,
    pub final_suspicion: f64,
    pub final_estimate: f64,
    pub final_internal_trust: f64,
    pub stop: StopReason,
}

impl SessionResult {
    /// Fraction of ladder rungs granted.
    pub fn compliance_rate(&self, rungs: usize) -> f64 {
        self.granted.len() as f64 / rungs as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub result: SessionResult,
    pub trace: Vec<TraceRecord>,
}

/// Synthetic target bound to a session seed.
pub struct SimulatedTarget {
    pub persona: Persona,
    pub state: TargetState,
    volatility: VolatilityStream,
    seed: u64,
}

impl SimulatedTarget {
    pub fn new(persona: Persona, seed: u64) -> Self {
        let volatility = VolatilityStream::new(
            persona.archetype.volatility_sigma,
            mix_seed(seed, STREAM_VOLATILITY),
        );
        SimulatedTarget { persona, state: TargetState::initial(), volatility, seed }
    }

    /// Respond to a decision: answer any request from pre-turn trust, then update.
    pub fn react(
        &mut self,
        decision: &Decision,
        z: &ObservableFactors,
    ) -> Result<(EngagementFeatures, SuspicionRisk, Option<ComplianceOutcome>), TrustError> {
        let s = &decision.suggestion;
        let mut compliance = None;
        let mut before = self.state.clone();
        if let Some(req) = &s.request {
            let (out, _, next) = decide_compliance(
                &before,
                &self.persona,
                req,
                z,
                compliance_seed(self.seed, decision.turn),
            )?;
            compliance = Some(out);
            before = next;
        }
        let r = respond(&before, &self.persona, s, self.volatility.next_draws())?;
        self.state = r.next;
        Ok((r.features, self.state.suspicion, compliance))
    }
}

/// Runs one full session against the configured synthetic target.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutcome, EngineError> {
    run_session_with(cfg, Arc::new(TemplateLibrary::builtin()))
}

pub fn run_session_with(cfg: &SessionConfig, library: Arc<TemplateLibrary>) -> Result<SessionOutcome, EngineError> {
    let mut session = Session::new(cfg.clone(), library)?;
    let mut target = SimulatedTarget::new(cfg.persona.clone(), cfg.seed);
    while session.stopped().is_none() {
        let Some(decision) = session.decide()? else { break };
        let (reaction, respond_ms) = cfg.clock.time(|| target.react(&decision, &cfg.factors));
        let (engagement, suspicion, compliance) = reaction?;
        session.observe(Observation { engagement, suspicion, compliance, reply: None, respond_ms })?;
    }
    let result = SessionResult {
        archetype: cfg.persona.archetype.name,
        policy: cfg.policy,
        seed: cfg.seed,
        granted: session.granted().to_vec(),
        turns: session.turn(),
        turns_to_readiness: session.turns_to_readiness(),
        final_suspicion: target.state.suspicion.value(),
        final_estimate: session.trust_estimate(),
        final_internal_trust: target.state.internal_trust.value,
        stop: session.stopped().unwrap_or(StopReason::Horizon),
    };
    Ok(SessionOutcome { result, trace: session.records.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::trace::to_jsonl_string;

    fn frozen(archetype: ArchetypeName, policy: Policy, seed: u64) -> SessionConfig {
        SessionConfig { clock: Clock::Frozen, ..SessionConfig::new(archetype, policy, seed) }
    }

    #[test]
    fn single_turn_is_rapport() {
        let cfg = SessionConfig { horizon: 1, ..frozen(ArchetypeName::Trusting, Policy::Adaptive, 0) };
        let out = run_session(&cfg).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].strategy_class, StrategyClass::Rapport);
        assert_eq!(out.result.stop, StopReason::Horizon);
    }

    #[test]
    fn reruns_are_byte_identical() {
        for a in ArchetypeName::ALL {
            let cfg = frozen(a, Policy::Adaptive, 11);
            let x = to_jsonl_string(&run_session(&cfg).unwrap().trace);
            let y = to_jsonl_string(&run_session(&cfg).unwrap().trace);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn invalid_config_rejected_before_turn_zero() {
        let cfg = SessionConfig { horizon: 0, ..frozen(ArchetypeName::Trusting, Policy::Adaptive, 0) };
        assert!(matches!(run_session(&cfg), Err(EngineError::Config(_))));
        let mut cfg = frozen(ArchetypeName::Trusting, Policy::Adaptive, 0);
        cfg.router.s_high = 2.0;
        assert!(run_session(&cfg).is_err());
    }

    #[test]
    fn every_trace_passes_audit() {
        let lib = TemplateLibrary::builtin();
        for a in ArchetypeName::ALL {
            for p in Policy::ALL {
                for seed in 0..20 {
                    let cfg = frozen(a, p, seed);
                    let out = run_session(&cfg).unwrap();
                    audit_trace(&out.trace, &cfg.router, &lib, p.is_routed())
                        .unwrap_or_else(|e| panic!("{a} {p} {seed}: {e}"));
                    for (i, r) in out.trace.iter().enumerate() {
                        assert_eq!(r.turn as usize, i);
                    }
                }
            }
        }
    }

    #[test]
    fn replay_reproduces_estimates() {
        let mut cfg = frozen(ArchetypeName::Volatile, Policy::Adaptive, 3);
        cfg.agent_trust.noise.sigma = 0.05;
        let out = run_session(&cfg).unwrap();
        let mut noise = agent_noise_stream(&cfg).unwrap();
        let replayed = replay_estimates(&out.trace, &cfg.agent_trust, &cfg.agent_gains, &mut noise).unwrap();
        for (r, v) in out.trace.iter().zip(&replayed) {
            assert_eq!(r.trust_estimate, *v);
        }
        assert_eq!(*replayed.last().unwrap(), out.result.final_estimate);
    }

    #[test]
    fn observe_without_decision_is_an_error() {
        let cfg = frozen(ArchetypeName::Trusting, Policy::Adaptive, 0);
        let mut s = Session::new(cfg, Arc::new(TemplateLibrary::builtin())).unwrap();
        let obs = Observation {
            engagement: EngagementFeatures::ZERO,
            suspicion: SuspicionRisk::ZERO,
            compliance: None,
            reply: None,
            respond_ms: 0.0,
        };
        assert!(matches!(s.observe(obs), Err(EngineError::NoPendingTurn)));
        s.decide().unwrap();
        assert!(matches!(s.decide(), Err(EngineError::TurnPending)));
    }

    #[test]
    fn reference_session_is_pinned() {
        let out = run_session(&frozen(ArchetypeName::Trusting, Policy::Adaptive, 7)).unwrap();
        let r = &out.result;
        let got = (r.granted.clone(), r.turns, r.turns_to_readiness, r.stop);
        assert_eq!(got, pinned_reference(), "{r:?}");
    }

    fn pinned_reference() -> (Vec<Channel>, u32, Option<u32>, StopReason) {
        (vec![Channel::PhotoLink, Channel::SocialApp, Channel::Sms, Channel::PhoneCall], 6, Some(2), StopReason::LadderExhausted)
    }
}
