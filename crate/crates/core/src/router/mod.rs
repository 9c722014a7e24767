//! Strategy routing: maps the interaction state to a strategy class, gates
//! requests behind the readiness threshold, and realizes suggestions from
//! the template library.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::target::ProfileSummary;
use crate::trust::{EngagementFeatures, SuspicionRisk};
use crate::{Channel, StrategyClass};

mod hook;
mod templates;

pub use hook::{realize_with_hook, HookOutcome, PromptBundle, SuggestionGenerator};
pub use templates::{
    count_sentences, realize_suggestion, validate_suggestion, ExitMove, StrategyTemplate,
    TemplateError, TemplateLibrary, PLACEHOLDERS,
};

pub const DEFAULT_WINDOW: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    /// Venue tag, e.g. `coffee_shop` or `networking_event`.
    pub venue: String,
    #[serde(default)]
    pub cues: Vec<String>,
}

impl ContextSnapshot {
    pub fn venue_phrase(&self) -> String {
        self.venue.replace('_', " ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub turn: u32,
    pub agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
}

/// Compact per-turn router state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionState {
    pub profile: ProfileSummary,
    pub context: ContextSnapshot,
    pub dialogue: VecDeque<DialogueTurn>,
    pub engagement: EngagementFeatures,
    pub suspicion: SuspicionRisk,
    pub trust_estimate: f64,
}

impl InteractionState {
    pub fn new(profile: ProfileSummary, context: ContextSnapshot) -> Self {
        InteractionState {
            profile,
            context,
            dialogue: VecDeque::new(),
            engagement: EngagementFeatures::ZERO,
            suspicion: SuspicionRisk::ZERO,
            trust_estimate: 0.0,
        }
    }

    /// Appends a turn, dropping the oldest entries beyond `window`.
    pub fn push_dialogue(&mut self, entry: DialogueTurn, window: usize) {
        self.dialogue.push_back(entry);
        while self.dialogue.len() > window {
            self.dialogue.pop_front();
        }
    }

    /// Receptivity proxy used by the router.
    pub fn receptivity(&self) -> f64 {
        self.engagement.mean()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub channel: Channel,
    pub difficulty: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterConfigError {
    #[error("s_high must lie in [0, 1], got {0}")]
    SuspicionThreshold(f64),
    #[error("threshold {name} is not finite")]
    NonFinite { name: &'static str },
    #[error("difficulty ladder is empty")]
    EmptyLadder,
    #[error("ladder difficulties must be strictly increasing within [0, 1] (rung {0})")]
    LadderOrder(usize),
    #[error("channel {0} appears twice in the ladder")]
    DuplicateChannel(Channel),
    #[error("dialogue window must be at least 1")]
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub theta_ready: f64,
    pub s_high: f64,
    pub e_min: f64,
    pub ladder: Vec<LadderRung>,
    pub window: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            theta_ready: 0.6,
            s_high: 0.7,
            e_min: 0.4,
            ladder: vec![
                LadderRung { channel: Channel::PhotoLink, difficulty: 0.25 },
                LadderRung { channel: Channel::SocialApp, difficulty: 0.5 },
                LadderRung { channel: Channel::Sms, difficulty: 0.75 },
                LadderRung { channel: Channel::PhoneCall, difficulty: 1.0 },
            ],
            window: DEFAULT_WINDOW,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RouterConfigError> {
        for (name, v) in [
            ("theta_ready", self.theta_ready),
            ("s_high", self.s_high),
            ("e_min", self.e_min),
        ] {
            if !v.is_finite() {
                return Err(RouterConfigError::NonFinite { name });
            }
        }
        if !(0.0..=1.0).contains(&self.s_high) {
            return Err(RouterConfigError::SuspicionThreshold(self.s_high));
        }
        if self.window == 0 {
            return Err(RouterConfigError::Window);
        }
        if self.ladder.is_empty() {
            return Err(RouterConfigError::EmptyLadder);
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, rung) in self.ladder.iter().enumerate() {
            if !(0.0..=1.0).contains(&rung.difficulty) || rung.difficulty <= prev {
                return Err(RouterConfigError::LadderOrder(i));
            }
            if self.ladder[..i].iter().any(|r| r.channel == rung.channel) {
                return Err(RouterConfigError::DuplicateChannel(rung.channel));
            }
            prev = rung.difficulty;
        }
        Ok(())
    }

    pub fn rung_index(&self, channel: Channel) -> Option<usize> {
        self.ladder.iter().position(|r| r.channel == channel)
    }
}

/// A concrete ask attached to a Commitment suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub channel: Channel,
    pub difficulty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub class: StrategyClass,
    pub exit_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<RequestSpec>,
    pub template_id: String,
    pub topic: String,
    /// Personal facts bound into the text; each comes from the profile.
    #[serde(default)]
    pub facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_move: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub class: StrategyClass,
    pub exit_flag: bool,
}

/// First-match routing rules: de-escalate, commit, build credibility, build rapport.
pub fn route_strategy(s: &InteractionState, cfg: &RouterConfig) -> RoutingDecision {
    if s.suspicion.value() >= cfg.s_high {
        RoutingDecision { class: StrategyClass::Rapport, exit_flag: true }
    } else if s.trust_estimate >= cfg.theta_ready {
        RoutingDecision { class: StrategyClass::Commitment, exit_flag: false }
    } else if s.receptivity() >= cfg.e_min {
        RoutingDecision { class: StrategyClass::Credibility, exit_flag: false }
    } else {
        RoutingDecision { class: StrategyClass::Rapport, exit_flag: false }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequestError {
    #[error("trust estimate {trust} is below the readiness threshold {threshold}")]
    NotReady { trust: f64, threshold: f64 },
    #[error("every ladder rung has been granted")]
    LadderExhausted,
    #[error("channel {0} is not on the configured ladder")]
    UnknownChannel(Channel),
}

/// Next ladder rung above `last_granted`, never skipping one.
pub fn select_request(
    s: &InteractionState,
    cfg: &RouterConfig,
    last_granted: Option<Channel>,
) -> Result<RequestSpec, RequestError> {
    if s.trust_estimate < cfg.theta_ready {
        return Err(RequestError::NotReady {
            trust: s.trust_estimate,
            threshold: cfg.theta_ready,
        });
    }
    let next = match last_granted {
        None => 0,
        Some(c) => cfg.rung_index(c).ok_or(RequestError::UnknownChannel(c))? + 1,
    };
    cfg.ladder
        .get(next)
        .map(|r| RequestSpec { channel: r.channel, difficulty: r.difficulty })
        .ok_or(RequestError::LadderExhausted)
}

/// Turns spent in each scripted stage before the script moves to Commitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLengths {
    pub rapport: u32,
    pub credibility: u32,
}

impl Default for StageLengths {
    fn default() -> Self {
        StageLengths { rapport: 2, credibility: 2 }
    }
}

/// Fixed-stage script that ignores engagement and suspicion.
pub fn static_baseline_policy(turn: u32, stages: StageLengths) -> StrategyClass {
    if turn < stages.rapport {
        StrategyClass::Rapport
    } else if turn < stages.rapport + stages.credibility {
        StrategyClass::Credibility
    } else {
        StrategyClass::Commitment
    }
}
