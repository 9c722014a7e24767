//! Trust-state routing simulator core.
//!
//! - [`trust`]: leaky-integrator trust dynamics and logistic compliance.
//! - [`router`]: strategy routing, request ladder, suggestion realization.
//! - [`target`]: ground-truth synthetic targets and the lexical reply scorer.
//! - [`engine`]: turn loop, routing traces, brute-force oracle, batch runner.
//! - [`align`]: LoRA algebra, symmetric InfoNCE and its gradient, adapter training.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod align;
pub mod engine;
pub mod router;
pub mod target;
pub mod trust;

/// The router's action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyClass {
    Rapport,
    Credibility,
    Commitment,
}

impl StrategyClass {
    pub const ALL: [StrategyClass; 3] = [
        StrategyClass::Rapport,
        StrategyClass::Credibility,
        StrategyClass::Commitment,
    ];
}

impl fmt::Display for StrategyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StrategyClass::Rapport => "Rapport",
            StrategyClass::Credibility => "Credibility",
            StrategyClass::Commitment => "Commitment",
        };
        f.write_str(s)
    }
}

/// Request channels, in increasing order of the trust they typically require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    PhotoLink,
    SocialApp,
    #[serde(rename = "SMS")]
    Sms,
    PhoneCall,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::PhotoLink,
        Channel::SocialApp,
        Channel::Sms,
        Channel::PhoneCall,
    ];

    /// Phrase substituted for the `{channel}` placeholder.
    pub fn phrase(self) -> &'static str {
        match self {
            Channel::PhotoLink => "a photo link",
            Channel::SocialApp => "your social app handle",
            Channel::Sms => "a quick text",
            Channel::PhoneCall => "a short call",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::PhotoLink => "PhotoLink",
            Channel::SocialApp => "SocialApp",
            Channel::Sms => "SMS",
            Channel::PhoneCall => "PhoneCall",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseNameError {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for Channel {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseNameError {
                kind: "channel",
                value: s.to_string(),
            })
    }
}

impl FromStr for StrategyClass {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyClass::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseNameError {
                kind: "strategy class",
                value: s.to_string(),
            })
    }
}

pub use router::{InteractionState, RequestSpec, RouterConfig, Suggestion};
pub use target::{Archetype, ArchetypeName, ProfileSummary};
pub use trust::{
    ComplianceOutcome, ComplianceParams, EngagementFeatures, NoiseConfig, ObservableFactors,
    StrategyGains, SuspicionRisk, TrustParams, TrustState,
};
