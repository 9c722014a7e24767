use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustroute_core::engine::{Clock, Policy, SessionConfig};
use trustroute_core::router::RouterConfig;
use trustroute_core::target::{ArchetypeName, Persona};
use trustroute_core::trust::{NoiseConfig, TrustParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown arm `{0}` (expected one of: Adaptive, StaticStage, NoAlignment, NoAgent)")]
    UnknownArm(String),
    #[error("unknown archetype `{0}` (expected one of: Trusting, Skeptical, Volatile)")]
    UnknownArchetype(String),
    #[error("persona file {path}: {message}")]
    Persona { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_lambda() -> f64 {
    TrustParams::default().lambda
}

fn default_beta() -> f64 {
    TrustParams::default().beta
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection { lambda: default_lambda(), beta: default_beta(), noise_sigma: 0.0 }
    }
}

/// Raw file layout; names are validated when converted to [`ExperimentConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_name")]
    name: String,
    arms: Vec<String>,
    archetypes: Vec<String>,
    sessions: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_horizon")]
    horizon: u32,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    #[serde(default)]
    frozen_clock: bool,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    agent: AgentSection,
    #[serde(default)]
    router: RouterConfig,
    /// Archetype name -> persona file, overriding the built-in fixture.
    #[serde(default)]
    personas: std::collections::BTreeMap<String, PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_horizon() -> u32 {
    12
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub arms: Vec<Policy>,
    pub archetypes: Vec<ArchetypeName>,
    pub personas: Vec<Persona>,
    pub sessions: u64,
    /// Sessions use seeds `seed .. seed + sessions`.
    pub seed: u64,
    pub horizon: u32,
    pub parallelism: usize,
    pub clock: Clock,
    pub output_dir: Option<PathBuf>,
    pub agent: AgentSection,
    pub router: RouterConfig,
}

impl ExperimentConfig {
    pub fn from_toml(src: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src)?;
        let arms = raw
            .arms
            .iter()
            .map(|a| Policy::from_str(a).map_err(|_| ConfigError::UnknownArm(a.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let archetypes = raw
            .archetypes
            .iter()
            .map(|a| ArchetypeName::from_str(a).map_err(|_| ConfigError::UnknownArchetype(a.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        for key in raw.personas.keys() {
            ArchetypeName::from_str(key).map_err(|_| ConfigError::UnknownArchetype(key.clone()))?;
        }
        let personas = archetypes
            .iter()
            .map(|a| match raw.personas.iter().find(|(k, _)| k.as_str() == a.to_string()) {
                None => Ok(Persona::builtin(*a)),
                Some((_, rel)) => {
                    let path = base_dir.join(rel);
                    Persona::load(&path).map_err(|e| ConfigError::Persona { path, message: e.to_string() })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = ExperimentConfig {
            name: raw.name,
            arms,
            archetypes,
            personas,
            sessions: raw.sessions,
            seed: raw.seed,
            horizon: raw.horizon,
            parallelism: raw.parallelism,
            clock: if raw.frozen_clock { Clock::Frozen } else { Clock::Monotonic },
            output_dir: raw.output_dir.map(|p| base_dir.join(p)),
            agent: raw.agent,
            router: raw.router,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&src, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.arms.is_empty() || self.archetypes.is_empty() {
            return Err(ConfigError::Invalid("arms and archetypes must be non-empty".into()));
        }
        if self.sessions == 0 {
            return Err(ConfigError::Invalid("sessions must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be >= 1".into()));
        }
        // surfaces router/agent/horizon problems before any session runs
        self.session(self.arms[0], 0, self.seed)?;
        Ok(())
    }

    /// Config for one session of `arm` against the `archetype_idx`-th archetype.
    pub fn session(&self, arm: Policy, archetype_idx: usize, seed: u64) -> Result<SessionConfig, ConfigError> {
        let persona = self.personas[archetype_idx].clone();
        let agent_trust = TrustParams::new(
            self.agent.lambda,
            self.agent.beta,
            NoiseConfig { sigma: self.agent.noise_sigma, seed: 0 },
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let cfg = SessionConfig {
            persona,
            router: self.router.clone(),
            agent_trust,
            horizon: self.horizon,
            clock: self.clock,
            ..SessionConfig::new(self.archetypes[archetype_idx], arm, seed)
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.sessions).map(move |i| self.seed.wrapping_add(i))
    }
}
