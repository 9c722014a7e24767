//! Latent trust-state dynamics and the logistic compliance model.
//!
//! Trust evolves as a leaky integrator over per-turn engagement evidence:
//!
//! ```text
//! T[t+1] = (1 - lambda) * T[t] + lambda * w[a]·x[t] - beta * r[t] + eps[t]
//! ```
//!
//! and a request of difficulty `d` succeeds with probability
//! `sigmoid(alpha_c * T - gamma * d + eta·z)`.
//!
//! Everything here is a pure function of its inputs except [`NoiseStream`],
//! which owns a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::StrategyClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("lambda must lie in (0, 1), got {0}")]
    Lambda(f64),
    #[error("beta must be finite and >= 0, got {0}")]
    Beta(f64),
    #[error("noise sigma must be finite and >= 0, got {0}")]
    Sigma(f64),
    #[error("gamma must be finite and >= 0, got {0}")]
    Gamma(f64),
    #[error("eta has length {eta}, observable factors have length {factors}")]
    FactorLength { eta: usize, factors: usize },
    #[error("request difficulty must be >= 0, got {0}")]
    NegativeDifficulty(f64),
    #[error("{what} must lie in [0, 1], got {value}")]
    OutOfUnitRange { what: &'static str, value: f64 },
    #[error("trust update produced a non-finite value ({0}); check parameters")]
    NonFinite(f64),
}

fn check_unit(what: &'static str, value: f64) -> Result<f64, TrustError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(TrustError::OutOfUnitRange { what, value })
    }
}

/// Gaussian noise configuration for the trust update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sigma: 0.0, seed: 0 }
    }
}

/// Seeded stream of noise draws. With `sigma == 0` every draw is exactly zero.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl NoiseStream {
    pub fn new(cfg: NoiseConfig) -> Result<Self, TrustError> {
        if !(cfg.sigma.is_finite() && cfg.sigma >= 0.0) {
            return Err(TrustError::Sigma(cfg.sigma));
        }
        let normal = if cfg.sigma > 0.0 {
            Some(Normal::new(0.0, cfg.sigma).map_err(|_| TrustError::Sigma(cfg.sigma))?)
        } else {
            None
        };
        Ok(NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            normal,
        })
    }

    pub fn next_draw(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// Memory coefficient, suspicion penalty, and noise for one trust integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustParams {
    pub lambda: f64,
    pub beta: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl TrustParams {
    pub fn new(lambda: f64, beta: f64, noise: NoiseConfig) -> Result<Self, TrustError> {
        let p = TrustParams { lambda, beta, noise };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TrustError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(TrustError::Lambda(self.lambda));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(TrustError::Beta(self.beta));
        }
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            return Err(TrustError::Sigma(self.noise.sigma));
        }
        Ok(())
    }
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            lambda: 0.5,
            beta: 0.5,
            noise: NoiseConfig::default(),
        }
    }
}

/// Turn index plus the current trust level. Trust is deliberately unclamped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrustState {
    pub t: u32,
    pub value: f64,
}

impl TrustState {
    pub fn new(value: f64) -> Self {
        TrustState { t: 0, value }
    }
}

/// Per-turn response features, ordered
/// (responsiveness, agreement, affect, enthusiasm) everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EngagementFeatures {
    pub responsiveness: f64,
    pub agreement: f64,
    pub affect: f64,
    pub enthusiasm: f64,
}

impl EngagementFeatures {
    pub const ZERO: EngagementFeatures = EngagementFeatures {
        responsiveness: 0.0,
        agreement: 0.0,
        affect: 0.0,
        enthusiasm: 0.0,
    };

    pub fn new(
        responsiveness: f64,
        agreement: f64,
        affect: f64,
        enthusiasm: f64,
    ) -> Result<Self, TrustError> {
        Ok(EngagementFeatures {
            responsiveness: check_unit("responsiveness", responsiveness)?,
            agreement: check_unit("agreement", agreement)?,
            affect: check_unit("affect", affect)?,
            enthusiasm: check_unit("enthusiasm", enthusiasm)?,
        })
    }

    /// Builds features by clamping each component into [0, 1].
    pub fn clamped(v: [f64; 4]) -> Self {
        let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        EngagementFeatures {
            responsiveness: c(v[0]),
            agreement: c(v[1]),
            affect: c(v[2]),
            enthusiasm: c(v[3]),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.responsiveness, self.agreement, self.affect, self.enthusiasm]
    }

    pub fn validate(&self) -> Result<(), TrustError> {
        Self::new(self.responsiveness, self.agreement, self.affect, self.enthusiasm).map(|_| ())
    }

    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 4.0
    }
}

/// One linear gain vector per strategy class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyGains {
    pub rapport: [f64; 4],
    pub credibility: [f64; 4],
    pub commitment: [f64; 4],
}

impl StrategyGains {
    pub fn uniform(w: [f64; 4]) -> Self {
        StrategyGains {
            rapport: w,
            credibility: w,
            commitment: w,
        }
    }

    pub fn weights(&self, class: StrategyClass) -> &[f64; 4] {
        match class {
            StrategyClass::Rapport => &self.rapport,
            StrategyClass::Credibility => &self.credibility,
            StrategyClass::Commitment => &self.commitment,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.rapport, self.credibility, self.commitment]
            .iter()
            .flatten()
            .all(|w| w.is_finite())
    }
}

impl Default for StrategyGains {
    fn default() -> Self {
        StrategyGains {
            rapport: [0.3, 0.3, 0.3, 0.3],
            credibility: [0.25, 0.4, 0.25, 0.3],
            commitment: [0.3, 0.35, 0.2, 0.25],
        }
    }
}

/// Suspicion risk, always in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SuspicionRisk(f64);

impl SuspicionRisk {
    pub const ZERO: SuspicionRisk = SuspicionRisk(0.0);

    pub fn new(value: f64) -> Result<Self, TrustError> {
        check_unit("suspicion", value).map(SuspicionRisk)
    }

    /// Clamps into [0, 1]; NaN maps to 0.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            SuspicionRisk(0.0)
        } else {
            SuspicionRisk(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Additional observable request factors (time-pressure cue, authority-framing cue, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservableFactors(Vec<f64>);

impl ObservableFactors {
    pub fn new(values: Vec<f64>) -> Result<Self, TrustError> {
        for &v in &values {
            check_unit("observable factor", v)?;
        }
        Ok(ObservableFactors(values))
    }

    pub fn zeros(len: usize) -> Self {
        ObservableFactors(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for ObservableFactors {
    fn default() -> Self {
        ObservableFactors::zeros(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceParams {
    pub alpha_c: f64,
    pub gamma: f64,
    pub eta: Vec<f64>,
}

impl ComplianceParams {
    pub fn validate(&self) -> Result<(), TrustError> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(TrustError::Gamma(self.gamma));
        }
        Ok(())
    }
}

impl Default for ComplianceParams {
    fn default() -> Self {
        ComplianceParams {
            alpha_c: 4.0,
            gamma: 2.0,
            eta: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplianceOutcome(pub bool);

impl ComplianceOutcome {
    pub fn complied(self) -> bool {
        self.0
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Strategy-specific linear gain `w[a]·x`.
pub fn trust_gain(x: &EngagementFeatures, class: StrategyClass, gains: &StrategyGains) -> f64 {
    gains
        .weights(class)
        .iter()
        .zip(x.as_array())
        .map(|(w, xi)| w * xi)
        .sum()
}

/// One leaky-integrator step. `noise_draw` comes from a [`NoiseStream`].
pub fn update_trust(
    state: TrustState,
    x: &EngagementFeatures,
    class: StrategyClass,
    risk: SuspicionRisk,
    params: &TrustParams,
    gains: &StrategyGains,
    noise_draw: f64,
) -> Result<TrustState, TrustError> {
    let g = trust_gain(x, class, gains);
    let value = (1.0 - params.lambda) * state.value + params.lambda * g - params.beta * risk.value()
        + noise_draw;
    if !value.is_finite() {
        return Err(TrustError::NonFinite(value));
    }
    Ok(TrustState {
        t: state.t + 1,
        value,
    })
}

/// Logit `alpha_c*T - gamma*d + eta·z` shared by sampling and previews.
pub fn compliance_logit(
    trust: f64,
    difficulty: f64,
    z: &ObservableFactors,
    p: &ComplianceParams,
) -> Result<f64, TrustError> {
    if difficulty < 0.0 || difficulty.is_nan() {
        return Err(TrustError::NegativeDifficulty(difficulty));
    }
    p.validate()?;
    if p.eta.len() != z.as_slice().len() {
        return Err(TrustError::FactorLength {
            eta: p.eta.len(),
            factors: z.as_slice().len(),
        });
    }
    let framing: f64 = p.eta.iter().zip(z.as_slice()).map(|(e, v)| e * v).sum();
    Ok(p.alpha_c * trust - p.gamma * difficulty + framing)
}

/// Probability that a request of difficulty `difficulty` is granted at trust `trust`.
///
/// Lies in (0, 1) until the logit exceeds roughly ±37, where f64 saturates.
pub fn compliance_probability(
    trust: f64,
    difficulty: f64,
    z: &ObservableFactors,
    p: &ComplianceParams,
) -> Result<f64, TrustError> {
    compliance_logit(trust, difficulty, z, p).map(sigmoid)
}

/// Seeded Bernoulli draw.
pub fn sample_compliance(prob: f64, seed: u64) -> ComplianceOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.random();
    ComplianceOutcome(u < prob)
}
