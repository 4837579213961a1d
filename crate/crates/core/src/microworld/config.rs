//! Simulator configuration: the documented key set of the world table files.

use crate::dialogue::Domain;
use crate::vocab::{AgentAction, UserResponse};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub const PERSUASION_V1: &str = include_str!("../../config/persuasion_v1.toml");
pub const COUNSELING_V1: &str = include_str!("../../config/counseling_v1.toml");

/// Largest magnitude allowed for any delta entry.
pub const MAX_DELTA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaName {
    Philanthropic,
    Caring,
    Unfriendly,
    Skeptical,
}

impl PersonaName {
    pub const ALL: [PersonaName; 4] =
        [PersonaName::Philanthropic, PersonaName::Caring, PersonaName::Unfriendly, PersonaName::Skeptical];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PersonaName::Philanthropic => "philanthropic",
            PersonaName::Caring => "caring",
            PersonaName::Unfriendly => "unfriendly",
            PersonaName::Skeptical => "skeptical",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == s)
    }
}

impl fmt::Display for PersonaName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hidden-state bucket selecting a response-table row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    ColdGuarded,
    ColdOpen,
    WarmGuarded,
    WarmOpen,
    ObjectingGuarded,
    ObjectingOpen,
}

impl Bucket {
    pub const COUNT: usize = 6;
    pub const ALL: [Bucket; 6] = [
        Bucket::ColdGuarded,
        Bucket::ColdOpen,
        Bucket::WarmGuarded,
        Bucket::WarmOpen,
        Bucket::ObjectingGuarded,
        Bucket::ObjectingOpen,
    ];

    pub fn classify(warm: bool, open: bool, objecting: bool) -> Self {
        match (objecting, warm, open) {
            (true, _, false) => Bucket::ObjectingGuarded,
            (true, _, true) => Bucket::ObjectingOpen,
            (false, false, false) => Bucket::ColdGuarded,
            (false, false, true) => Bucket::ColdOpen,
            (false, true, false) => Bucket::WarmGuarded,
            (false, true, true) => Bucket::WarmOpen,
        }
    }
}

/// One bucket's response rows: a default row plus per-action overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRows {
    pub default: [f64; UserResponse::COUNT],
    #[serde(flatten)]
    pub overrides: BTreeMap<AgentAction, [f64; UserResponse::COUNT]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    /// Baseline rapport in [0, 1].
    pub rapport: f64,
    /// Baseline willingness in [0, 1]; unused for counseling, where the
    /// episode's initial intensity is drawn instead.
    #[serde(default)]
    pub level: f64,
    pub delta: BTreeMap<AgentAction, [f64; 2]>,
    #[serde(default)]
    pub pending_delta: BTreeMap<AgentAction, [f64; 2]>,
    #[serde(default)]
    pub uninformed_delta: BTreeMap<AgentAction, [f64; 2]>,
    pub responses: BTreeMap<Bucket, ResponseRows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub version: u32,
    pub domain: Domain,
    pub turn_limit: usize,
    pub noise_sigma: f64,
    pub grid_step: f64,
    pub persona_mix: BTreeMap<PersonaName, f64>,
    /// Candidate initial intensities, drawn uniformly (counseling only).
    #[serde(default)]
    pub initial_intensity: Vec<u8>,
    #[serde(default)]
    pub seed: u64,
    pub personas: BTreeMap<PersonaName, PersonaSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("persona weights must be non-negative and sum to 1 (got sum {0})")]
    InvalidWeights(f64),
    #[error("persona `{0}` is missing from the table")]
    MissingPersona(PersonaName),
    #[error("persona `{persona}` is missing a {table} entry for `{action}`")]
    MissingDelta { persona: PersonaName, table: &'static str, action: AgentAction },
    #[error("persona `{persona}` delta for `{action}` exceeds {MAX_DELTA} in magnitude")]
    DeltaTooLarge { persona: PersonaName, action: AgentAction },
    #[error("persona `{persona}` has no response rows for bucket {bucket:?}")]
    MissingBucket { persona: PersonaName, bucket: Bucket },
    #[error("response row for persona `{persona}`, bucket {bucket:?}, action {action} sums to {sum}")]
    RowSum { persona: PersonaName, bucket: Bucket, action: String, sum: f64 },
    #[error("turn limit {got} exceeds the {domain} cap of {cap}")]
    TurnLimit { domain: Domain, got: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimConfig {
    pub fn persuasion() -> Self {
        toml::from_str(PERSUASION_V1).expect("bundled persuasion table parses")
    }

    pub fn counseling() -> Self {
        toml::from_str(COUNSELING_V1).expect("bundled counseling table parses")
    }

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Persuasion => Self::persuasion(),
            Domain::Counseling => Self::counseling(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn with_mix(mut self, weights: [f64; 4]) -> Self {
        self.persona_mix = PersonaName::ALL.iter().copied().zip(weights).collect();
        self
    }

    /// Uniform persona mix.
    pub fn uniform_mix(self) -> Self {
        self.with_mix([0.25; 4])
    }

    /// The robustness preset: half of all users unfriendly, a quarter skeptical.
    pub fn hard_mix(self) -> Self {
        self.with_mix([0.125, 0.125, 0.5, 0.25])
    }

    pub fn mix_weights(&self) -> [f64; 4] {
        PersonaName::ALL.map(|p| self.persona_mix.get(&p).copied().unwrap_or(0.0))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = self.mix_weights();
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::InvalidWeights(sum));
        }
        let cap = self.domain.turn_limit();
        if self.turn_limit == 0 || self.turn_limit > cap {
            return Err(ConfigError::TurnLimit { domain: self.domain, got: self.turn_limit, cap });
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ConfigError::Invalid(format!("noise_sigma = {}", self.noise_sigma)));
        }
        if (self.grid_step - 0.1).abs() > 1e-12 {
            return Err(ConfigError::Invalid(format!("grid_step must be 0.1 (got {})", self.grid_step)));
        }
        if self.domain == Domain::Counseling
            && (self.initial_intensity.is_empty() || self.initial_intensity.iter().any(|v| !(1..=5).contains(v)))
        {
            return Err(ConfigError::Invalid("counseling needs initial_intensity values in 1..=5".into()));
        }
        for p in PersonaName::ALL {
            let spec = self.personas.get(&p).ok_or(ConfigError::MissingPersona(p))?;
            if !(0.0..=1.0).contains(&spec.rapport) || !(0.0..=1.0).contains(&spec.level) {
                return Err(ConfigError::Invalid(format!("persona `{p}` baseline outside [0, 1]")));
            }
            for a in AgentAction::ALL {
                if !spec.delta.contains_key(&a) {
                    return Err(ConfigError::MissingDelta { persona: p, table: "delta", action: a });
                }
            }
            for (a, d) in spec.delta.iter().chain(&spec.pending_delta).chain(&spec.uninformed_delta) {
                if d.iter().any(|x| !x.is_finite() || x.abs() > MAX_DELTA + 1e-12) {
                    return Err(ConfigError::DeltaTooLarge { persona: p, action: *a });
                }
            }
            for b in Bucket::ALL {
                let rows = spec.responses.get(&b).ok_or(ConfigError::MissingBucket { persona: p, bucket: b })?;
                let named = std::iter::once(("default".to_string(), &rows.default))
                    .chain(rows.overrides.iter().map(|(a, r)| (a.name().to_string(), r)));
                for (action, row) in named {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|x| *x < 0.0 || !x.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                        return Err(ConfigError::RowSum { persona: p, bucket: b, action, sum });
                    }
                }
            }
        }
        Ok(())
    }
}
