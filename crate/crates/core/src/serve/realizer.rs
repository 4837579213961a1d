//! Surface text for agent strategy tokens.

use crate::dialogue::Domain;
use crate::vocab::AgentAction;
use serde::Deserialize;
use std::collections::BTreeMap;

pub const DEFAULT_TEMPLATES: &str = include_str!("../../config/realizer.toml");

#[derive(Debug, thiserror::Error)]
pub enum RealizerError {
    #[error("templates: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{domain} `{action}` has {found} variants; at least 3 are required")]
    TooFewVariants { domain: &'static str, action: &'static str, found: usize },
}

#[derive(Deserialize)]
struct Raw {
    #[serde(default)]
    slots: BTreeMap<String, String>,
    persuasion: BTreeMap<String, Vec<String>>,
    counseling: BTreeMap<String, Vec<String>>,
}

pub struct Realizer {
    // [domain][action] → filled variants.
    variants: [Vec<Vec<String>>; 2],
}

fn domain_slot(d: Domain) -> usize {
    match d {
        Domain::Persuasion => 0,
        Domain::Counseling => 1,
    }
}

impl Realizer {
    pub fn from_toml(text: &str) -> Result<Self, RealizerError> {
        let raw: Raw = toml::from_str(text)?;
        let fill = |s: &str| raw.slots.iter().fold(s.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v));
        let table = |domain: Domain, t: &BTreeMap<String, Vec<String>>| -> Result<Vec<Vec<String>>, RealizerError> {
            AgentAction::ALL
                .iter()
                .map(|a| {
                    let vs = t.get(a.name()).map(Vec::as_slice).unwrap_or_default();
                    if vs.len() < 3 {
                        return Err(RealizerError::TooFewVariants { domain: domain.name(), action: a.name(), found: vs.len() });
                    }
                    Ok(vs.iter().map(|v| fill(v)).collect())
                })
                .collect()
        };
        Ok(Self { variants: [table(Domain::Persuasion, &raw.persuasion)?, table(Domain::Counseling, &raw.counseling)?] })
    }

    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled realizer templates are valid")
    }

    pub fn variants(&self, domain: Domain, action: AgentAction) -> &[String] {
        &self.variants[domain_slot(domain)][action.index()]
    }

    /// The `occurrence`-th use of `action` in a session rotates through the
    /// variants from a session-specific offset.
    pub fn realize(&self, domain: Domain, action: AgentAction, session_seed: u64, occurrence: usize) -> &str {
        let vs = self.variants(domain, action);
        let offset = crate::microworld::sim::derive_seed(session_seed, action.index() as u64) as usize;
        &vs[(offset.wrapping_add(occurrence)) % vs.len()]
    }
}
