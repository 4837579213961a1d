//! Run configuration: one TOML file per experiment, with dotted-key
//! overrides from the command line.

use crate::dialogue::Domain;
use crate::eval::{EvalConfig, Selection};
use crate::experiment::{ExperimentConfig, MixPreset};
use crate::llm::EndpointConfig;
use crate::microworld::{BehaviorPolicy, SimConfig};
use crate::regen::{PipelineConfig, DEFAULT_K};
use crate::rl::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("--set {0}: expected key=value")]
    Override(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("invalid configuration:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<ConfigError>),
}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenBackend {
    /// Oracle controller, count-based forward models, kNN reward.
    #[default]
    Micro,
    /// Chat-completions controller, forward model and reward.
    Llm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub domain: Domain,
    pub mix: MixPreset,
    /// Optional world-table file replacing the bundled one.
    pub config: Option<PathBuf>,
    pub orig_dialogues: usize,
    pub behavior: String,
    pub behavior_epsilon: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            domain: e.domain,
            mix: e.mix,
            config: None,
            orig_dialogues: e.orig_dialogues,
            behavior: e.behavior,
            behavior_epsilon: e.behavior_epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub backend: RegenBackend,
    pub multiplier: usize,
    pub p_hard: f64,
    pub proposals_per_prefix: usize,
    pub knn_k: usize,
    /// 0 means `multiplier × orig_dialogues`.
    pub zeroshot_dialogues: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            backend: RegenBackend::Micro,
            multiplier: p.multiplier,
            p_hard: p.p_hard,
            proposals_per_prefix: p.proposals_per_prefix,
            knn_k: DEFAULT_K,
            zeroshot_dialogues: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub selection: Selection,
    pub hard_mix: bool,
    pub probe_states: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: EvalConfig::default().episodes, selection: Selection::Greedy, hard_mix: false, probe_states: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    /// Checkpoint path, relative to the output directory.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Scripted behavior policy id instead of a checkpoint.
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default)]
    pub selection: Selection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub bind: String,
    pub expiry_secs: u64,
    /// Session log and exports, relative to the output directory.
    pub data_dir: PathBuf,
    pub agents: Vec<AgentEntry>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            expiry_secs: 30 * 60,
            data_dir: PathBuf::from("serve"),
            agents: vec![
                AgentEntry { id: "hrl".into(), checkpoint: Some("checkpoints/ilql.json".into()), script: None, selection: Selection::Greedy },
                AgentEntry { id: "sft".into(), checkpoint: Some("checkpoints/sft.json".into()), script: None, selection: Selection::Greedy },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub sim: SimSection,
    pub pipeline: PipelineSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub serve: ServeSection,
    pub llm: EndpointConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("runs/default"),
            sim: SimSection::default(),
            pipeline: PipelineSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            serve: ServeSection::default(),
            llm: EndpointConfig::default(),
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        table = entry.as_table_mut().ok_or_else(|| field(&parts.join("."), format!("`{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Builds the effective config: file (if any), then `--set` overrides,
    /// then `--seed`/`--out`, then validation.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        let label = path.map_or("<defaults>".to_string(), |p| p.display().to_string());
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| ConfigError::Syntax { path: label.clone(), message: e.to_string() })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            field(if path == "." { "config" } else { &path }, e.into_inner().message().to_string())
        })?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        if let Some(o) = out {
            cfg.out = o.to_path_buf();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated configs carry a seed")
    }

    /// Every problem at once, each tagged with its dotted key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.seed.is_none() {
            errs.push(field("seed", "required (set it in the config or pass --seed)"));
        }
        if let Some(p) = &self.sim.config {
            if !p.exists() {
                errs.push(field("sim.config", format!("{} does not exist", p.display())));
            } else if let Err(e) = SimConfig::load(p) {
                errs.push(field("sim.config", e.to_string()));
            }
        }
        if self.sim.orig_dialogues < 4 {
            errs.push(field("sim.orig_dialogues", "must be at least 4"));
        }
        if let Err(e) = BehaviorPolicy::from_id(&self.sim.behavior, self.sim.behavior_epsilon) {
            errs.push(field("sim.behavior", e.to_string()));
        }
        if let Err(e) = self.pipeline_config().validate() {
            errs.push(field("pipeline", e.to_string()));
        }
        if self.pipeline.knn_k == 0 {
            errs.push(field("pipeline.knn_k", "must be at least 1"));
        }
        if let Err(e) = self.train.validate() {
            errs.push(field("train", e.to_string()));
        }
        if self.train.hidden.contains(&0) {
            errs.push(field("train.hidden", "layer widths must be positive"));
        }
        if self.eval.episodes < 2 {
            errs.push(field("eval.episodes", "must be at least 2"));
        }
        if self.serve.expiry_secs == 0 {
            errs.push(field("serve.expiry_secs", "must be positive"));
        }
        for (i, a) in self.serve.agents.iter().enumerate() {
            if a.checkpoint.is_some() == a.script.is_some() {
                errs.push(field(&format!("serve.agents[{i}]"), "set exactly one of `checkpoint` or `script`"));
            }
        }
        if self.pipeline.backend == RegenBackend::Llm && self.llm.base_url.is_empty() {
            errs.push(field("llm.base_url", "required for the llm backend"));
        }
        match errs.len() {
            0 => Ok(()),
            1 => Err(errs.remove(0)),
            _ => Err(ConfigError::Invalid(errs)),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            multiplier: self.pipeline.multiplier,
            p_hard: self.pipeline.p_hard,
            proposals_per_prefix: self.pipeline.proposals_per_prefix,
            seed: 0,
        }
    }

    /// The equivalent library experiment (stage seeds derived from `seed`).
    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let sim = match &self.sim.config {
            Some(p) => Some(SimConfig::load(p).map_err(|e| field("sim.config", e.to_string()))?),
            None => None,
        };
        if let Some(s) = &sim {
            if s.domain != self.sim.domain {
                return Err(field("sim.config", format!("world table is for {}, but sim.domain is {}", s.domain, self.sim.domain)));
            }
        }
        Ok(ExperimentConfig {
            domain: self.sim.domain,
            sim,
            mix: self.sim.mix,
            orig_dialogues: self.sim.orig_dialogues,
            behavior: self.sim.behavior.clone(),
            behavior_epsilon: self.sim.behavior_epsilon,
            zeroshot_dialogues: self.pipeline.zeroshot_dialogues,
            knn_k: self.pipeline.knn_k,
            probe_states: self.eval.probe_states,
            eval_hard_mix: self.eval.hard_mix,
            pipeline: self.pipeline_config(),
            train: self.train.clone(),
            eval: EvalConfig { episodes: self.eval.episodes, seed: 0, selection: self.eval.selection },
            seed: self.seed(),
        }
        .seeded())
    }

    /// Hash of everything that determines results (the output location is
    /// excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        crate::hashing::hash_json(&c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &["train.tau=0.7".into(), "sim.domain=counseling".into(), "eval.episodes = 50".into(), "llm.model=local".into()],
            Some(3),
            None,
        )
        .unwrap();
        assert_eq!(cfg.train.tau, 0.7);
        assert_eq!(cfg.sim.domain, Domain::Counseling);
        assert_eq!(cfg.eval.episodes, 50);
        assert_eq!(cfg.llm.model, "local");
        assert_eq!(cfg.seed, Some(3));
    }

    #[test]
    fn missing_seed_is_a_field_error() {
        let err = RunConfig::load(None, &[], None, None).unwrap_err();
        assert!(err.to_string().starts_with("seed: required"), "{err}");
    }

    #[test]
    fn type_errors_name_the_field() {
        let err = RunConfig::load(None, &["train.tau=\"high\"".into()], Some(1), None).unwrap_err();
        assert!(err.to_string().starts_with("train.tau:"), "{err}");
        let err = RunConfig::load(None, &["train.tua=0.5".into()], Some(1), None).unwrap_err();
        assert!(err.to_string().contains("tua"), "{err}");
    }

    #[test]
    fn all_violations_are_reported() {
        let err = RunConfig::load(None, &["train.tau=1.5".into(), "eval.episodes=0".into()], None, None).unwrap_err();
        let msg = err.to_string();
        for f in ["seed:", "train:", "eval.episodes:"] {
            assert!(msg.contains(f), "{msg}");
        }
    }

    #[test]
    fn missing_world_file_is_reported() {
        let err = RunConfig::load(None, &["sim.config=\"/nonexistent/world.toml\"".into()], Some(1), None).unwrap_err();
        assert!(err.to_string().starts_with("sim.config:"), "{err}");
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::load(None, &[], Some(1), Some(Path::new("a"))).unwrap();
        let b = RunConfig::load(None, &[], Some(1), Some(Path::new("b"))).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::load(None, &[], Some(2), Some(Path::new("a"))).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let a = RunConfig::load(None, &[], Some(1), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, a.to_toml()).unwrap();
        assert_eq!(RunConfig::load(Some(&p), &[], None, None).unwrap(), a);
    }
}
