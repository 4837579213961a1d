//! End-to-end micro-world experiment: behavior corpus → hindsight
//! regeneration → the four training methods → paired evaluation and the
//! objection probe.
//!
//! Every stage draws from its own seed derived from the experiment seed.

use crate::dialogue::{Dialogue, Domain};
use crate::eval::{
    behavior_probe, compare_agents, probe_states, Comparison, EvalConfig, EvalError, EvalReport, Named, ProbeReport,
};
use crate::hashing::hash_json;
use crate::microworld::sim::derive_seed;
use crate::microworld::{BehaviorError, BehaviorPolicy, ConfigError, OracleError, OracleSolution, SimConfig, World};
use crate::regen::{
    run_pipeline, train_zeroshot, CountForwardModel, ForwardModelSpec, KnnRewardModel, OracleController,
    PipelineConfig, PipelineOutput, PipelineStats, RegenError, RewardModelSpec, DEFAULT_K,
};
use crate::rl::{train_ilql, train_rft, train_sft, Checkpoint, RlError, TrainConfig};
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const ARMS: [&str; 4] = ["hrl", "zeroshot", "rft", "sft"];

/// Stream ids for per-stage seeds.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const PIPELINE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const PROBE: u64 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    World(#[from] ConfigError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Regen(#[from] RegenError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixPreset {
    #[default]
    Uniform,
    Hard,
}

impl MixPreset {
    pub fn apply(self, cfg: SimConfig) -> SimConfig {
        match self {
            MixPreset::Uniform => cfg.uniform_mix(),
            MixPreset::Hard => cfg.hard_mix(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: Domain,
    /// Custom world tables; the bundled ones for `domain` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    pub mix: MixPreset,
    pub orig_dialogues: usize,
    /// `mixture` or a script id.
    pub behavior: String,
    pub behavior_epsilon: f64,
    /// Scratch dialogues for the zero-shot baseline; 0 means
    /// `multiplier × orig_dialogues`, the size of the hindsight aggregate.
    pub zeroshot_dialogues: usize,
    pub knn_k: usize,
    pub probe_states: usize,
    /// Also evaluate the hindsight agent under the hard persona mix.
    pub eval_hard_mix: bool,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Persuasion,
            sim: None,
            mix: MixPreset::Uniform,
            orig_dialogues: 1000,
            behavior: "mixture".into(),
            behavior_epsilon: crate::microworld::behavior::DEFAULT_EPSILON,
            zeroshot_dialogues: 0,
            knn_k: DEFAULT_K,
            probe_states: 200,
            eval_hard_mix: false,
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn for_domain(domain: Domain, seed: u64) -> Self {
        Self { domain, seed, ..Default::default() }
    }

    pub fn world(&self) -> Result<World, ConfigError> {
        World::new(self.mix.apply(self.base_sim()))
    }

    pub fn base_sim(&self) -> SimConfig {
        self.sim.clone().unwrap_or_else(|| SimConfig::for_domain(self.domain))
    }

    /// Stage configs with their seeds derived from the experiment seed.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.pipeline.seed = derive_seed(self.seed, streams::PIPELINE);
        c.train.seed = derive_seed(self.seed, streams::TRAIN);
        c.eval.seed = derive_seed(self.seed, streams::EVAL);
        c
    }

    pub fn zeroshot_size(&self) -> usize {
        if self.zeroshot_dialogues > 0 {
            self.zeroshot_dialogues
        } else {
            self.pipeline.multiplier * self.orig_dialogues
        }
    }
}

/// Behavior-policy corpus for `world`.
pub fn behavior_corpus(world: &World, policy: &BehaviorPolicy, n: usize, seed: u64) -> Vec<Dialogue> {
    policy.collect(world, n, seed, "orig-")
}

/// The desk-scale regeneration models fitted to `orig`.
pub struct RegenModels {
    pub controller: OracleController,
    pub standard: CountForwardModel,
    pub hard: CountForwardModel,
    pub reward: KnnRewardModel,
}

impl RegenModels {
    pub fn fit(world: &World, orig: &[Dialogue], knn_k: usize) -> Result<Self, RegenError> {
        Ok(Self {
            controller: OracleController::new(world.clone(), 1.0)?,
            standard: CountForwardModel::fit(orig, ForwardModelSpec::standard())?,
            hard: CountForwardModel::fit(orig, ForwardModelSpec::hard())?,
            reward: KnnRewardModel::fit(orig, RewardModelSpec::knn(knn_k))?,
        })
    }

    pub fn run(&self, orig: &[Dialogue], cfg: &PipelineConfig) -> Result<PipelineOutput, RegenError> {
        let hard = (cfg.p_hard > 0.0).then_some(&self.hard as &dyn crate::regen::ForwardModel);
        run_pipeline(orig, &self.controller, &self.standard, hard, &self.reward, cfg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArmCheckpoints {
    pub hrl: Checkpoint,
    pub zeroshot: Checkpoint,
    pub rft: Checkpoint,
    pub sft: Checkpoint,
}

impl ArmCheckpoints {
    pub fn named(&self) -> [(&'static str, &Checkpoint); 4] {
        [("hrl", &self.hrl), ("zeroshot", &self.zeroshot), ("rft", &self.rft), ("sft", &self.sft)]
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub data: f64,
    pub pipeline: f64,
    pub train: f64,
    pub eval: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub orig_hash: String,
    pub aggregate_hash: String,
    pub checkpoint_hashes: Vec<(String, String)>,
    pub pipeline: PipelineStats,
    /// One report per arm, in [`ARMS`] order.
    pub reports: Vec<EvalReport>,
    pub comparison: Comparison,
    /// Objection probe per arm (persuasion only).
    pub probes: Vec<ProbeReport>,
    pub hard_mix: Option<EvalReport>,
    pub timings: Timings,
}

impl ExperimentOutcome {
    pub fn report(&self, arm: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.agent == arm)
    }

    pub fn probe(&self, arm: &str) -> Option<&ProbeReport> {
        self.probes.iter().find(|r| r.agent == arm)
    }

    /// True when `hrl` beats every baseline with a bootstrap CI above 0.
    pub fn hrl_wins(&self) -> bool {
        ARMS[1..].iter().all(|b| self.comparison.pair("hrl", b).is_some_and(|d| d.mean_diff > 0.0 && d.ci_low > 0.0))
    }
}

/// Trains all four arms on one corpus.
pub fn train_arms(
    orig: &[Dialogue],
    out: &PipelineOutput,
    models: &RegenModels,
    domain: Domain,
    zeroshot_n: usize,
    cfg: &TrainConfig,
) -> Result<ArmCheckpoints, RegenError> {
    let hrl = train_ilql(&out.aggregate, cfg)?;
    let (zeroshot, _) = train_zeroshot(&models.standard, &models.reward, domain, zeroshot_n, cfg)?;
    let rft = train_rft(orig, &out.regens, cfg)?;
    let sft = train_sft(orig, cfg)?;
    Ok(ArmCheckpoints { hrl, zeroshot, rft, sft })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let started = Instant::now();
    let cfg = config.seeded();
    let world = cfg.world()?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let behavior = BehaviorPolicy::from_id(&cfg.behavior, cfg.behavior_epsilon)?;
    let orig = behavior_corpus(&world, &behavior, cfg.orig_dialogues, derive_seed(cfg.seed, streams::DATA));
    timings.data = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let models = RegenModels::fit(&world, &orig, cfg.knn_k)?;
    let out = models.run(&orig, &cfg.pipeline)?;
    timings.pipeline = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let arms = train_arms(&orig, &out, &models, cfg.domain, cfg.zeroshot_size(), &cfg.train)?;
    timings.train = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let oracle = OracleSolution::solve(&world, 1.0)?;
    let reports = arms
        .named()
        .iter()
        .map(|(name, ck)| crate::eval::run_sim_eval(&Named(name.to_string(), *ck), &world, &cfg.eval, Some(&oracle)))
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = compare_agents(&reports)?;
    let probes = if cfg.domain == Domain::Persuasion && cfg.probe_states > 0 {
        let states = probe_states(&world, cfg.probe_states, derive_seed(cfg.seed, streams::PROBE));
        arms.named()
            .iter()
            .map(|(name, ck)| behavior_probe(&Named(name.to_string(), *ck), &states))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let hard_mix = if cfg.eval_hard_mix {
        let hw = World::new(cfg.base_sim().hard_mix())?;
        let ho = OracleSolution::solve(&hw, 1.0)?;
        Some(crate::eval::run_sim_eval(&Named("hrl".into(), &arms.hrl), &hw, &cfg.eval, Some(&ho))?)
    } else {
        None
    };
    timings.eval = t.elapsed().as_secs_f64();
    timings.total = started.elapsed().as_secs_f64();

    Ok(ExperimentOutcome {
        orig_hash: hash_json(&orig),
        aggregate_hash: hash_json(&out.aggregate),
        checkpoint_hashes: arms.named().iter().map(|(n, c)| (n.to_string(), c.hash.clone())).collect(),
        pipeline: out.stats.clone(),
        config: cfg,
        reports,
        comparison,
        probes,
        hard_mix,
        timings,
    })
}
