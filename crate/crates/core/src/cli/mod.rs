//! The `hrl` command line: every pipeline stage as a subcommand, all driven
//! by one [`RunConfig`]. Each stage writes its artifacts under the output
//! directory plus a manifest listing the config hash and the content hashes
//! of what it read and wrote.

pub mod config;

pub use config::{ConfigError, RegenBackend, RunConfig};

use crate::corpus::{read_dialogues, write_jsonl};
use crate::dialogue::{validate_corpus, Dialogue, Domain};
use crate::eval::{
    behavior_probe, compare_agents, format_comparison, format_table, probe_states, run_sim_eval, to_csv, EvalReport,
    Named,
};
use crate::experiment::{behavior_corpus, streams, RegenModels};
use crate::hashing::{git_blob_hash, hash_json};
use crate::llm::{ChatBackend, ChatClient, LlmController, LlmForwardModel, LlmRewardModel};
use crate::microworld::sim::derive_seed;
use crate::microworld::{BehaviorPolicy, OracleSolution, PersonaName, Script, World};
use crate::numerics::gradcheck::{
    check_cross_entropy_instances, check_expectile_instances, check_mlp_instances, GradCheckReport, DEFAULT_TOLERANCE,
};
use crate::regen::{generate_scratch, run_pipeline, PipelineOutput};
use crate::rl::{check_loss_instances, train_ilql, train_rft, train_sft, train_value_based, Checkpoint, Method};
use crate::serve::{AgentPolicy, Realizer, ServeAgent, ServeConfig, ServeState};
use crate::text::TextMapper;
use crate::vocab::Vocabulary;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const ORIG: &str = "data/orig.jsonl";
pub const AGGREGATE: &str = "regen/aggregate.jsonl";
pub const REGENS: &str = "regen/regens.jsonl";
pub const RECORDS: &str = "regen/records.jsonl";
pub const STATS: &str = "regen/stats.json";
pub const CHECKPOINTS: &str = "checkpoints";

#[derive(Debug, Parser)]
#[command(name = "hrl", version, about = "Offline RL on hindsight-regenerated dialogues")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a dotted config key, e.g. `--set train.tau=0.7`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the behavior policy in the micro-world.
    GenData,
    /// Relabel, regenerate and label: builds the augmented corpus.
    Regen,
    /// Train one agent.
    Train {
        #[arg(value_parser = ["ilql", "sft", "rft", "zeroshot"])]
        method: String,
        /// Training corpus; defaults to the stage output the method expects.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Paired simulated evaluation of trained agents.
    Eval {
        /// Checkpoint names under `checkpoints/`; all present by default.
        #[arg(long, value_delimiter = ',')]
        agents: Vec<String>,
    },
    /// Objection-handling probe of trained agents.
    Probe {
        #[arg(long, value_delimiter = ',')]
        agents: Vec<String>,
    },
    /// Solve the micro-world exactly and report the optimal value.
    Oracle,
    /// Finite-difference checks of every analytic gradient.
    Gradcheck {
        /// Random instances per gradient family.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Start the human-evaluation chat server.
    Serve,
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Stage(String),
    #[error("missing input {path} (run `hrl {producer}` first)")]
    MissingInput { path: PathBuf, producer: &'static str },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("gradient check failed: max relative error {max:e} ({worst})")]
    GradCheck { max: f64, worst: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

fn stage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Stage(e.to_string())
}

/// Inputs and outputs of one stage, by path relative to the output
/// directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub summary: Value,
    /// Hash of every other field.
    #[serde(default)]
    pub hash: String,
}

impl Manifest {
    pub fn compute_hash(&self) -> String {
        let mut m = self.clone();
        m.hash = String::new();
        hash_json(&m)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(stage)
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    manifest: Manifest,
}

impl Ctx {
    fn new(cfg: RunConfig, command: &str) -> Self {
        let manifest = Manifest {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        };
        Self { out: cfg.out.clone(), cfg, manifest }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn read(&mut self, rel: &str, producer: &'static str) -> Result<Vec<u8>, CliError> {
        let path = self.path(rel);
        if !path.exists() {
            return Err(CliError::MissingInput { path, producer });
        }
        let bytes = std::fs::read(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.manifest.inputs.insert(rel.to_string(), git_blob_hash(&bytes));
        Ok(bytes)
    }

    fn read_corpus(&mut self, rel: &str, producer: &'static str) -> Result<Vec<Dialogue>, CliError> {
        self.read(rel, producer)?;
        read_dialogues(&self.path(rel)).map_err(stage)
    }

    /// Reads a corpus from an explicit path (recorded by its display name).
    fn read_external(&mut self, path: &Path) -> Result<Vec<Dialogue>, CliError> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        self.manifest.inputs.insert(path.display().to_string(), git_blob_hash(&bytes));
        read_dialogues(path).map_err(stage)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        }
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.manifest.outputs.insert(rel.to_string(), git_blob_hash(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value).map_err(stage)?;
        text.push(b'\n');
        self.write(rel, &text)
    }

    fn write_corpus<T: Serialize>(&mut self, rel: &str, dialogues: &[T]) -> Result<(), CliError> {
        write_jsonl(&self.path(rel), dialogues).map_err(stage)?;
        let bytes = std::fs::read(self.path(rel)).map_err(|source| CliError::Io { path: self.path(rel), source })?;
        self.manifest.outputs.insert(rel.to_string(), git_blob_hash(&bytes));
        Ok(())
    }

    fn finish(mut self, summary: Value) -> Result<Manifest, CliError> {
        self.manifest.summary = summary;
        self.manifest.hash = self.manifest.compute_hash();
        let name = self.manifest.command.replace(' ', "-");
        let m = self.manifest.clone();
        self.write_json(&format!("manifests/{name}.json"), &m)?;
        tracing::info!(command = %m.command, hash = %m.hash, "manifest written");
        Ok(m)
    }

    fn world(&self) -> Result<World, CliError> {
        self.cfg.experiment()?.world().map_err(stage)
    }

    fn llm_backend(&self) -> Result<Arc<dyn ChatBackend>, CliError> {
        Ok(Arc::new(ChatClient::new(self.cfg.llm.clone()).map_err(stage)?))
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<Option<Manifest>, CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed, cli.out.as_deref())?;
    match &cli.command {
        Command::GenData => gen_data(cfg).map(Some),
        Command::Regen => regen(cfg).map(Some),
        Command::Train { method, input } => train(cfg, method.parse().map_err(stage)?, input.as_deref()).map(Some),
        Command::Eval { agents } => eval(cfg, agents).map(Some),
        Command::Probe { agents } => probe(cfg, agents).map(Some),
        Command::Oracle => oracle(cfg).map(Some),
        Command::Gradcheck { instances } => gradcheck(cfg, *instances).map(Some),
        Command::Serve => serve(cfg).map(|_| None),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(None)
        }
    }
}

fn gen_data(cfg: RunConfig) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, "gen-data");
    let exp = ctx.cfg.experiment()?;
    let world = exp.world().map_err(stage)?;
    let behavior = BehaviorPolicy::from_id(&exp.behavior, exp.behavior_epsilon).map_err(stage)?;
    let orig = behavior_corpus(&world, &behavior, exp.orig_dialogues, derive_seed(exp.seed, streams::DATA));
    let report = validate_corpus(&orig, &Vocabulary::micro());
    if !report.is_clean() {
        return Err(CliError::Stage(format!("generated corpus has {} violations", report.total_violations())));
    }
    ctx.write_corpus(ORIG, &orig)?;
    let mean = orig.iter().filter_map(|d| d.reward).sum::<f64>() / orig.len() as f64;
    println!("{} dialogues, mean reward {mean:.3}", orig.len());
    ctx.finish(json!({"dialogues": orig.len(), "mean_reward": mean}))
}

fn regen(cfg: RunConfig) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, "regen");
    let orig = ctx.read_corpus(ORIG, "gen-data")?;
    let exp = ctx.cfg.experiment()?;
    let out: PipelineOutput = match ctx.cfg.pipeline.backend {
        RegenBackend::Micro => {
            let models = RegenModels::fit(&ctx.world()?, &orig, exp.knn_k).map_err(stage)?;
            models.run(&orig, &exp.pipeline).map_err(stage)?
        }
        RegenBackend::Llm => {
            let backend = ctx.llm_backend()?;
            let domain = exp.domain;
            let controller = LlmController::new(backend.clone(), domain);
            let forward = LlmForwardModel::new(backend.clone(), domain);
            let reward = LlmRewardModel::new(backend, domain, orig.clone(), exp.pipeline.seed).map_err(stage)?;
            if exp.pipeline.p_hard > 0.0 {
                tracing::warn!("the llm backend has no hard forward model; p_hard is ignored");
            }
            run_pipeline(&orig, &controller, &forward, None, &reward, &exp.pipeline).map_err(stage)?
        }
    };
    ctx.write_corpus(AGGREGATE, &out.aggregate)?;
    ctx.write_corpus(REGENS, &out.regens)?;
    ctx.write_corpus(RECORDS, &out.records)?;
    ctx.write_json(STATS, &out.stats)?;
    println!(
        "{} orig + {} regenerated = {} (ratio {:.3}, {} dropped)",
        out.stats.orig,
        out.stats.kept,
        out.stats.aggregate,
        out.stats.ratio,
        out.stats.dropped_total()
    );
    ctx.finish(serde_json::to_value(&out.stats).map_err(stage)?)
}

fn train(cfg: RunConfig, method: Method, input: Option<&Path>) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, &format!("train {}", method.name()));
    let exp = ctx.cfg.experiment()?;
    let tc = &exp.train;
    let mut extra = json!({});
    let ck: Checkpoint = match method {
        Method::Ilql => {
            let data = match input {
                Some(p) => ctx.read_external(p)?,
                None => ctx.read_corpus(AGGREGATE, "regen")?,
            };
            train_ilql(&data, tc).map_err(stage)?
        }
        Method::Sft => {
            let data = match input {
                Some(p) => ctx.read_external(p)?,
                None => ctx.read_corpus(ORIG, "gen-data")?,
            };
            train_sft(&data, tc).map_err(stage)?
        }
        Method::Rft => {
            let orig = match input {
                Some(p) => ctx.read_external(p)?,
                None => ctx.read_corpus(ORIG, "gen-data")?,
            };
            let regens = ctx.read_corpus(REGENS, "regen")?;
            train_rft(&orig, &regens, tc).map_err(stage)?
        }
        Method::Zeroshot => {
            let orig = match input {
                Some(p) => ctx.read_external(p)?,
                None => ctx.read_corpus(ORIG, "gen-data")?,
            };
            let n = exp.zeroshot_size();
            let seed = derive_seed(tc.seed, 0x5C7A);
            let (scratch, failed) = match ctx.cfg.pipeline.backend {
                RegenBackend::Micro => {
                    let models = RegenModels::fit(&ctx.world()?, &orig, exp.knn_k).map_err(stage)?;
                    generate_scratch(&models.standard, &models.reward, exp.domain, n, seed).map_err(stage)?
                }
                RegenBackend::Llm => {
                    let backend = ctx.llm_backend()?;
                    let forward = LlmForwardModel::new(backend.clone(), exp.domain);
                    let reward = LlmRewardModel::new(backend, exp.domain, orig.clone(), seed).map_err(stage)?;
                    generate_scratch(&forward, &reward, exp.domain, n, seed).map_err(stage)?
                }
            };
            ctx.write_corpus("data/scratch.jsonl", &scratch)?;
            extra = json!({"scratch": scratch.len(), "scratch_failed": failed});
            train_value_based(Method::Zeroshot, &scratch, tc).map_err(stage)?
        }
    };
    let rel = format!("{CHECKPOINTS}/{}.json", method.name());
    let bytes = serde_json::to_vec(&ck).map_err(stage)?;
    ctx.write(&rel, &bytes)?;
    println!("trained {} on {} dialogues -> {}", method.name(), ck.corpus_size, ctx.path(&rel).display());
    let mut summary = json!({
        "method": method.name(),
        "corpus_size": ck.corpus_size,
        "corpus_hash": ck.corpus_hash,
        "checkpoint_hash": ck.hash,
        "final_bc_loss": ck.bc_history.last(),
        "final_q_loss": ck.loss_history.last().map(|l| l.q_loss),
    });
    if let (Some(s), Some(e)) = (summary.as_object_mut(), extra.as_object()) {
        s.extend(e.clone());
    }
    ctx.finish(summary)
}

const METHOD_ORDER: [&str; 4] = ["ilql", "zeroshot", "rft", "sft"];

fn load_agents(ctx: &mut Ctx, names: &[String]) -> Result<Vec<(String, Checkpoint)>, CliError> {
    let names: Vec<String> = if names.is_empty() {
        let found: Vec<String> = METHOD_ORDER
            .iter()
            .filter(|m| ctx.path(&format!("{CHECKPOINTS}/{m}.json")).exists())
            .map(|m| m.to_string())
            .collect();
        if found.is_empty() {
            return Err(CliError::MissingInput { path: ctx.path(CHECKPOINTS), producer: "train" });
        }
        found
    } else {
        names.to_vec()
    };
    names
        .into_iter()
        .map(|n| {
            let rel = format!("{CHECKPOINTS}/{n}.json");
            ctx.read(&rel, "train")?;
            let ck = Checkpoint::load(&ctx.path(&rel)).map_err(stage)?;
            Ok((n, ck))
        })
        .collect()
}

fn eval(cfg: RunConfig, agents: &[String]) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, "eval");
    let exp = ctx.cfg.experiment()?;
    let arms = load_agents(&mut ctx, agents)?;
    let world = ctx.world()?;
    let oracle = OracleSolution::solve(&world, 1.0).map_err(stage)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for (name, ck) in &arms {
        if ck.domain != exp.domain {
            return Err(CliError::Stage(format!("checkpoint `{name}` is for {}, not {}", ck.domain, exp.domain)));
        }
        reports.push(run_sim_eval(&Named(name.clone(), ck), &world, &exp.eval, Some(&oracle)).map_err(stage)?);
    }
    let comparison = compare_agents(&reports).map_err(stage)?;
    let mut hard = None;
    if exp.eval_hard_mix {
        let hw = World::new(exp.base_sim().hard_mix()).map_err(stage)?;
        let ho = OracleSolution::solve(&hw, 1.0).map_err(stage)?;
        let hr: Vec<EvalReport> = arms
            .iter()
            .map(|(n, ck)| run_sim_eval(&Named(n.clone(), ck), &hw, &exp.eval, Some(&ho)))
            .collect::<Result<_, _>>()
            .map_err(stage)?;
        ctx.write("eval/hard_mix.txt", format_table(&hr).as_bytes())?;
        ctx.write_json("eval/hard_mix.json", &hr)?;
        hard = Some(hr);
    }
    let table = format_table(&reports);
    let cmp = format_comparison(&comparison);
    println!("{table}\n{cmp}");
    ctx.write_json("eval/reports.json", &reports)?;
    ctx.write_json("eval/comparison.json", &comparison)?;
    ctx.write("eval/table.txt", format!("{table}\n{cmp}").as_bytes())?;
    ctx.write("eval/rewards.csv", to_csv(&reports).as_bytes())?;
    let means: BTreeMap<&str, f64> = reports.iter().map(|r| (r.agent.as_str(), r.mean)).collect();
    let fractions: BTreeMap<&str, Option<f64>> = reports.iter().map(|r| (r.agent.as_str(), r.oracle_fraction)).collect();
    let hard_fractions: Option<BTreeMap<String, Option<f64>>> =
        hard.map(|h| h.into_iter().map(|r| (r.agent, r.oracle_fraction)).collect());
    ctx.finish(json!({
        "episodes": exp.eval.episodes,
        "means": means,
        "oracle_fraction": fractions,
        "hard_mix_oracle_fraction": hard_fractions,
        "pairs": comparison.pairs,
    }))
}

fn probe(cfg: RunConfig, agents: &[String]) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, "probe");
    let exp = ctx.cfg.experiment()?;
    let arms = load_agents(&mut ctx, agents)?;
    let world = ctx.world()?;
    let states = probe_states(&world, exp.probe_states, derive_seed(exp.seed, streams::PROBE));
    if states.is_empty() {
        return Err(CliError::Stage("no objection states found in this world".into()));
    }
    let reports = arms
        .iter()
        .map(|(n, ck)| behavior_probe(&Named(n.clone(), ck), &states))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage)?;
    for r in &reports {
        println!(
            "{:<10} address_concern {:.3} (argmax {:.3})  ask {:.3}",
            r.agent, r.address_concern_mass, r.address_concern_argmax, r.ask_mass
        );
    }
    ctx.write_json("eval/probe.json", &reports)?;
    ctx.finish(serde_json::to_value(&reports).map_err(stage)?)
}

fn oracle(cfg: RunConfig) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, "oracle");
    let world = ctx.world()?;
    let sol = OracleSolution::solve(&world, 1.0).map_err(stage)?;
    let mean = sol.optimal_mean(&world).map_err(stage)?;
    let starts: Vec<Option<u8>> = match world.domain() {
        Domain::Persuasion => vec![None],
        Domain::Counseling => world.config.initial_intensity.iter().map(|&i| Some(i)).collect(),
    };
    let mut per_persona = BTreeMap::new();
    for p in PersonaName::ALL {
        let v = starts.iter().map(|&s| sol.initial_value(p, s)).collect::<Result<Vec<_>, _>>().map_err(stage)?;
        per_persona.insert(p.name(), v.iter().sum::<f64>() / v.len() as f64);
    }
    println!("optimal mean {mean:.4}");
    for (p, v) in &per_persona {
        println!("  {p:<14} {v:.4}");
    }
    let summary = json!({"domain": world.domain(), "mix": world.mix, "optimal_mean": mean, "per_persona": per_persona});
    ctx.write_json("oracle/summary.json", &summary)?;
    ctx.finish(summary)
}

fn gradcheck(cfg: RunConfig, instances: usize) -> Result<Manifest, CliError> {
    let mut ctx = Ctx::new(cfg, "gradcheck");
    let mut rng = crate::microworld::rng_from(derive_seed(ctx.cfg.seed(), 0x6CC));
    let suites: Vec<(&str, GradCheckReport)> = vec![
        ("mlp", check_mlp_instances(instances, &mut rng)),
        ("expectile", check_expectile_instances(instances, &mut rng)),
        ("cross_entropy", check_cross_entropy_instances(instances, &mut rng)),
        ("ilql_losses", check_loss_instances(instances, &mut rng)),
    ];
    let mut total = GradCheckReport::default();
    for (name, r) in &suites {
        println!("{name:<14} {:>5} instances  max rel err {:.3e}", r.instances, r.max_relative_error);
        total.merge(r.clone());
    }
    let pass = total.passes(DEFAULT_TOLERANCE);
    println!("{} (tolerance {DEFAULT_TOLERANCE:e})", if pass { "PASS" } else { "FAIL" });
    let summary = json!({
        "tolerance": DEFAULT_TOLERANCE,
        "pass": pass,
        "suites": suites.iter().map(|(n, r)| (n.to_string(), r)).collect::<BTreeMap<_, _>>(),
    });
    ctx.write_json("gradcheck/report.json", &summary)?;
    let manifest = ctx.finish(summary)?;
    if pass {
        Ok(manifest)
    } else {
        Err(CliError::GradCheck { max: total.max_relative_error, worst: total.worst })
    }
}

fn serve(cfg: RunConfig) -> Result<(), CliError> {
    let out = cfg.out.clone();
    let mut agents = Vec::new();
    for (i, a) in cfg.serve.agents.iter().enumerate() {
        let agent = match (&a.checkpoint, &a.script) {
            (Some(p), None) => {
                let path = out.join(p);
                if !path.exists() {
                    return Err(ConfigError::Field {
                        field: format!("serve.agents[{i}].checkpoint"),
                        message: format!("{} does not exist", path.display()),
                    }
                    .into());
                }
                ServeAgent::from_checkpoint(a.id.clone(), Checkpoint::load(&path).map_err(stage)?, a.selection)
            }
            (None, Some(s)) => {
                let script = Script::ALL.into_iter().find(|x| x.id() == s).ok_or_else(|| ConfigError::Field {
                    field: format!("serve.agents[{i}].script"),
                    message: format!("unknown script `{s}`"),
                })?;
                ServeAgent {
                    id: a.id.clone(),
                    domain: cfg.sim.domain,
                    policy: AgentPolicy::Script { script, epsilon: 0.0 },
                    selection: a.selection,
                }
            }
            _ => unreachable!("validated: exactly one of checkpoint/script"),
        };
        agents.push(agent);
    }
    let config = ServeConfig { seed: cfg.seed(), expiry_secs: cfg.serve.expiry_secs, data_dir: out.join(&cfg.serve.data_dir) };
    let state =
        ServeState::new(config, agents, Realizer::bundled(), TextMapper::bundled(), crate::serve::system_clock()).map_err(stage)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(stage)?;
    rt.block_on(crate::serve::http::serve(Arc::new(state), &cfg.serve.bind)).map_err(stage)
}
