//! Simulated-user evaluation: paired episodes, per-persona summaries,
//! bootstrap comparisons and an objection-handling probe.

mod policy;
mod probe;

pub use policy::{Named, OraclePolicy, Policy, ScriptPolicy, UniformPolicy};
pub use probe::{behavior_probe, probe_states, ProbeReport, ProbeState};

use crate::dialogue::{Dialogue, Domain, Turn};
use crate::microworld::oracle::argmax;
use crate::microworld::sim::{derive_seed, rng_from, sample_index};
use crate::microworld::{OracleError, OracleSolution, PersonaName, World};
use crate::rl::RlError;
use crate::vocab::AgentAction;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};
use std::fmt::Write as _;

pub const DEFAULT_EPISODES: usize = 400;
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("agent `{agent}` returned {len} action probabilities (expected {expected})")]
    OutOfVocabulary { agent: String, len: usize, expected: usize },
    #[error("agent `{0}` returned an invalid action distribution")]
    BadDistribution(String),
    #[error("reports are not comparable: {0}")]
    ConfigMismatch(String),
    #[error("nothing to compare")]
    Empty,
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Greedy,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    pub selection: Selection,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: DEFAULT_EPISODES, seed: 0, selection: Selection::Greedy }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaStat {
    pub persona: PersonaName,
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub domain: Domain,
    pub config: EvalConfig,
    pub mix: [f64; 4],
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub per_persona: Vec<PersonaStat>,
    pub oracle_mean: Option<f64>,
    pub oracle_fraction: Option<f64>,
    /// Per-episode rewards and personas, in episode order.
    pub rewards: Vec<f64>,
    pub personas: Vec<PersonaName>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (xs[0], 0.0),
        _ => (xs.mean(), xs.std_dev()),
    }
}

pub(crate) fn check_probs(agent: &str, p: &[f64]) -> Result<(), EvalError> {
    if p.len() != AgentAction::COUNT {
        return Err(EvalError::OutOfVocabulary { agent: agent.to_string(), len: p.len(), expected: AgentAction::COUNT });
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(EvalError::BadDistribution(agent.to_string()));
    }
    Ok(())
}

/// Plays one episode. The world draws from `world_seed` only, so episode `i`
/// meets the same persona and noise stream whichever agent is playing.
pub fn play_episode(
    policy: &dyn Policy,
    world: &World,
    id: impl Into<String>,
    world_seed: u64,
    selection: Selection,
) -> Result<(Dialogue, PersonaName, f64), EvalError> {
    let mut rng = rng_from(world_seed);
    let mut pick_rng = rng_from(derive_seed(world_seed, 0xA6E7));
    let mut state = world.reset(&mut rng);
    let mut d = Dialogue::new(id, world.domain(), crate::dialogue::Source::Orig);
    d.meta.persona = Some(state.persona.name().to_string());
    d.meta.initial_intensity = state.initial_intensity;
    while !state.done {
        let p = policy.probs(&d, &state)?;
        check_probs(&policy.id(), &p)?;
        let a = match selection {
            Selection::Greedy => argmax(&p),
            Selection::Sampled => sample_index(&p, &mut pick_rng),
        };
        let action = AgentAction::ALL[a];
        let (response, next) = world.step(&state, action, &mut rng).expect("loop guards on done");
        d.turns.push(Turn::agent(vec![action.token()]));
        d.turns.push(Turn::user(vec![response.token()]));
        state = next;
    }
    let r = world.terminal_reward(&state.hidden, state.initial_intensity);
    d.reward = Some(r);
    Ok((d, state.persona, r))
}

/// Runs `cfg.episodes` paired episodes; the oracle, when given, supplies
/// the optimal mean for the oracle fraction.
pub fn run_sim_eval(
    policy: &dyn Policy,
    world: &World,
    cfg: &EvalConfig,
    oracle: Option<&OracleSolution>,
) -> Result<EvalReport, EvalError> {
    let results: Vec<(PersonaName, f64)> = (0..cfg.episodes)
        .into_par_iter()
        .map(|i| {
            play_episode(policy, world, format!("eval-{i}"), derive_seed(cfg.seed, i as u64), cfg.selection)
                .map(|(_, p, r)| (p, r))
        })
        .collect::<Result<_, _>>()?;
    let rewards: Vec<f64> = results.iter().map(|r| r.1).collect();
    let personas: Vec<PersonaName> = results.iter().map(|r| r.0).collect();
    let (mean, std) = mean_std(&rewards);
    let per_persona = PersonaName::ALL
        .iter()
        .map(|&p| {
            let xs: Vec<f64> = results.iter().filter(|r| r.0 == p).map(|r| r.1).collect();
            let (m, s) = mean_std(&xs);
            PersonaStat { persona: p, episodes: xs.len(), mean: m, std: s }
        })
        .collect();
    let oracle_mean = oracle.map(|o| o.optimal_mean(world)).transpose()?;
    Ok(EvalReport {
        agent: policy.id(),
        domain: world.domain(),
        config: cfg.clone(),
        mix: world.mix,
        episodes: cfg.episodes,
        mean,
        std,
        per_persona,
        oracle_fraction: oracle_mean.map(|o| mean / o),
        oracle_mean,
        rewards,
        personas,
    })
}

/// Percentile bootstrap interval for the mean of `xs`.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut rng = rng_from(seed);
    let n = xs.len();
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let mut data = Data::new(means);
    let tail = (1.0 - level) / 2.0;
    (data.quantile(tail), data.quantile(1.0 - tail))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub better: String,
    pub worse: String,
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl PairedDiff {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Agents by descending mean: (agent, mean, std).
    pub ranking: Vec<(String, f64, f64)>,
    pub pairs: Vec<PairedDiff>,
}

impl Comparison {
    pub fn pair(&self, a: &str, b: &str) -> Option<PairedDiff> {
        self.pairs.iter().find_map(|p| {
            if p.better == a && p.worse == b {
                Some(p.clone())
            } else if p.better == b && p.worse == a {
                Some(PairedDiff {
                    better: a.into(),
                    worse: b.into(),
                    mean_diff: -p.mean_diff,
                    ci_low: -p.ci_high,
                    ci_high: -p.ci_low,
                })
            } else {
                None
            }
        })
    }
}

/// Paired comparison of reports produced with identical configurations.
pub fn compare_agents(reports: &[EvalReport]) -> Result<Comparison, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    for r in reports {
        if r.config != first.config || r.domain != first.domain || r.mix != first.mix || r.rewards.len() != first.rewards.len() {
            return Err(EvalError::ConfigMismatch(format!("`{}` vs `{}`", first.agent, r.agent)));
        }
        if r.personas != first.personas {
            return Err(EvalError::ConfigMismatch(format!("persona streams of `{}` and `{}` differ", first.agent, r.agent)));
        }
    }
    let mut order: Vec<&EvalReport> = reports.iter().collect();
    order.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    let mut pairs = Vec::new();
    for (i, a) in order.iter().enumerate() {
        for b in &order[i + 1..] {
            let diffs: Vec<f64> = a.rewards.iter().zip(&b.rewards).map(|(x, y)| x - y).collect();
            let seed = derive_seed(first.config.seed, 0xB007);
            let (lo, hi) = bootstrap_ci(&diffs, BOOTSTRAP_RESAMPLES, 0.95, seed);
            pairs.push(PairedDiff {
                better: a.agent.clone(),
                worse: b.agent.clone(),
                mean_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
                ci_low: lo,
                ci_high: hi,
            });
        }
    }
    Ok(Comparison { ranking: order.iter().map(|r| (r.agent.clone(), r.mean, r.std)).collect(), pairs })
}

/// Plain-text table: one column per agent, rows for the overall and
/// per-persona mean ± std and the oracle fraction.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let width = reports.iter().map(|r| r.agent.chars().count() + 2).max().unwrap_or(0).max(16);
    let _ = write!(out, "{:<18}", "");
    for r in reports {
        let _ = write!(out, "{:>width$}", r.agent);
    }
    out.push('\n');
    let cell = |m: f64, s: f64| format!("{m:.2} ± {s:.2}");
    let _ = write!(out, "{:<18}", "Reward (sim)");
    for r in reports {
        let _ = write!(out, "{:>width$}", cell(r.mean, r.std));
    }
    out.push('\n');
    for (k, p) in PersonaName::ALL.iter().enumerate() {
        let _ = write!(out, "{:<18}", format!("  {}", p.name()));
        for r in reports {
            let s = &r.per_persona[k];
            let _ = write!(out, "{:>width$}", cell(s.mean, s.std));
        }
        out.push('\n');
    }
    if reports.iter().any(|r| r.oracle_fraction.is_some()) {
        let _ = write!(out, "{:<18}", "Oracle fraction");
        for r in reports {
            let _ = write!(out, "{:>width$}", r.oracle_fraction.map_or("-".into(), |f| format!("{:.1}%", 100.0 * f)));
        }
        out.push('\n');
    }
    out
}

pub fn format_comparison(c: &Comparison) -> String {
    let mut out = String::new();
    for p in &c.pairs {
        let _ = writeln!(
            out,
            "{} − {}: {:+.3} [{:+.3}, {:+.3}]{}",
            p.better,
            p.worse,
            p.mean_diff,
            p.ci_low,
            p.ci_high,
            if p.excludes_zero() { "" } else { "  (CI contains 0)" }
        );
    }
    out
}

/// Per-episode rewards, one row per (agent, episode).
pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("agent,episode,persona,reward\n");
    for r in reports {
        for (i, (x, p)) in r.rewards.iter().zip(&r.personas).enumerate() {
            let _ = writeln!(out, "{},{i},{},{x}", r.agent, p.name());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::SimConfig;

    #[test]
    fn self_comparison_is_zero() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let cfg = EvalConfig { episodes: 50, ..Default::default() };
        let a = run_sim_eval(&UniformPolicy, &world, &cfg, None).unwrap();
        let mut b = a.clone();
        b.agent = "copy".into();
        let c = compare_agents(&[a, b]).unwrap();
        assert_eq!(c.pairs[0].mean_diff, 0.0);
        assert!(!c.pairs[0].excludes_zero());
    }

    #[test]
    fn mismatched_configs_are_rejected() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let a = run_sim_eval(&UniformPolicy, &world, &EvalConfig { episodes: 20, ..Default::default() }, None).unwrap();
        let b = run_sim_eval(&UniformPolicy, &world, &EvalConfig { episodes: 20, seed: 1, ..Default::default() }, None).unwrap();
        assert!(matches!(compare_agents(&[a, b]), Err(EvalError::ConfigMismatch(_))));
        assert!(matches!(compare_agents(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let m = xs.iter().sum::<f64>() / 200.0;
        let (lo, hi) = bootstrap_ci(&xs, 2000, 0.95, 3);
        assert!(lo < m && m < hi);
        assert_eq!(bootstrap_ci(&[1.0; 10], 100, 0.95, 0), (1.0, 1.0));
    }
}
