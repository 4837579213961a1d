//! Relabel → regenerate → label → aggregate.
//!
//! Every work item draws its randomness from a seed derived from the
//! pipeline seed and the item's identity, so results do not depend on how
//! items are scheduled across threads.

use super::{ForwardKind, ForwardModel, HindsightController, HindsightProposal, RegenError, RewardModel};
use crate::dialogue::{Dialogue, Domain, Role, Source, Turn};
use crate::microworld::sim::{derive_seed, derive_seed_str, rng_from};
use crate::rl::{train_value_based, Checkpoint, Method, TrainConfig};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Target `|aggregate| / |orig|`.
    pub multiplier: usize,
    /// Probability of completing with the hard forward model.
    pub p_hard: f64,
    pub proposals_per_prefix: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { multiplier: 5, p_hard: 0.25, proposals_per_prefix: 3, seed: 0 }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), RegenError> {
        if self.multiplier < 1 {
            return Err(RegenError::Config("multiplier must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_hard) {
            return Err(RegenError::Config(format!("p_hard must lie in [0, 1], got {}", self.p_hard)));
        }
        if self.proposals_per_prefix == 0 {
            return Err(RegenError::Config("proposals_per_prefix must be at least 1".into()));
        }
        Ok(())
    }
}

/// One chosen relabeling: which turn of which dialogue, and its replacement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelItem {
    pub parent_id: String,
    pub relabel_turn: usize,
    /// Sampling pass over the corpus that produced this item.
    pub pass: usize,
    pub proposal: HindsightProposal,
    pub proposals_offered: usize,
    pub seed: u64,
}

impl RelabelItem {
    pub fn regen_id(&self) -> String {
        format!("{}~r{}t{}", self.parent_id, self.pass, self.relabel_turn)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenRecord {
    pub parent_id: String,
    pub relabel_turn: usize,
    pub chosen_proposal: HindsightProposal,
    pub completion_id: String,
    pub proxy_reward: f64,
    pub used_hard_model: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub orig: usize,
    pub target_regens: usize,
    pub relabeled: usize,
    pub controller_failures: usize,
    pub passes: usize,
    pub kept: usize,
    pub hard_used: usize,
    /// Drop counts by reason.
    pub dropped: BTreeMap<String, usize>,
    pub aggregate: usize,
    pub ratio: f64,
}

impl PipelineStats {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub aggregate: Vec<Dialogue>,
    pub regens: Vec<Dialogue>,
    pub records: Vec<RegenRecord>,
    pub items: Vec<RelabelItem>,
    pub stats: PipelineStats,
}

fn relabel_one(
    d: &Dialogue,
    pass: usize,
    controller: &dyn HindsightController,
    cfg: &PipelineConfig,
) -> Option<Result<RelabelItem, RegenError>> {
    // The opening agent turn is never relabeled.
    let turns: Vec<usize> = d.agent_turn_indices().skip(1).collect();
    if turns.is_empty() {
        return None;
    }
    let mut rng = rng_from(derive_seed_str(cfg.seed, &format!("{}#{pass}", d.id)));
    let relabel_turn = turns[rng.random_range(0..turns.len())];
    let seed = derive_seed_str(cfg.seed, &format!("{}/{relabel_turn}/{pass}", d.id));
    let result = controller.propose(d, relabel_turn, cfg.proposals_per_prefix, seed).and_then(|props| {
        if props.is_empty() {
            return Err(RegenError::NoProposals);
        }
        let original = &d.turns[relabel_turn];
        if let Some(bad) = props.iter().find(|p| p.alternative == original.tokens && p.alternative_text == original.text) {
            return Err(RegenError::Config(format!("controller repeated the original utterance {:?}", bad.alternative)));
        }
        let pick = rng_from(seed).random_range(0..props.len());
        let offered = props.len();
        Ok(RelabelItem {
            parent_id: d.id.clone(),
            relabel_turn,
            pass,
            proposal: props.into_iter().nth(pick).expect("index in range"),
            proposals_offered: offered,
            seed,
        })
    });
    Some(result)
}

/// Picks relabel points and alternatives until `(multiplier − 1)·|corpus|`
/// items exist. Each pass visits every dialogue once, choosing one agent
/// turn (never the first) uniformly; controller failures are skipped.
/// Returns the items and the number of failures.
pub fn relabel_dataset(
    corpus: &[Dialogue],
    controller: &dyn HindsightController,
    cfg: &PipelineConfig,
) -> Result<(Vec<RelabelItem>, usize, usize), RegenError> {
    cfg.validate()?;
    let target = (cfg.multiplier - 1) * corpus.len();
    let mut items = Vec::with_capacity(target);
    let mut failures = 0;
    let mut pass = 0;
    while items.len() < target {
        let results: Vec<Option<Result<RelabelItem, RegenError>>> =
            corpus.par_iter().map(|d| relabel_one(d, pass, controller, cfg)).collect();
        let before = items.len();
        for (d, r) in corpus.iter().zip(results) {
            if items.len() == target {
                break;
            }
            match r {
                None => {}
                Some(Ok(item)) => items.push(item),
                Some(Err(e)) => {
                    tracing::warn!(dialogue = %d.id, error = %e, "hindsight controller failed; skipping");
                    failures += 1;
                }
            }
        }
        pass += 1;
        if items.len() == before {
            tracing::warn!(produced = items.len(), target, "no relabelable dialogues left; stopping early");
            break;
        }
    }
    Ok((items, failures, pass))
}

/// Builds the edited prefix for an item: the parent's turns before the
/// relabel point followed by the alternative utterance.
pub fn edited_prefix(parent: &Dialogue, item: &RelabelItem, source: Source) -> Dialogue {
    let mut d = Dialogue::new(item.regen_id(), parent.domain, source);
    d.meta = parent.meta.clone();
    d.meta.extra.clear();
    d.parent_id = Some(parent.id.clone());
    d.relabel_turn = Some(item.relabel_turn);
    d.turns = parent.turns[..item.relabel_turn].to_vec();
    d.turns.push(Turn::new(Role::Agent, item.proposal.alternative_text.clone(), item.proposal.alternative.clone()));
    d
}

enum Outcome {
    Kept(Box<(Dialogue, RegenRecord)>),
    Dropped(&'static str),
}

/// Completes each relabeled prefix with the standard or (with probability
/// `p_hard`) the hard forward model and labels it with the proxy reward.
/// Completions that fail or are rejected by the reward model are dropped
/// and counted by reason.
pub fn regenerate_and_label(
    corpus: &[Dialogue],
    items: &[RelabelItem],
    standard: &dyn ForwardModel,
    hard: Option<&dyn ForwardModel>,
    reward: &dyn RewardModel,
    cfg: &PipelineConfig,
) -> Result<(Vec<Dialogue>, Vec<RegenRecord>, BTreeMap<String, usize>), RegenError> {
    cfg.validate()?;
    if cfg.p_hard > 0.0 && hard.is_none() {
        return Err(RegenError::Config("p_hard > 0 needs a hard forward model".into()));
    }
    let parents: HashMap<&str, &Dialogue> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    let outcomes: Vec<Result<Outcome, RegenError>> = items
        .par_iter()
        .map(|item| {
            let parent = parents
                .get(item.parent_id.as_str())
                .ok_or_else(|| RegenError::PrefixNotInDialogue { id: item.parent_id.clone(), turn: item.relabel_turn })?;
            let use_hard = rng_from(derive_seed(item.seed, 1)).random_bool(cfg.p_hard);
            let model = if use_hard { hard.expect("checked above") } else { standard };
            let source = if use_hard || model.kind() == ForwardKind::BehaviorClonedHard { Source::RegenHard } else { Source::Regen };
            let partial = edited_prefix(parent, item, source);
            let mut done = match model.complete(&partial, parent.domain.turn_limit(), derive_seed(item.seed, 2)) {
                Ok(d) => d,
                Err(e) => {
                    tracing::warn!(id = %partial.id, error = %e, "completion failed; dropping");
                    return Ok(Outcome::Dropped("completion_failed"));
                }
            };
            let r = match reward.label(&done) {
                Ok(r) => r,
                Err(RegenError::Unfinished(_)) => return Ok(Outcome::Dropped("unfinished")),
                Err(RegenError::RewardOutOfRange(_)) => return Ok(Outcome::Dropped("reward_out_of_range")),
                Err(e) => {
                    tracing::warn!(id = %partial.id, error = %e, "reward labeling failed; dropping");
                    return Ok(Outcome::Dropped("label_failed"));
                }
            };
            done.reward = Some(r);
            let record = RegenRecord {
                parent_id: item.parent_id.clone(),
                relabel_turn: item.relabel_turn,
                chosen_proposal: item.proposal.clone(),
                completion_id: done.id.clone(),
                proxy_reward: r,
                used_hard_model: source == Source::RegenHard,
                seed: item.seed,
            };
            Ok(Outcome::Kept(Box::new((done, record))))
        })
        .collect();
    let mut dialogues = Vec::new();
    let mut records = Vec::new();
    let mut dropped = BTreeMap::new();
    for o in outcomes {
        match o? {
            Outcome::Kept(b) => {
                let (d, r) = *b;
                dialogues.push(d);
                records.push(r);
            }
            Outcome::Dropped(reason) => *dropped.entry(reason.to_string()).or_default() += 1,
        }
    }
    Ok((dialogues, records, dropped))
}

/// `orig ∪ regens`, rejecting duplicate ids.
pub fn aggregate(orig: &[Dialogue], regens: &[Dialogue]) -> Result<Vec<Dialogue>, RegenError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(orig.len() + regens.len());
    for d in orig.iter().chain(regens) {
        if !seen.insert(d.id.as_str()) {
            return Err(RegenError::IdCollision(d.id.clone()));
        }
        out.push(d.clone());
    }
    Ok(out)
}

/// The full augmentation pass.
pub fn run_pipeline(
    orig: &[Dialogue],
    controller: &dyn HindsightController,
    standard: &dyn ForwardModel,
    hard: Option<&dyn ForwardModel>,
    reward: &dyn RewardModel,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, RegenError> {
    let (items, controller_failures, passes) = relabel_dataset(orig, controller, cfg)?;
    let (regens, records, dropped) = regenerate_and_label(orig, &items, standard, hard, reward, cfg)?;
    let aggregate = aggregate(orig, &regens)?;
    let stats = PipelineStats {
        orig: orig.len(),
        target_regens: (cfg.multiplier - 1) * orig.len(),
        relabeled: items.len(),
        controller_failures,
        passes,
        kept: regens.len(),
        hard_used: records.iter().filter(|r| r.used_hard_model).count(),
        dropped,
        aggregate: aggregate.len(),
        ratio: if orig.is_empty() { 0.0 } else { aggregate.len() as f64 / orig.len() as f64 },
    };
    tracing::info!(kept = stats.kept, dropped = stats.dropped_total(), ratio = stats.ratio, "regeneration finished");
    Ok(PipelineOutput { aggregate, regens, records, items, stats })
}

/// Per-property pass counts of a pipeline output against its source corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub regens: usize,
    /// First `relabel_turn` turns equal the parent's and the relabeled
    /// turn is the chosen alternative.
    pub prefix_preserved: usize,
    /// Agrees with the parent before the relabel turn and differs at it.
    pub one_edit: usize,
    pub reward_in_range: usize,
    /// Has exactly one record, and that record names it.
    pub record_matched: usize,
    pub ratio: f64,
    pub dropped: usize,
    /// Dropped share of the relabeled items.
    pub drop_rate: f64,
    /// `|ratio − multiplier|` is within the shortfall the drops explain.
    pub ratio_accounted: bool,
}

impl InvariantReport {
    pub fn all_hold(&self) -> bool {
        [self.prefix_preserved, self.one_edit, self.reward_in_range, self.record_matched]
            .iter()
            .all(|n| *n == self.regens)
            && self.ratio_accounted
    }
}

pub fn check_invariants(orig: &[Dialogue], out: &PipelineOutput, cfg: &PipelineConfig) -> InvariantReport {
    let parents: HashMap<&str, &Dialogue> = orig.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut records: HashMap<&str, Vec<&RegenRecord>> = HashMap::new();
    for r in &out.records {
        records.entry(r.completion_id.as_str()).or_default().push(r);
    }
    let mut rep = InvariantReport { regens: out.regens.len(), ratio: out.stats.ratio, ..Default::default() };
    for d in &out.regens {
        let rec = records.get(d.id.as_str()).filter(|v| v.len() == 1).map(|v| v[0]);
        if rec.is_some_and(|r| Some(&r.parent_id) == d.parent_id.as_ref() && Some(r.relabel_turn) == d.relabel_turn) {
            rep.record_matched += 1;
        }
        if d.reward.is_some_and(|r| d.domain.reward_in_range(r)) {
            rep.reward_in_range += 1;
        }
        let (Some(parent), Some(t)) = (d.parent_id.as_deref().and_then(|p| parents.get(p)), d.relabel_turn) else {
            continue;
        };
        if t >= d.turns.len() || t >= parent.turns.len() {
            continue;
        }
        let same_before = d.turns[..t].iter().zip(&parent.turns[..t]).all(|(a, b)| a.same_content(b));
        let alt = rec.map(|r| &r.chosen_proposal.alternative);
        if same_before && alt == Some(&d.turns[t].tokens) {
            rep.prefix_preserved += 1;
        }
        if same_before && !d.turns[t].same_content(&parent.turns[t]) {
            rep.one_edit += 1;
        }
    }
    rep.dropped = out.stats.dropped_total();
    let relabeled = out.stats.relabeled.max(1);
    rep.drop_rate = rep.dropped as f64 / relabeled as f64;
    if !orig.is_empty() {
        let shortfall = (out.stats.target_regens - out.stats.kept) as f64 / orig.len() as f64;
        let expected = cfg.multiplier as f64 - shortfall;
        rep.ratio_accounted = (rep.ratio - expected).abs() < 1e-9 && out.stats.kept + rep.dropped <= out.stats.target_regens;
    }
    rep
}

/// Generates `n` labeled dialogues from empty prefixes. Aborts when more
/// than half fail; returns the kept dialogues and the failure count.
pub fn generate_scratch(
    model: &dyn ForwardModel,
    reward: &dyn RewardModel,
    domain: Domain,
    n: usize,
    seed: u64,
) -> Result<(Vec<Dialogue>, usize), RegenError> {
    let results: Vec<Option<Dialogue>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let mut d = Dialogue::new(format!("scratch-{i:06}"), domain, Source::Scratch);
            d.meta = model.sample_meta(derive_seed(s, 1));
            let mut done = model.complete(&d, domain.turn_limit(), derive_seed(s, 2)).ok()?;
            done.reward = Some(reward.label(&done).ok()?);
            Some(done)
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    if failed * 2 > n {
        return Err(RegenError::TooManyFailures { failed, total: n });
    }
    Ok((results.into_iter().flatten().collect(), failed))
}

/// Offline RL on scratch-generated dialogues alone.
pub fn train_zeroshot(
    model: &dyn ForwardModel,
    reward: &dyn RewardModel,
    domain: Domain,
    n: usize,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, Vec<Dialogue>), RegenError> {
    let (scratch, failed) = generate_scratch(model, reward, domain, n, derive_seed(cfg.seed, 0x5C7A))?;
    tracing::info!(generated = scratch.len(), failed, "scratch corpus ready");
    let ckpt = train_value_based(Method::Zeroshot, &scratch, cfg)?;
    Ok((ckpt, scratch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regen::{CountForwardModel, ForwardModelSpec, KnnRewardModel, RewardModelSpec};
    use crate::vocab::{AgentAction, UserResponse};

    struct FixedController;

    impl HindsightController for FixedController {
        fn propose(&self, d: &Dialogue, turn: usize, n: usize, _seed: u64) -> Result<Vec<HindsightProposal>, RegenError> {
            if d.id == "broken" {
                return Err(RegenError::NoProposals);
            }
            let original = d.turns[turn].tokens.clone();
            Ok(AgentAction::ALL
                .iter()
                .map(|a| vec![a.token()])
                .filter(|t| *t != original)
                .take(n)
                .map(|alternative| HindsightProposal {
                    prefix: d.prefix(turn, crate::vocab::MICRO_EOS).unwrap(),
                    original_utterance: original.clone(),
                    alternative,
                    alternative_text: String::new(),
                    critique: String::new(),
                })
                .collect())
        }
    }

    fn corpus(n: usize) -> Vec<Dialogue> {
        (0..n)
            .map(|i| {
                let mut d = Dialogue::new(format!("d{i:03}"), Domain::Persuasion, Source::Orig);
                let steps = [
                    (AgentAction::Greet, UserResponse::Neutral),
                    (AgentAction::LogicalAppeal, UserResponse::ALL[i % 6]),
                    (AgentAction::AskSmall, UserResponse::Positive),
                    (AgentAction::Close, UserResponse::Question),
                ];
                for (a, r) in steps {
                    d.turns.push(Turn::agent(vec![a.token()]));
                    d.turns.push(Turn::user(vec![r.token()]));
                }
                d.reward = Some((i % 5) as f64 * 0.5);
                d
            })
            .collect()
    }

    fn models(c: &[Dialogue]) -> (CountForwardModel, CountForwardModel, KnnRewardModel) {
        (
            CountForwardModel::fit(c, ForwardModelSpec::standard()).unwrap(),
            CountForwardModel::fit(c, ForwardModelSpec::hard()).unwrap(),
            KnnRewardModel::fit(c, RewardModelSpec::knn(3)).unwrap(),
        )
    }

    #[test]
    fn multiplier_one_requests_nothing() {
        let c = corpus(10);
        let cfg = PipelineConfig { multiplier: 1, ..Default::default() };
        assert!(relabel_dataset(&c, &FixedController, &cfg).unwrap().0.is_empty());
    }

    #[test]
    fn relabeling_is_deterministic_and_skips_failures() {
        let mut c = corpus(20);
        c[3].id = "broken".into();
        let cfg = PipelineConfig { seed: 9, ..Default::default() };
        let (a, fails, _) = relabel_dataset(&c, &FixedController, &cfg).unwrap();
        let (b, _, _) = relabel_dataset(&c, &FixedController, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 80);
        assert!(fails > 0);
        assert!(a.iter().all(|i| i.relabel_turn != 0 && i.parent_id != "broken"));
        let ids: HashSet<String> = a.iter().map(|i| i.regen_id()).collect();
        assert_eq!(ids.len(), a.len());
    }

    #[test]
    fn hard_probability_extremes() {
        let c = corpus(12);
        let (std_m, hard_m, rm) = models(&c);
        for (p, all_hard) in [(0.0, false), (1.0, true)] {
            let cfg = PipelineConfig { p_hard: p, multiplier: 2, ..Default::default() };
            let out = run_pipeline(&c, &FixedController, &std_m, Some(&hard_m), &rm, &cfg).unwrap();
            assert!(!out.regens.is_empty());
            assert!(out.regens.iter().all(|d| (d.source == Source::RegenHard) == all_hard));
            assert!(out.records.iter().all(|r| r.used_hard_model == all_hard));
        }
        let cfg = PipelineConfig { p_hard: 0.5, ..Default::default() };
        assert!(matches!(
            regenerate_and_label(&c, &[], &std_m, None, &rm, &cfg),
            Err(RegenError::Config(_))
        ));
    }

    #[test]
    fn aggregate_identity_and_collisions() {
        let c = corpus(5);
        assert_eq!(aggregate(&c, &[]).unwrap(), c);
        assert!(matches!(aggregate(&c, &c[..1]), Err(RegenError::IdCollision(_))));
    }

    #[test]
    fn scratch_dialogues_have_no_parent() {
        let c = corpus(12);
        let (std_m, _, rm) = models(&c);
        let (s, failed) = generate_scratch(&std_m, &rm, Domain::Persuasion, 30, 1).unwrap();
        assert_eq!(s.len() + failed, 30);
        assert!(s.iter().all(|d| d.source == Source::Scratch && d.parent_id.is_none() && d.reward.is_some()));
    }
}
