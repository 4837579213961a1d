use hindsight::dialogue::{validate_corpus, Dialogue, Domain, Source, Turn};
use hindsight::experiment::{behavior_corpus, ExperimentConfig, RegenModels};
use hindsight::microworld::{BehaviorPolicy, SimConfig, World};
use hindsight::regen::{
    check_invariants, generate_scratch, HindsightController, KnnRewardModel, PipelineConfig, RewardModel,
    RewardModelSpec,
};
use hindsight::vocab::{AgentAction, UserResponse, Vocabulary};

fn corpus(domain: Domain, n: usize, seed: u64) -> (World, Vec<Dialogue>) {
    let world = ExperimentConfig::for_domain(domain, 0).world().unwrap();
    let policy = BehaviorPolicy::from_id("mixture", 0.1).unwrap();
    let orig = behavior_corpus(&world, &policy, n, seed);
    (world, orig)
}

#[test]
fn skeptical_large_ask_is_relabeled_to_addressing_the_concern() {
    let world = World::new(SimConfig::persuasion()).unwrap();
    let models = RegenModels::fit(&world, &corpus(Domain::Persuasion, 200, 1).1, 10).unwrap();
    let mut d = Dialogue::new("skeptic", Domain::Persuasion, Source::Orig);
    let steps = [
        (AgentAction::Greet, UserResponse::Neutral),
        (AgentAction::LogicalAppeal, UserResponse::ObjectionWaste),
        (AgentAction::AskLarge, UserResponse::Negative),
        (AgentAction::Close, UserResponse::Negative),
    ];
    for (a, r) in steps {
        d.turns.push(Turn::agent(vec![a.token()]));
        d.turns.push(Turn::user(vec![r.token()]));
    }
    let props = models.controller.propose(&d, 4, 3, 0).unwrap();
    assert_eq!(props[0].alternative, vec![AgentAction::AddressConcern.token()]);
}

#[test]
fn pipeline_invariants_hold_on_a_hundred_regenerations() {
    for domain in [Domain::Persuasion, Domain::Counseling] {
        let (world, orig) = corpus(domain, 1000, 2);
        let models = RegenModels::fit(&world, &orig, 10).unwrap();
        let sub = &orig[..25];
        let cfg = PipelineConfig { seed: 3, ..Default::default() };
        let out = models.run(sub, &cfg).unwrap();
        let rep = check_invariants(sub, &out, &cfg);
        assert_eq!(out.stats.relabeled, 100);
        assert!(rep.all_hold(), "{domain}: {rep:?}");
        assert!(rep.drop_rate < 0.05, "{domain}: {rep:?}");
        assert!(validate_corpus(&out.aggregate, &Vocabulary::micro()).is_clean());
    }
}

#[test]
fn full_scale_drop_rate_and_ratio() {
    let (world, orig) = corpus(Domain::Persuasion, 1000, 4);
    let models = RegenModels::fit(&world, &orig, 10).unwrap();
    let cfg = PipelineConfig { seed: 5, ..Default::default() };
    let out = models.run(&orig, &cfg).unwrap();
    let rep = check_invariants(&orig, &out, &cfg);
    assert!(rep.all_hold(), "{rep:?}");
    assert!(rep.drop_rate < 0.05, "{rep:?}");
    assert!((out.stats.ratio - 5.0).abs() <= 5.0 * 0.05);
}

#[test]
fn hard_model_completions_score_lower() {
    let (world, orig) = corpus(Domain::Persuasion, 1000, 6);
    let models = RegenModels::fit(&world, &orig, 10).unwrap();
    let score = |m: &dyn hindsight::regen::ForwardModel| {
        let (ds, _) = generate_scratch(m, &models.reward, Domain::Persuasion, 500, 7).unwrap();
        let mut r: Vec<f64> = ds.iter().map(|d| d.reward.unwrap()).collect();
        r.sort_by(f64::total_cmp);
        r
    };
    let (std, hard) = (score(&models.standard), score(&models.hard));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&hard) < mean(&std), "hard {} vs standard {}", mean(&hard), mean(&std));
    // Empirical CDF of the hard model lies weakly above the standard one.
    let cdf = |v: &[f64], x: f64| v.partition_point(|r| *r <= x) as f64 / v.len() as f64;
    for x in [0.0, 0.5, 1.0, 1.5] {
        assert!(cdf(&hard, x) >= cdf(&std, x), "at {x}: {} < {}", cdf(&hard, x), cdf(&std, x));
    }
}

#[test]
fn proxy_reward_error_is_below_the_quantization_step() {
    for (domain, step) in [(Domain::Persuasion, 0.5), (Domain::Counseling, 1.0)] {
        let (_, train) = corpus(domain, 1000, 8);
        let (_, held) = corpus(domain, 200, 9);
        let model = KnnRewardModel::fit(&train, RewardModelSpec::knn(10)).unwrap();
        let mae = held.iter().map(|d| (model.label(d).unwrap() - d.reward.unwrap()).abs()).sum::<f64>() / 200.0;
        assert!(mae < step, "{domain}: MAE {mae}");
    }
}
