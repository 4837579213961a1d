//! Trains the hindsight agent and the SFT baseline on one corpus and runs
//! the paired simulated evaluation.
//!
//!     cargo run --release --example train_and_eval

use hindsight::eval::{compare_agents, format_comparison, format_table, run_sim_eval, EvalConfig, Named};
use hindsight::experiment::{behavior_corpus, ExperimentConfig, RegenModels};
use hindsight::microworld::{BehaviorPolicy, OracleSolution};
use hindsight::rl::{train_ilql, train_sft};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::for_domain(hindsight::dialogue::Domain::Persuasion, 1).seeded();
    let world = cfg.world()?;
    let orig = behavior_corpus(&world, &BehaviorPolicy::from_id("mixture", 0.1)?, cfg.orig_dialogues, 1);
    let out = RegenModels::fit(&world, &orig, cfg.knn_k)?.run(&orig, &cfg.pipeline)?;

    let hrl = train_ilql(&out.aggregate, &cfg.train)?;
    let sft = train_sft(&orig, &cfg.train)?;
    let oracle = OracleSolution::solve(&world, 1.0)?;
    let eval = EvalConfig { seed: 9, ..cfg.eval.clone() };
    let reports = vec![
        run_sim_eval(&Named("hrl".into(), &hrl), &world, &eval, Some(&oracle))?,
        run_sim_eval(&Named("sft".into(), &sft), &world, &eval, Some(&oracle))?,
    ];
    println!("{}", format_table(&reports));
    println!("{}", format_comparison(&compare_agents(&reports)?));
    Ok(())
}
