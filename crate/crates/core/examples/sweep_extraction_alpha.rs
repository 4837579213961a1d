//! Evaluates one trained hindsight agent at several extraction inverse
//! temperatures α. α = 0 recovers the cloned behavior policy.
//!
//!     cargo run --release --example sweep_extraction_alpha -- 1

use hindsight::dialogue::Domain;
use hindsight::eval::{format_table, run_sim_eval, Named};
use hindsight::experiment::{behavior_corpus, ExperimentConfig, RegenModels};
use hindsight::microworld::{BehaviorPolicy, OracleSolution};
use hindsight::rl::train_ilql;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let cfg = ExperimentConfig::for_domain(Domain::Persuasion, seed).seeded();
    let world = cfg.world()?;
    let orig = behavior_corpus(&world, &BehaviorPolicy::from_id("mixture", 0.1)?, cfg.orig_dialogues, seed);
    let out = RegenModels::fit(&world, &orig, cfg.knn_k)?.run(&orig, &cfg.pipeline)?;
    let hrl = train_ilql(&out.aggregate, &cfg.train)?;
    let oracle = OracleSolution::solve(&world, 1.0)?;

    let mut reports = Vec::new();
    for alpha in [0.0, 1.0, 3.0, 10.0, 30.0, 100.0] {
        let ck = hrl.with_extraction_alpha(alpha);
        reports.push(run_sim_eval(&Named(format!("alpha={alpha}"), &ck), &world, &cfg.eval, Some(&oracle))?);
    }
    println!("{}", format_table(&reports));
    Ok(())
}
