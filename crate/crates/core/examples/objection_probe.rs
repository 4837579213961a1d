//! How much probability each agent puts on addressing a pending objection,
//! over states where the user has just objected.
//!
//!     cargo run --release --example objection_probe

use hindsight::eval::{behavior_probe, probe_states, Named, OraclePolicy};
use hindsight::experiment::{behavior_corpus, ExperimentConfig, RegenModels};
use hindsight::microworld::{BehaviorPolicy, OracleSolution};
use hindsight::rl::{train_ilql, train_sft};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::for_domain(hindsight::dialogue::Domain::Persuasion, 2).seeded();
    let world = cfg.world()?;
    let orig = behavior_corpus(&world, &BehaviorPolicy::from_id("mixture", 0.1)?, cfg.orig_dialogues, 1);
    let out = RegenModels::fit(&world, &orig, cfg.knn_k)?.run(&orig, &cfg.pipeline)?;
    let hrl = train_ilql(&out.aggregate, &cfg.train)?;
    let sft = train_sft(&orig, &cfg.train)?;
    let oracle = OracleSolution::solve(&world, 1.0)?;

    let states = probe_states(&world, 200, 3);
    for report in [
        behavior_probe(&OraclePolicy(&oracle), &states)?,
        behavior_probe(&Named("hrl".into(), &hrl), &states)?,
        behavior_probe(&Named("sft".into(), &sft), &states)?,
    ] {
        println!(
            "{:<7} address_concern {:.3} (argmax {:.0}%)  ask {:.3}",
            report.agent,
            report.address_concern_mass,
            100.0 * report.address_concern_argmax,
            report.ask_mass
        );
    }
    Ok(())
}
