//! Hindsight regeneration on a behavior corpus: relabel one agent turn per
//! dialogue, complete the rest with the forward model, label the reward.
//!
//!     cargo run --release --example regen_pipeline -- 1000

use hindsight::dialogue::Domain;
use hindsight::experiment::{behavior_corpus, ExperimentConfig, RegenModels};
use hindsight::microworld::BehaviorPolicy;
use hindsight::regen::{check_invariants, PipelineConfig};
use hindsight::vocab::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(1000), |s| s.parse())?;
    let world = ExperimentConfig::for_domain(Domain::Persuasion, 0).world()?;
    let orig = behavior_corpus(&world, &BehaviorPolicy::from_id("mixture", 0.1)?, n, 1);
    let models = RegenModels::fit(&world, &orig, 10)?;
    let cfg = PipelineConfig { seed: 2, ..Default::default() };
    let out = models.run(&orig, &cfg)?;
    println!("{:#?}", out.stats);
    println!("{:?}", check_invariants(&orig, &out, &cfg));

    let vocab = Vocabulary::micro();
    let show = |turns: &[hindsight::dialogue::Turn]| {
        turns.iter().map(|t| vocab.get(t.tokens[0]).map(|x| x.surface.clone()).unwrap_or_default()).collect::<Vec<_>>().join(" ")
    };
    let (regen, rec) = (&out.regens[0], &out.records[0]);
    let parent = orig.iter().find(|d| d.id == rec.parent_id).expect("parent exists");
    println!("\nparent  (reward {:?}): {}", parent.reward, show(&parent.turns));
    println!("regen   (reward {:?}, edited turn {}): {}", regen.reward, rec.relabel_turn, show(&regen.turns));
    Ok(())
}
