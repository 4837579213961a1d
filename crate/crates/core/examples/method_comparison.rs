//! Full micro-world comparison of hindsight RL against the zero-shot, RFT
//! and SFT baselines, over one or more seeds.
//!
//!     cargo run --release --example method_comparison -- persuasion 1 2 3

use hindsight::dialogue::Domain;
use hindsight::eval::{format_comparison, format_table};
use hindsight::experiment::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let domain: Domain = args.next().as_deref().unwrap_or("persuasion").parse()?;
    let seeds: Vec<u64> = args.map(|s| s.parse()).collect::<Result<_, _>>()?;
    let seeds = if seeds.is_empty() { vec![1] } else { seeds };

    for seed in seeds {
        let cfg = ExperimentConfig { eval_hard_mix: true, ..ExperimentConfig::for_domain(domain, seed) };
        let out = run_experiment(&cfg)?;
        println!("== {domain} seed {seed} ({:.1}s)", out.timings.total);
        println!("{}", format_table(&out.reports));
        println!("{}", format_comparison(&out.comparison));
        for p in &out.probes {
            println!("probe {:<9} address_concern {:.3}  ask {:.3}", p.agent, p.address_concern_mass, p.ask_mass);
        }
        if let Some(h) = &out.hard_mix {
            println!("hard mix: hrl {:.3} (oracle fraction {:.3})", h.mean, h.oracle_fraction.unwrap_or(f64::NAN));
        }
        println!("pipeline: {:?}", out.pipeline);
        println!("hrl beats all baselines: {}", out.hrl_wins());
    }
    Ok(())
}
