//! Solves a micro-world exactly and compares the scripted behavior
//! policies against the oracle.
//!
//!     cargo run --release --example micro_world -- counseling

use hindsight::dialogue::Domain;
use hindsight::eval::{format_table, run_sim_eval, EvalConfig, OraclePolicy, ScriptPolicy};
use hindsight::microworld::{OracleSolution, Script, SimConfig, World};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain: Domain = std::env::args().nth(1).as_deref().unwrap_or("persuasion").parse()?;
    let world = World::new(SimConfig::for_domain(domain))?;
    let oracle = OracleSolution::solve(&world, 1.0)?;
    println!("{domain}: optimal expected reward {:.3}", oracle.optimal_mean(&world)?);

    let cfg = EvalConfig { seed: 7, ..Default::default() };
    let mut reports = vec![run_sim_eval(&OraclePolicy(&oracle), &world, &cfg, Some(&oracle))?];
    for script in Script::ALL {
        reports.push(run_sim_eval(&ScriptPolicy { script, epsilon: 0.1 }, &world, &cfg, Some(&oracle))?);
    }
    println!("{}", format_table(&reports));
    Ok(())
}
