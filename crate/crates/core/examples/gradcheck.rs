//! Finite-difference check of the Q and V loss gradients.
//!
//!     cargo run --release --example gradcheck -- 500

use hindsight::microworld::rng_from;
use hindsight::rl::check_loss_instances;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(100), |s| s.parse())?;
    let report = check_loss_instances(n, &mut rng_from(1));
    println!("{} checks, max relative error {:.3e} ({})", report.instances, report.max_relative_error, report.worst);
    Ok(())
}
