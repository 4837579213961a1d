//! Synthetic persuasion and counseling worlds with scripted behavior
//! policies and an exact dynamic-programming oracle.

pub mod behavior;
pub mod belief;
pub mod config;
pub mod oracle;
pub mod sim;
pub mod world;

pub use behavior::{script_probs, BehaviorError, BehaviorPolicy, Script, Visible};
pub use config::{Bucket, ConfigError, PersonaName, SimConfig};
pub use oracle::{FiniteMdp, OracleError, OracleSolution, TabularMdp, ValueSolution};
pub use sim::{derive_seed, derive_seed_str, rng_from, SimError, SimulatorState};
pub use world::{quantize_donation, Hidden, World};
