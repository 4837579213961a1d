//! Chat server with two scripted agents, for trying the REST API without
//! trained checkpoints.
//!
//!     cargo run --release --example serve_scripted
//!     curl -X POST localhost:8080/api/agents/persuader/sessions

use hindsight::dialogue::Domain;
use hindsight::eval::Selection;
use hindsight::microworld::Script;
use hindsight::serve::{http, system_clock, AgentPolicy, Realizer, ServeAgent, ServeConfig, ServeState};
use hindsight::text::TextMapper;
use std::sync::Arc;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let agent = |id: &str, domain, script| ServeAgent {
        id: id.into(),
        domain,
        policy: AgentPolicy::Script { script, epsilon: 0.0 },
        selection: Selection::Greedy,
    };
    let agents = vec![
        agent("persuader", Domain::Persuasion, Script::GreeterThenAsk),
        agent("counselor", Domain::Counseling, Script::EmotionalOnly),
    ];
    let cfg = ServeConfig { seed: 1, data_dir: "serve-demo".into(), ..Default::default() };
    let state = ServeState::new(cfg, agents, Realizer::bundled(), TextMapper::bundled(), system_clock())?;
    println!("listening on 127.0.0.1:8080");
    http::serve(Arc::new(state), "127.0.0.1:8080").await?;
    Ok(())
}
