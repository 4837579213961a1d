//! Renders the hindsight-critique prompt for a simulated dialogue and, when
//! `HRL_LLM_BASE_URL` names an OpenAI-compatible endpoint, asks it for the
//! three critiques.
//!
//!     HRL_LLM_BASE_URL=http://localhost:8000/v1 cargo run --example llm_prompts

use hindsight::dialogue::Domain;
use hindsight::llm::{parse_hindsight, render, render_dialogue, ChatClient, EndpointConfig, LlmController, TemplateId};
use hindsight::microworld::{BehaviorPolicy, SimConfig, World};
use std::collections::BTreeMap;
use std::sync::Arc;

const SAMPLE_OUTPUT: &str = include_str!("../tests/fixtures/prompts/hindsight_counseling.output.txt");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = World::new(SimConfig::persuasion())?;
    let d = BehaviorPolicy::from_id("mixture", 0.1)?.collect(&world, 1, 4, "demo-").remove(0);
    let text = render_dialogue(&d);
    let ex = render(TemplateId::HindsightDonation, &BTreeMap::from([("dialogue".to_string(), text)]))?;
    for m in &ex.messages {
        println!("--- {:?}\n{}", m.role, m.content);
    }

    println!("--- parsed sample critique output");
    for t in parse_hindsight(SAMPLE_OUTPUT)? {
        println!("* {}\n  -> {}", t.original, t.replacement);
    }

    if let Ok(base_url) = std::env::var("HRL_LLM_BASE_URL") {
        let model = std::env::var("HRL_LLM_MODEL").unwrap_or_else(|_| EndpointConfig::default().model);
        let client = ChatClient::new(EndpointConfig { base_url, model, ..Default::default() })?;
        for (turn, t) in LlmController::new(Arc::new(client), Domain::Persuasion).critique(&d)? {
            println!("turn {turn}: {}", t.replacement);
        }
    }
    Ok(())
}
