use hindsight::llm::*;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::path::PathBuf;

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn bindings(id: TemplateId) -> BTreeMap<String, String> {
    serde_json::from_str(&fixture(&format!("{}.bindings.json", id.name()))).unwrap()
}

#[test]
fn rendered_prompts_match_goldens_byte_for_byte() {
    for id in TemplateId::ALL {
        let ex = render(id, &bindings(id)).unwrap();
        assert_eq!(ex.messages.len(), 2);
        assert_eq!(ex.messages[0].content.as_bytes(), fixture(&format!("{}.system.txt", id.name())).as_bytes(), "{} system", id.name());
        assert_eq!(ex.messages[1].content.as_bytes(), fixture(&format!("{}.user.txt", id.name())).as_bytes(), "{} user", id.name());
    }
}

#[test]
fn rendering_leaves_no_placeholders() {
    for id in TemplateId::ALL {
        let t = id.template();
        let b: BTreeMap<String, String> = t.placeholders().iter().map(|p| (p.to_string(), "x".to_string())).collect();
        let user = t.render_user(&b).unwrap();
        assert!(!user.contains('{') && !user.contains('}'), "{}", id.name());
    }
}

#[test]
fn every_placeholder_is_required() {
    for id in TemplateId::ALL {
        let full = bindings(id);
        for name in id.template().placeholders() {
            let mut b = full.clone();
            b.remove(name);
            assert!(matches!(render(id, &b), Err(LlmError::MissingBinding { .. })), "{} without {name}", id.name());
        }
    }
}

#[test]
fn template_ids_round_trip_through_names() {
    for id in TemplateId::ALL {
        assert_eq!(id.name().parse::<TemplateId>().unwrap(), id);
    }
    assert!("nope".parse::<TemplateId>().is_err());
}

#[test]
fn counseling_forward_prompt_carries_the_budget() {
    let user = fixture("forward_counseling.user.txt");
    assert!(user.contains("end before 30 utterances total, so the completion should contain no more than 19 lines"));
    let reward = fixture("reward_counseling.user.txt");
    assert!(reward.contains("\"Final Emotional Intensity: <number>\""));
}

#[test]
fn hindsight_sample_outputs_parse_to_three_triples() {
    let c = parse_hindsight(&fixture("hindsight_counseling.output.txt")).unwrap();
    assert_eq!(c.len(), 3);
    assert!(c[0].replacement.starts_with("It sounds like you're feeling really overwhelmed"));
    assert!(c[0].original.starts_with("I am sure they just want what is best"));
    assert!(c[2].critique.contains("\"make sure you do it,\""));
    let d = parse_hindsight(&fixture("hindsight_donation.output.txt")).unwrap();
    assert_eq!(d.len(), 3);
    assert!(d[1].replacement.contains("just $1"));
    assert!(d.iter().all(|t| t.original.starts_with("AI: ") && t.replacement.starts_with("AI: ")));
}

#[test]
fn reward_sample_outputs_parse() {
    assert_eq!(parse_reward(&fixture("reward_counseling.output.txt"), RewardStep::Counseling).unwrap(), RewardParse::FinalIntensity(2));
    assert_eq!(parse_reward(&fixture("reward_donation_step1.output.txt"), RewardStep::DonationFinished).unwrap(), RewardParse::Unfinished(false));
    assert_eq!(parse_reward(&fixture("reward_donation_step2.output.txt"), RewardStep::DonationAmount).unwrap(), RewardParse::Amount(1.0));
    assert_eq!(parse_reward("Final Emotional Intensity: 2", RewardStep::Counseling).unwrap(), RewardParse::FinalIntensity(2));
    assert_eq!(parse_reward("Final Donation Amount: 1.0", RewardStep::DonationAmount).unwrap(), RewardParse::Amount(1.0));
    assert!(matches!(parse_reward("Final Donation Amount: 3.0", RewardStep::DonationAmount), Err(LlmError::OutOfRange(_))));
}

#[test]
fn forward_sample_outputs_parse_to_alternating_lines() {
    let c = parse_dialogue_lines(&fixture("forward_counseling.output.txt"));
    assert_eq!(c.len(), 15);
    assert!(!c[0].0 && c[1].0);
    let d = parse_dialogue_lines(&fixture("forward_donation.output.txt"));
    assert_eq!(d.len(), 6);
    assert_eq!(d[5].1, "You are welcome!  Thank you!  Have a wonderful day!  Bye!");
}

fn quoted() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.;!?'$-]{0,40}"
}

fn critique() -> impl Strategy<Value = String> {
    "([a-zA-Z0-9,.!?'$-]([a-zA-Z0-9 ,.!?'$-]{0,38}[a-zA-Z0-9,.!?'$-])?)?"
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(items in prop::collection::vec((quoted(), critique(), quoted()), 1..=3)) {
        let triples: Vec<CritiqueTriple> = items
            .into_iter()
            .map(|(original, critique, replacement)| CritiqueTriple { original, critique, replacement })
            .collect();
        prop_assert_eq!(parse_hindsight(&serialize_triples(&triples)).unwrap(), triples);
    }
}
