//! Prompt templates for the language-model-backed regeneration components.
//!
//! Placeholders are written `{name}` and substituted in a single pass, so
//! braces inside bound values are never re-expanded.

use super::{ChatExchange, ChatMessage, LlmError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    HindsightCounseling,
    HindsightDonation,
    ForwardCounseling,
    ForwardDonation,
    RewardCounseling,
    RewardDonationStep1,
    RewardDonationStep2,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::HindsightCounseling,
        TemplateId::HindsightDonation,
        TemplateId::ForwardCounseling,
        TemplateId::ForwardDonation,
        TemplateId::RewardCounseling,
        TemplateId::RewardDonationStep1,
        TemplateId::RewardDonationStep2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::HindsightCounseling => "hindsight_counseling",
            TemplateId::HindsightDonation => "hindsight_donation",
            TemplateId::ForwardCounseling => "forward_counseling",
            TemplateId::ForwardDonation => "forward_donation",
            TemplateId::RewardCounseling => "reward_counseling",
            TemplateId::RewardDonationStep1 => "reward_donation_step1",
            TemplateId::RewardDonationStep2 => "reward_donation_step2",
        }
    }

    pub fn template(self) -> PromptTemplate {
        let (role_system, role_user) = match self {
            TemplateId::HindsightCounseling => (SYSTEM_HINDSIGHT_COUNSELING, USER_HINDSIGHT_COUNSELING),
            TemplateId::HindsightDonation => (SYSTEM_HINDSIGHT_DONATION, USER_HINDSIGHT_DONATION),
            TemplateId::ForwardCounseling => (SYSTEM_FORWARD_COUNSELING, USER_FORWARD_COUNSELING),
            TemplateId::ForwardDonation => (SYSTEM_FORWARD_DONATION, USER_FORWARD_DONATION),
            TemplateId::RewardCounseling => (SYSTEM_REWARD_COUNSELING, USER_REWARD_COUNSELING),
            TemplateId::RewardDonationStep1 => (SYSTEM_REWARD_DONATION, USER_REWARD_DONATION_STEP1),
            TemplateId::RewardDonationStep2 => (SYSTEM_REWARD_DONATION, USER_REWARD_DONATION_STEP2),
        };
        PromptTemplate { template_id: self, role_system, role_user }
    }
}

impl std::str::FromStr for TemplateId {
    type Err = LlmError;
    fn from_str(s: &str) -> Result<Self, LlmError> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| LlmError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub role_system: &'static str,
    pub role_user: &'static str,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for seg in split(self.role_user) {
            if let Segment::Slot(name) = seg {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    pub fn render_user(&self, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
        let mut out = String::with_capacity(self.role_user.len());
        for seg in split(self.role_user) {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None => return Err(LlmError::MissingBinding { template: self.template_id.name(), name: name.to_string() }),
                },
            }
        }
        Ok(out)
    }
}

/// Fills a template with `bindings` and wraps it as a system + user exchange
/// with the per-template default temperature.
pub fn render(id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<ChatExchange, LlmError> {
    let t = id.template();
    let user = t.render_user(bindings)?;
    let temperature = match id {
        TemplateId::HindsightCounseling
        | TemplateId::HindsightDonation
        | TemplateId::ForwardCounseling
        | TemplateId::ForwardDonation => 0.7,
        _ => 0.0,
    };
    Ok(ChatExchange {
        messages: vec![ChatMessage::system(t.role_system), ChatMessage::user(user)],
        temperature,
        max_tokens: 1024,
        model: String::new(),
    })
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn split(s: &'static str) -> Vec<Segment<'static>> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(open) = rest.find('{') {
        let Some(len) = rest[open + 1..].find('}') else { break };
        let name = &rest[open + 1..open + 1 + len];
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            out.push(Segment::Text(&rest[..open + 1]));
            rest = &rest[open + 1..];
            continue;
        }
        out.push(Segment::Text(&rest[..open]));
        out.push(Segment::Slot(name));
        rest = &rest[open + len + 2..];
    }
    out.push(Segment::Text(rest));
    out
}

const SYSTEM_HINDSIGHT_COUNSELING: &str = "You are an expert at mentoring supporters who work to provide emotional support to people dealing with problems in their lives.";

const USER_HINDSIGHT_COUNSELING: &str = concat!(
    "Below is a conversation between a supporter (\"AI:\") and a help-seeker (\"H:\"), who is requesting emotional support for a challenge that they are facing.\n",
    "\n",
    "{dialogue}\n",
    "\n",
    "Can you reference top 3 places in the dialogue where the supporter could have said something better to help?\n",
    "\n",
    "Have your answer be in a list of the following format:\n",
    "1. \"what the agent said in the conversation\";what the agent could have done better;\"what the agent should have said instead\"/\n",
    "2. \"what the agent said in the conversation\";what the agent could have done better;\"what the agent should have said instead\"/\n",
    "3. \"what the agent said in the conversation\";what the agent could have done better;\"what the agent should have said instead\"",
);

const SYSTEM_HINDSIGHT_DONATION: &str = "You are an expert in persuading people to donate to the charity that you work for, \"Save the Children\". You are trying to mentor workers in the charity to improve their persuasion skills.";

const USER_HINDSIGHT_DONATION: &str = concat!(
    "The below is a conversation between a charity worker (\"AI:\") and a potential donor (\"H:\"). The charity worker tries to convince the potential donor to make a donation to Save the Children, the charity that the worker represents.\n",
    "\n",
    "{dialogue}\n",
    "\n",
    "Can you reference top 3 places in the dialogue where the charity worker could have done something better to persuade the potential donor to donate (by line in the dialogue starting with \"AI:\")?\n",
    "\n",
    "Have your answer be in a list of the following format:\n",
    "1. \"what the agent said in the conversation\";what the agent could have done better;\"what the agent should have said instead\"/\n",
    "2. \"what the agent said in the conversation\";what the agent could have done better;\"what the agent should have said instead\"/\n",
    "3. \"what the agent said in the conversation\";what the agent could have done better;\"what the agent should have said instead\"",
);

const SYSTEM_FORWARD_COUNSELING: &str = "You are an expert at understanding how people think and respond in conversations about their emotional state. You are able to successfully predict how real people will respond based off of only a few lines of dialogue.";

const USER_FORWARD_COUNSELING: &str = concat!(
    "Below is a dialogue between a counselor (\"AI:\") and a person seeking help (\"H:\"). The person seeking help is currently undergoing {problem_type}, and specifically feels: {situation}. ",
    "Complete the below dialogue between the supporter and the help-seeker such that the generated responses match what each person had said in the prefix in linguistic style and semantics. ",
    "The dialogue should end before {utterance_budget} utterances total, so the completion should contain no more than {remaining_lines} lines of dialogue.\n",
    "\n",
    "{dialogue}",
);

const SYSTEM_FORWARD_DONATION: &str = "You are an expert at understanding how people think and respond when asked to donate to charities. You are able to successfully predict how real people will respond based off of only a few lines of dialogue.";

const USER_FORWARD_DONATION: &str = concat!(
    "Below is a prefix of a dialogue between a charity worker (\"AI:\") and potential donor (\"H:\"). The charity worker tries to convince the potential donor to make a donation to Save the Children, the charity that the worker represents. ",
    "Complete the dialogue so that the generated responses by the charity worker and potential donor are representative of what each person had said in the prefix in linguistic style and semantics. ",
    "The potential donor should make a clear decision where they either donate some amount between 0 and 2 dollars or decides to not donate anything. ",
    "The decision that the potential donor makes should be consistent with their behavior throughout the dialogue.\n",
    "\n",
    "{dialogue}",
);

const SYSTEM_REWARD_COUNSELING: &str = "You are an expert at analyzing conversations between a supporter and help-seeker, where the supporter provides emotional support to the help-seeker.";

// The curly quotes around AI:/H: are deliberate; this prompt differs from the
// others in that respect.
const USER_REWARD_COUNSELING: &str = concat!(
    "Below are {fewshot_count} completed dialogues between a supporter (\u{201c}AI:\u{201c}) and a help-seeker (\u{201c}H:\u{201c}), who is requesting emotional support for a challenge that they are facing. ",
    "Before and after each dialogue, the help-seeker rates how strong their negative emotion is on a Likert scale of 1-5 (5 being the most negative), so a lower rating for their final emotional intensity means that the supporter did a good job of addressing their problem.\n",
    "\n",
    "{fewshot_block}\n",
    "\n",
    "Lastly, here is a dialogue where the help-seeker has given their initial emotional intensity. Based on how effective the dialogue is, rate their final emotional intensity as a number between 1 to 5.\n",
    "\n",
    "{dialogue}\n",
    "Initial Emotional Intensity: {initial_intensity}\n",
    "\n",
    "What is the final emotional intensity? Give a number between 1 to 5 in the form of a line \"Final Emotional Intensity: <number>\". Do not provide any additional details.",
);

const SYSTEM_REWARD_DONATION: &str = "You are an expert accountant who is looking through conversations for donation record keeping.";

// "tries  to" keeps its double space.
const USER_REWARD_DONATION_STEP1: &str = concat!(
    "Below are {fewshot_count} completed dialogues between a charity worker (\"AI:\") and a potential donor (\"H:\") with a label indicating if the dialogue is unfinished. ",
    "In the dialogue, the charity worker tries  to convince the potential donor to make a donation to Save the Children, the charity that the worker represents. ",
    "The donor is usually donating a portion of the task payment of 2.0, but may donate more. ",
    "In the dialogue, the potential donor should commit to donating some amount, or at least choose to not donate anything. If not, then the dialogue is unfinished.\n",
    "\n",
    "At the end is an unlabelled dialogue also between a charity worker and potential donor. From the dialogue, identify if the dialogue is unfinished.\n",
    "\n",
    "{fewshot_block}\n",
    "\n",
    "{dialogue}\n",
    "\n",
    "In the dialogue, the potential donor should commit to donating some amount, or at least choose to not donate anything. If not, then the dialogue is unfinished. Is the dialogue unfinished? Answer yes/no.",
);

const USER_REWARD_DONATION_STEP2: &str = concat!(
    "Below are {fewshot_count} completed dialogues between a charity worker (\"AI:\") and a potential donor (\"H:\") with a labelled final donation amount. ",
    "In each dialogue charity worker tries to convince the potential donor to make a donation to Save the Children, the charity that the worker represents. ",
    "The donor is usually donating a portion of the task payment of 2.0, but may donate more.\n",
    "\n",
    "At the end is an unlabelled dialogue also between a charity worker and potential donor. ",
    "From the dialogue, identify how much the potential donor (\"H:\") decides to donate to the charity (0.0 is allowed) in the form of a line \"Final Donation Amount: <number>\".\n",
    "\n",
    "{fewshot_block}\n",
    "\n",
    "{dialogue}",
);
