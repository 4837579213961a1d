//! Parsers for model outputs in the formats the templates request.

use super::LlmError;
use crate::dialogue::Domain;
use regex::Regex;
use std::sync::LazyLock;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CritiqueTriple {
    pub original: String,
    pub critique: String,
    pub replacement: String,
}

static ITEM_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*\d+\.[ \t]*").unwrap());
static ORIGINAL_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""\s*;"#).unwrap());
static REPLACEMENT_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#";\s*""#).unwrap());
static INTENSITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Final Emotional Intensity:\s*(-?[0-9]+(?:\.[0-9]+)?)").unwrap());
static AMOUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Final Donation Amount:\s*\$?(-?[0-9]*\.?[0-9]+)").unwrap());
static SPEAKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(AI|H):\s?(.*)$").unwrap());

/// Splits a numbered critique list into `(original, critique, replacement)`
/// triples. Items end with `/` (optional on the last); the quoted spans may
/// contain `;`. Malformed items are skipped; at most three are returned.
pub fn parse_hindsight(output: &str) -> Result<Vec<CritiqueTriple>, LlmError> {
    let starts: Vec<_> = ITEM_START.find_iter(output).collect();
    let mut triples = Vec::new();
    for (i, m) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(output.len(), |n| n.start());
        if let Some(t) = parse_item(&output[m.end()..end]) {
            triples.push(t);
        }
        if triples.len() == 3 {
            break;
        }
    }
    if triples.is_empty() {
        return Err(LlmError::Parse("no well-formed critique item".into()));
    }
    Ok(triples)
}

fn parse_item(item: &str) -> Option<CritiqueTriple> {
    let body = item.trim();
    let body = body.strip_suffix('/').unwrap_or(body).trim_end();
    let body = body.strip_prefix('"')?;
    let body = body.strip_suffix('"')?;
    let orig_end = ORIGINAL_END.find(body)?;
    let original = &body[..orig_end.start()];
    let rest = &body[orig_end.end()..];
    let rep = REPLACEMENT_START.find_iter(rest).last()?;
    let critique = rest[..rep.start()].trim();
    let replacement = &rest[rep.end()..];
    Some(CritiqueTriple { original: original.to_string(), critique: critique.to_string(), replacement: replacement.to_string() })
}

/// Writes triples in the list format the hindsight prompts request.
pub fn serialize_triples(triples: &[CritiqueTriple]) -> String {
    triples
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. \"{}\";{};\"{}\"/", i + 1, t.original, t.critique, t.replacement))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RewardParse {
    /// Counseling: final emotional intensity, 1–5.
    FinalIntensity(u8),
    /// Donation step 1: whether the dialogue is unfinished.
    Unfinished(bool),
    /// Donation step 2: amount in [0, 2].
    Amount(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardStep {
    Counseling,
    DonationFinished,
    DonationAmount,
}

impl RewardStep {
    pub fn for_domain(domain: Domain) -> &'static [RewardStep] {
        match domain {
            Domain::Counseling => &[RewardStep::Counseling],
            Domain::Persuasion => &[RewardStep::DonationFinished, RewardStep::DonationAmount],
        }
    }
}

/// Reads the answer line of a reward prompt. Out-of-range values are errors,
/// never clamped.
pub fn parse_reward(output: &str, step: RewardStep) -> Result<RewardParse, LlmError> {
    match step {
        RewardStep::Counseling => {
            let c = INTENSITY.captures(output).ok_or_else(|| LlmError::Parse("no `Final Emotional Intensity:` line".into()))?;
            let v: f64 = c[1].parse().map_err(|_| LlmError::Parse(format!("bad intensity `{}`", &c[1])))?;
            if v.fract() != 0.0 || !(1.0..=5.0).contains(&v) {
                return Err(LlmError::OutOfRange(v));
            }
            Ok(RewardParse::FinalIntensity(v as u8))
        }
        RewardStep::DonationFinished => {
            let text = output.trim().to_ascii_lowercase();
            let text = text.strip_prefix("unfinished:").map_or(text.as_str(), str::trim_start);
            if text.starts_with("yes") {
                Ok(RewardParse::Unfinished(true))
            } else if text.starts_with("no") {
                Ok(RewardParse::Unfinished(false))
            } else {
                Err(LlmError::Parse(format!("expected yes/no, got `{}`", output.trim())))
            }
        }
        RewardStep::DonationAmount => {
            let c = AMOUNT.captures(output).ok_or_else(|| LlmError::Parse("no `Final Donation Amount:` line".into()))?;
            let v: f64 = c[1].parse().map_err(|_| LlmError::Parse(format!("bad amount `{}`", &c[1])))?;
            if !(0.0..=2.0).contains(&v) {
                return Err(LlmError::OutOfRange(v));
            }
            Ok(RewardParse::Amount(v))
        }
    }
}

/// Splits `AI:` / `H:` lines of a generated completion. Lines without a
/// speaker tag continue the previous utterance; `...` elisions are dropped.
pub fn parse_dialogue_lines(output: &str) -> Vec<(bool, String)> {
    let mut out: Vec<(bool, String)> = Vec::new();
    for line in output.lines() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.trim() == "..." {
            continue;
        }
        match SPEAKER.captures(line) {
            Some(c) => out.push((&c[1] == "AI", c[2].to_string())),
            None => {
                if let Some(last) = out.last_mut() {
                    last.1.push(' ');
                    last.1.push_str(line.trim());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_item() {
        let t = parse_hindsight("1. \"a\";b;\"c\"/").unwrap();
        assert_eq!(t, vec![CritiqueTriple { original: "a".into(), critique: "b".into(), replacement: "c".into() }]);
    }

    #[test]
    fn semicolons_inside_quotes() {
        let t = parse_hindsight("1. \"x; y\";crit;\"p; q\"/\n2. \"m\"; n ; \"o\"").unwrap();
        assert_eq!(t[0].original, "x; y");
        assert_eq!(t[0].replacement, "p; q");
        assert_eq!(t[1].critique, "n");
    }

    #[test]
    fn no_items_is_an_error() {
        assert!(parse_hindsight("I cannot help with that.").is_err());
        assert!(parse_hindsight("1. no quotes here").is_err());
    }

    #[test]
    fn reward_lines() {
        assert_eq!(parse_reward("Final Emotional Intensity: 2", RewardStep::Counseling).unwrap(), RewardParse::FinalIntensity(2));
        assert!(matches!(parse_reward("Final Emotional Intensity: 7", RewardStep::Counseling), Err(LlmError::OutOfRange(_))));
        assert_eq!(parse_reward("Final Donation Amount: 1.0", RewardStep::DonationAmount).unwrap(), RewardParse::Amount(1.0));
        assert!(matches!(parse_reward("Final Donation Amount: 3.0", RewardStep::DonationAmount), Err(LlmError::OutOfRange(_))));
        assert_eq!(parse_reward("No", RewardStep::DonationFinished).unwrap(), RewardParse::Unfinished(false));
        assert_eq!(parse_reward("Unfinished: Yes", RewardStep::DonationFinished).unwrap(), RewardParse::Unfinished(true));
        assert!(parse_reward("maybe", RewardStep::DonationFinished).is_err());
    }

    #[test]
    fn dialogue_lines() {
        let lines = parse_dialogue_lines("H: hi\nAI: hello\nthere\n...\nH: bye");
        assert_eq!(lines, vec![(false, "hi".into()), (true, "hello there".into()), (false, "bye".into())]);
    }
}
