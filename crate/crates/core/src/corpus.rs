//! Corpus files: JSONL dialogues, record sidecars, and importers for
//! externally formatted counseling and donation corpora.

use crate::dialogue::{Dialogue, Domain, Role, Source, Turn};
use crate::text::TextMapper;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Line { path: String, line: usize, source: serde_json::Error },
    #[error("import: {0}")]
    Import(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Line { path: path.display().to_string(), line: i + 1, source })?);
    }
    Ok(out)
}

/// Writes one JSON value per line; returns the content hash of the file.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<String, CorpusError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item)?;
        bytes.push(b'\n');
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(&bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(crate::hashing::sha256_hex(&bytes))
}

pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>, CorpusError> {
    read_jsonl(path)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: usize,
    /// `(record index, reason)` for every record that was skipped.
    pub skipped: Vec<(usize, String)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    N(f64),
    S(String),
}

impl Num {
    fn value(&self) -> Option<f64> {
        match self {
            Num::N(v) => Some(*v),
            Num::S(s) => s.trim().parse().ok(),
        }
    }
}

#[derive(Deserialize)]
struct EsconvRecord {
    #[serde(default)]
    problem_type: Option<String>,
    #[serde(default)]
    situation: Option<String>,
    #[serde(default)]
    emotion_type: Option<String>,
    survey_score: EsconvSurvey,
    dialog: Vec<EsconvUtterance>,
}

#[derive(Deserialize)]
struct EsconvSurvey {
    seeker: EsconvSeeker,
}

#[derive(Deserialize)]
struct EsconvSeeker {
    initial_emotion_intensity: Num,
    final_emotion_intensity: Num,
}

#[derive(Deserialize)]
struct EsconvUtterance {
    speaker: String,
    content: String,
    #[serde(default)]
    annotation: serde_json::Map<String, serde_json::Value>,
}

/// Appends an utterance, merging consecutive utterances by the same speaker
/// into one turn (one token per utterance).
fn push(turns: &mut Vec<Turn>, mapper: &TextMapper, role: Role, text: &str, annotation: Option<&str>) {
    let text = text.trim();
    if text.is_empty() {
        return;
    }
    let token = mapper.tokenize(role, text, annotation);
    match turns.last_mut() {
        Some(t) if t.role == role => {
            t.text.push(' ');
            t.text.push_str(text);
            t.tokens.push(token);
        }
        _ => turns.push(Turn::new(role, text, vec![token])),
    }
}

/// Imports a counseling corpus given as a JSON array of records with
/// `problem_type`, `situation`, `survey_score.seeker.{initial,final}_emotion_intensity`
/// and a `dialog` of `{speaker: seeker|supporter, content, annotation.strategy}`.
/// Reward is initial minus final intensity.
pub fn import_esconv(json: &str, mapper: &TextMapper, id_prefix: &str) -> Result<(Vec<Dialogue>, ImportReport), CorpusError> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(json)?;
    let mut report = ImportReport::default();
    let mut out = Vec::new();
    for (i, value) in raw.into_iter().enumerate() {
        let rec: EsconvRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push((i, e.to_string()));
                continue;
            }
        };
        let intensity = |n: &Num| n.value().filter(|v| v.fract() == 0.0 && (1.0..=5.0).contains(v)).map(|v| v as u8);
        let (Some(init), Some(fin)) = (intensity(&rec.survey_score.seeker.initial_emotion_intensity), intensity(&rec.survey_score.seeker.final_emotion_intensity)) else {
            report.skipped.push((i, "emotion intensities must be integers in 1..=5".into()));
            continue;
        };
        let mut d = Dialogue::new(format!("{id_prefix}{i:05}"), Domain::Counseling, Source::Orig);
        d.meta.problem_type = rec.problem_type;
        d.meta.situation = rec.situation;
        d.meta.initial_intensity = Some(init);
        if let Some(e) = rec.emotion_type {
            d.meta.extra.insert("emotion_type".into(), e.into());
        }
        for u in &rec.dialog {
            let role = match u.speaker.as_str() {
                "supporter" | "sys" | "agent" => Role::Agent,
                _ => Role::User,
            };
            let strategy = u.annotation.get("strategy").and_then(|s| s.as_str());
            push(&mut d.turns, mapper, role, &u.content, strategy);
        }
        if d.turns.is_empty() {
            report.skipped.push((i, "no utterances".into()));
            continue;
        }
        d.reward = Some(init as f64 - fin as f64);
        out.push(d);
    }
    report.imported = out.len();
    Ok((out, report))
}

#[derive(Deserialize)]
struct P4gRecord {
    #[serde(default, alias = "dialogue_id", alias = "B2")]
    id: Option<String>,
    #[serde(alias = "dialog", alias = "utterances")]
    turns: Vec<P4gUtterance>,
    #[serde(alias = "donation_amount", alias = "B6")]
    donation: Option<Num>,
}

#[derive(Deserialize)]
struct P4gUtterance {
    #[serde(alias = "speaker", alias = "B4")]
    role: serde_json::Value,
    #[serde(alias = "content", alias = "Unit")]
    text: String,
}

/// Imports a donation corpus: JSON lines (or one JSON array) of records with
/// an id, `turns` of `{role, text}` where the role is `persuader`/`ER`/`0`
/// for the agent and `persuadee`/`EE`/`1` for the user, and the persuadee's
/// `donation`. Donations outside [0, 2] are skipped rather than clamped.
pub fn import_p4g(text: &str, mapper: &TextMapper, id_prefix: &str) -> Result<(Vec<Dialogue>, ImportReport), CorpusError> {
    let values: Vec<serde_json::Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text)?
    } else {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?
    };
    let mut report = ImportReport::default();
    let mut out = Vec::new();
    for (i, value) in values.into_iter().enumerate() {
        let rec: P4gRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push((i, e.to_string()));
                continue;
            }
        };
        let Some(amount) = rec.donation.as_ref().and_then(Num::value) else {
            report.skipped.push((i, "missing donation".into()));
            continue;
        };
        if !Domain::Persuasion.reward_in_range(amount) {
            report.skipped.push((i, format!("donation {amount} outside [0, 2]")));
            continue;
        }
        let id = rec.id.map_or_else(|| format!("{id_prefix}{i:05}"), |s| format!("{id_prefix}{s}"));
        let mut d = Dialogue::new(id, Domain::Persuasion, Source::Orig);
        for u in &rec.turns {
            let role = match &u.role {
                serde_json::Value::Number(n) if n.as_u64() == Some(0) => Role::Agent,
                serde_json::Value::String(s) if matches!(s.as_str(), "persuader" | "ER" | "agent" | "0") => Role::Agent,
                _ => Role::User,
            };
            push(&mut d.turns, mapper, role, &u.text, None);
        }
        if d.turns.is_empty() {
            report.skipped.push((i, "no utterances".into()));
            continue;
        }
        d.reward = Some(amount);
        out.push(d);
    }
    report.imported = out.len();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{AgentAction, UserResponse, Vocabulary};

    #[test]
    fn jsonl_round_trip_preserves_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let line = r#"{"id":"a","domain":"persuasion","turns":[{"role":"agent","text":"hi","tokens":[0],"mood":"x"}],"meta":{"k":1},"reward":0.5,"source":"orig","parent_id":null,"relabel_turn":null,"extra_top":true}"#;
        std::fs::write(&path, format!("{line}\n\n")).unwrap();
        let ds = read_dialogues(&path).unwrap();
        assert_eq!(ds.len(), 1);
        let out = dir.path().join("sub/d.jsonl");
        write_jsonl(&out, &ds).unwrap();
        let back: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&out).unwrap().trim()).unwrap();
        assert_eq!(back["extra_top"], true);
        assert_eq!(back["turns"][0]["mood"], "x");
        assert_eq!(back["meta"]["k"], 1);
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"id\":1}\n").unwrap();
        assert!(matches!(read_dialogues(&path), Err(CorpusError::Line { line: 1, .. })));
    }

    #[test]
    fn esconv_records_import() {
        let json = r#"[{"problem_type":"academic pressure","situation":"exams","emotion_type":"anxiety",
            "survey_score":{"seeker":{"initial_emotion_intensity":"4","final_emotion_intensity":"2"}},
            "dialog":[{"speaker":"seeker","content":"hi"},{"speaker":"seeker","content":"I'm stressed"},
                      {"speaker":"supporter","content":"What is going on?","annotation":{"strategy":"Question"}},
                      {"speaker":"seeker","content":"thanks, that helps"}]},
            {"survey_score":{"seeker":{"initial_emotion_intensity":"9","final_emotion_intensity":"2"}},"dialog":[]}]"#;
        let (ds, report) = import_esconv(json, &TextMapper::bundled(), "esc-").unwrap();
        assert_eq!(report.imported, 1);
        assert_eq!(report.skipped.len(), 1);
        let d = &ds[0];
        assert_eq!(d.reward, Some(2.0));
        assert_eq!(d.turns.len(), 3);
        assert_eq!(d.turns[0].tokens.len(), 2);
        assert_eq!(d.turns[1].tokens, vec![AgentAction::Inquire.token()]);
        assert_eq!(d.turns[2].tokens, vec![UserResponse::Positive.token()]);
        assert!(crate::dialogue::validate_corpus(&ds, &Vocabulary::micro()).is_clean());
    }

    #[test]
    fn p4g_records_import() {
        let text = "{\"id\":\"x1\",\"turns\":[{\"role\":\"persuader\",\"text\":\"Hello!\"},{\"role\":\"persuadee\",\"text\":\"Hi, what's this about?\"},{\"role\":\"persuader\",\"text\":\"Would you donate?\"},{\"role\":\"persuadee\",\"text\":\"Sure\"}],\"donation\":0.5}\n{\"id\":\"x2\",\"turns\":[{\"role\":0,\"text\":\"hi\"}],\"donation\":5}\n";
        let (ds, report) = import_p4g(text, &TextMapper::bundled(), "p4g-").unwrap();
        assert_eq!(report.imported, 1);
        assert_eq!(report.skipped[0].0, 1);
        assert_eq!(ds[0].id, "p4g-x1");
        assert_eq!(ds[0].turns[0].tokens, vec![AgentAction::Greet.token()]);
        assert_eq!(ds[0].turns[2].tokens, vec![AgentAction::AskSmall.token()]);
        assert_eq!(ds[0].reward, Some(0.5));
    }
}
