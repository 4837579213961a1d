//! Imports a counseling corpus in the ESConv JSON layout, maps each
//! utterance onto the micro-world vocabulary and writes JSONL.
//!
//!     cargo run --release --example import_corpus -- ESConv.json esconv.jsonl
//!
//! Without arguments a two-record inline sample is used.

use hindsight::corpus::{import_esconv, write_jsonl};
use hindsight::dialogue::validate_corpus;
use hindsight::text::TextMapper;
use hindsight::vocab::Vocabulary;
use std::path::Path;

const SAMPLE: &str = r#"[
 {"problem_type":"job crisis","situation":"I was laid off last week",
  "survey_score":{"seeker":{"initial_emotion_intensity":"5","final_emotion_intensity":"2"}},
  "dialog":[
   {"speaker":"seeker","content":"Hi, I lost my job and I feel terrible."},
   {"speaker":"supporter","content":"That sounds really hard. How long had you worked there?","annotation":{"strategy":"Question"}},
   {"speaker":"seeker","content":"Six years. I don't know what to do."},
   {"speaker":"supporter","content":"It makes sense to feel lost after such a change.","annotation":{"strategy":"Reflection of feelings"}},
   {"speaker":"seeker","content":"Thanks, that helps a bit."}]},
 {"survey_score":{"seeker":{"initial_emotion_intensity":"3","final_emotion_intensity":"3"}},
  "dialog":[{"speaker":"seeker","content":"hello"},{"speaker":"supporter","content":"Hello, how are you?"}]}
]"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let json = match args.first() {
        Some(p) => std::fs::read_to_string(p)?,
        None => SAMPLE.to_string(),
    };
    let (dialogues, report) = import_esconv(&json, &TextMapper::bundled(), "esconv-")?;
    println!("imported {}, skipped {:?}", report.imported, report.skipped);
    let check = validate_corpus(&dialogues, &Vocabulary::micro());
    println!("violations: {}", check.total_violations());
    if let Some(out) = args.get(1) {
        let hash = write_jsonl(Path::new(out), &dialogues)?;
        println!("wrote {out} ({hash})");
    } else if let Some(d) = dialogues.first() {
        println!("{}", serde_json::to_string_pretty(d)?);
    }
    Ok(())
}
