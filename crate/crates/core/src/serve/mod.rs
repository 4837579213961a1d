//! Chat server for human evaluation: agents talk through realized surface
//! text, human replies are mapped back to response tokens, and finished
//! sessions are stored with ratings and exported as corpus records.
//!
//! The session logic here is synchronous; [`http`] wraps it in a REST API.

pub mod http;
pub mod realizer;

pub use realizer::Realizer;

use crate::dialogue::{Dialogue, Domain, Role, Source, Turn};
use crate::eval::Selection;
use crate::microworld::behavior::{script_probs, Script, Visible};
use crate::microworld::oracle::argmax;
use crate::microworld::sim::{derive_seed, derive_seed_str, rng_from, sample_index};
use crate::rl::Checkpoint;
use crate::text::TextMapper;
use crate::vocab::{AgentAction, MICRO_EOS};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is finished")]
    Finished(String),
    #[error("session `{0}` expired")]
    Expired(String),
    #[error("message is empty")]
    EmptyMessage,
    #[error("the conversation is over; finish the session")]
    ConversationOver,
    #[error("invalid rating: {0}")]
    InvalidRating(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("agent failed: {0}")]
    Agent(String),
    #[error("persistence failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("persistence failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl ServeError {
    pub fn code(&self) -> &'static str {
        match self {
            ServeError::UnknownAgent(_) => "unknown_agent",
            ServeError::UnknownSession(_) => "unknown_session",
            ServeError::Finished(_) => "session_finished",
            ServeError::Expired(_) => "session_expired",
            ServeError::EmptyMessage => "empty_message",
            ServeError::ConversationOver => "conversation_over",
            ServeError::InvalidRating(_) => "invalid_rating",
            ServeError::BadRequest(_) => "bad_request",
            ServeError::Agent(_) | ServeError::Io(_) | ServeError::Json(_) => "internal",
        }
    }
}

pub enum AgentPolicy {
    Checkpoint(Box<Checkpoint>),
    Script { script: Script, epsilon: f64 },
}

pub struct ServeAgent {
    pub id: String,
    pub domain: Domain,
    pub policy: AgentPolicy,
    pub selection: Selection,
}

impl ServeAgent {
    pub fn from_checkpoint(id: impl Into<String>, ck: Checkpoint, selection: Selection) -> Self {
        Self { id: id.into(), domain: ck.domain, policy: AgentPolicy::Checkpoint(Box::new(ck)), selection }
    }

    pub fn describe(&self) -> String {
        match &self.policy {
            AgentPolicy::Checkpoint(c) => c.method.name().to_string(),
            AgentPolicy::Script { script, .. } => format!("script:{}", script.id()),
        }
    }

    fn probs(&self, d: &Dialogue) -> Result<Vec<f64>, ServeError> {
        match &self.policy {
            AgentPolicy::Checkpoint(c) => {
                let tokens = d.flatten(MICRO_EOS).unwrap_or_default();
                c.policy(&tokens).map_err(|e| ServeError::Agent(e.to_string()))
            }
            AgentPolicy::Script { script, epsilon } => Ok(script_probs(*script, &Visible::from_dialogue(d), self.domain, *epsilon).to_vec()),
        }
    }

    fn choose(&self, d: &Dialogue, seed: u64) -> Result<AgentAction, ServeError> {
        let p = self.probs(d)?;
        if p.len() != AgentAction::COUNT || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ServeError::Agent(format!("bad action distribution {p:?}")));
        }
        let i = match self.selection {
            Selection::Greedy => argmax(&p),
            Selection::Sampled => sample_index(&p, &mut rng_from(seed)),
        };
        Ok(AgentAction::ALL[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Finished,
    Expired,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    /// Likert metrics, each 1–5.
    pub likert: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_intensity: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub agent_id: String,
    pub domain: Domain,
    pub transcript: Dialogue,
    /// Agent turns so far.
    pub turn: usize,
    pub status: SessionStatus,
    /// True once the agent has closed or used its last turn.
    pub done: bool,
    pub ratings: Option<Ratings>,
    pub reward: Option<f64>,
    pub seed: u64,
    pub created_at: u64,
    pub last_active: u64,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct FinishRequest {
    #[serde(default)]
    pub ratings: BTreeMap<String, serde_json::Value>,
    pub donation: Option<f64>,
    pub final_intensity: Option<serde_json::Value>,
    pub initial_intensity: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: Option<String>,
    pub done: bool,
    pub turn: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServeConfig {
    pub seed: u64,
    /// Idle time after which an open session expires.
    pub expiry_secs: u64,
    pub data_dir: PathBuf,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { seed: 0, expiry_secs: 30 * 60, data_dir: PathBuf::from("serve-data") }
    }
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

#[derive(Serialize, Deserialize)]
struct LogEntry {
    at: u64,
    session: Session,
}

pub struct ServeState {
    pub config: ServeConfig,
    agents: BTreeMap<String, ServeAgent>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    counter: Mutex<u64>,
    log: Mutex<File>,
    realizer: Realizer,
    mapper: TextMapper,
    clock: Clock,
}

fn int_in(v: &serde_json::Value, lo: u8, hi: u8, what: &str) -> Result<u8, ServeError> {
    v.as_f64()
        .filter(|x| x.fract() == 0.0 && *x >= lo as f64 && *x <= hi as f64)
        .map(|x| x as u8)
        .ok_or_else(|| ServeError::InvalidRating(format!("{what} must be an integer in {lo}..={hi}, got {v}")))
}

impl ServeState {
    /// Opens (or creates) the data directory and replays its session log.
    pub fn new(config: ServeConfig, agents: Vec<ServeAgent>, realizer: Realizer, mapper: TextMapper, clock: Clock) -> Result<Self, ServeError> {
        std::fs::create_dir_all(config.data_dir.join("export"))?;
        let log_path = config.data_dir.join("sessions.log");
        let mut sessions = HashMap::new();
        if log_path.exists() {
            for line in BufReader::new(File::open(&log_path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from a crash is skipped.
                if let Ok(entry) = serde_json::from_str::<LogEntry>(&line) {
                    sessions.insert(entry.session.id.clone(), Arc::new(Mutex::new(entry.session)));
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        let counter = sessions.len() as u64;
        Ok(Self {
            config,
            agents: agents.into_iter().map(|a| (a.id.clone(), a)).collect(),
            sessions: Mutex::new(sessions),
            counter: Mutex::new(counter),
            log: Mutex::new(log),
            realizer,
            mapper,
            clock,
        })
    }

    pub fn agents(&self) -> impl Iterator<Item = &ServeAgent> {
        self.agents.values()
    }

    fn persist(&self, s: &Session) -> Result<(), ServeError> {
        let mut line = serde_json::to_vec(&LogEntry { at: (self.clock)(), session: s.clone() })?;
        line.push(b'\n');
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        log.write_all(&line)?;
        log.flush()?;
        Ok(())
    }

    fn session(&self, sid: &str) -> Result<Arc<Mutex<Session>>, ServeError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(sid)
            .cloned()
            .ok_or_else(|| ServeError::UnknownSession(sid.to_string()))
    }

    /// Marks an idle open session expired. Returns true if it is expired.
    fn check_expiry(&self, s: &mut Session) -> Result<bool, ServeError> {
        if s.status == SessionStatus::Open && (self.clock)().saturating_sub(s.last_active) > self.config.expiry_secs {
            s.status = SessionStatus::Expired;
            self.persist(s)?;
        }
        Ok(s.status == SessionStatus::Expired)
    }

    fn agent_turn(&self, agent: &ServeAgent, s: &mut Session) -> Result<String, ServeError> {
        let action = agent.choose(&s.transcript, derive_seed(s.seed, s.turn as u64))?;
        let occurrence = s
            .transcript
            .turns
            .iter()
            .filter(|t| t.role == Role::Agent && t.tokens.first() == Some(&action.token()))
            .count();
        let text = self.realizer.realize(s.domain, action, s.seed, occurrence).to_string();
        s.transcript.turns.push(Turn::new(Role::Agent, text.clone(), vec![action.token()]));
        s.turn += 1;
        s.done = action == AgentAction::Close || s.turn >= s.domain.turn_limit();
        Ok(text)
    }

    /// Starts a session. Persuasion agents speak first; counseling sessions
    /// wait for the human.
    pub fn create_session(&self, agent_id: &str, initial_intensity: Option<u8>) -> Result<Session, ServeError> {
        let agent = self.agents.get(agent_id).ok_or_else(|| ServeError::UnknownAgent(agent_id.to_string()))?;
        if let Some(i) = initial_intensity {
            if !(1..=5).contains(&i) {
                return Err(ServeError::InvalidRating(format!("initial intensity {i} is outside 1..=5")));
            }
        }
        let n = {
            let mut c = self.counter.lock().unwrap_or_else(|e| e.into_inner());
            *c += 1;
            *c
        };
        let id = format!("s{:016x}", derive_seed(self.config.seed, n));
        let now = (self.clock)();
        let mut transcript = Dialogue::new(format!("human-{id}"), agent.domain, Source::Orig);
        transcript.meta.initial_intensity = initial_intensity;
        transcript.meta.extra.insert("agent".into(), agent_id.into());
        let mut s = Session {
            id: id.clone(),
            agent_id: agent_id.to_string(),
            domain: agent.domain,
            transcript,
            turn: 0,
            status: SessionStatus::Open,
            done: false,
            ratings: None,
            reward: None,
            // Same agent + server seed ⇒ same surface rotation.
            seed: derive_seed_str(self.config.seed, agent_id),
            created_at: now,
            last_active: now,
        };
        if agent.domain == Domain::Persuasion {
            self.agent_turn(agent, &mut s)?;
        }
        self.persist(&s)?;
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).insert(id, Arc::new(Mutex::new(s.clone())));
        Ok(s)
    }

    pub fn post_message(&self, sid: &str, text: &str) -> Result<MessageReply, ServeError> {
        let cell = self.session(sid)?;
        let mut s = cell.lock().unwrap_or_else(|e| e.into_inner());
        if self.check_expiry(&mut s)? {
            return Err(ServeError::Expired(sid.to_string()));
        }
        if s.status == SessionStatus::Finished {
            return Err(ServeError::Finished(sid.to_string()));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(ServeError::EmptyMessage);
        }
        if s.done {
            return Err(ServeError::ConversationOver);
        }
        let agent = self.agents.get(&s.agent_id).ok_or_else(|| ServeError::UnknownAgent(s.agent_id.clone()))?;
        let token = self.mapper.map_user(text).token();
        s.transcript.turns.push(Turn::new(Role::User, text, vec![token]));
        let reply = self.agent_turn(agent, &mut s)?;
        s.last_active = (self.clock)();
        self.persist(&s)?;
        Ok(MessageReply { reply: Some(reply), done: s.done, turn: s.turn })
    }

    /// Validates ratings, computes the reward, closes the session and
    /// exports its transcript.
    pub fn finish_session(&self, sid: &str, req: &FinishRequest) -> Result<f64, ServeError> {
        let cell = self.session(sid)?;
        let mut s = cell.lock().unwrap_or_else(|e| e.into_inner());
        if s.status == SessionStatus::Finished {
            return Err(ServeError::Finished(sid.to_string()));
        }
        if self.check_expiry(&mut s)? {
            return Err(ServeError::Expired(sid.to_string()));
        }
        let mut ratings = Ratings::default();
        for (k, v) in &req.ratings {
            ratings.likert.insert(k.clone(), int_in(v, 1, 5, k)?);
        }
        let reward = match s.domain {
            Domain::Persuasion => {
                let d = req.donation.ok_or_else(|| ServeError::InvalidRating("donation is required".into()))?;
                if !(0.0..=2.0).contains(&d) || (d * 2.0).fract() != 0.0 {
                    return Err(ServeError::InvalidRating(format!("donation must be in [0, 2] in steps of 0.5, got {d}")));
                }
                ratings.donation = Some(d);
                d
            }
            Domain::Counseling => {
                let fin = int_in(req.final_intensity.as_ref().ok_or_else(|| ServeError::InvalidRating("final_intensity is required".into()))?, 1, 5, "final_intensity")?;
                let init = match (&req.initial_intensity, s.transcript.meta.initial_intensity) {
                    (Some(v), _) => int_in(v, 1, 5, "initial_intensity")?,
                    (None, Some(i)) => i,
                    (None, None) => return Err(ServeError::InvalidRating("initial_intensity is required".into())),
                };
                s.transcript.meta.initial_intensity = Some(init);
                ratings.final_intensity = Some(fin);
                init as f64 - fin as f64
            }
        };
        s.transcript.reward = Some(reward);
        s.transcript.meta.extra.insert("ratings".into(), serde_json::to_value(&ratings.likert)?);
        s.ratings = Some(ratings);
        s.reward = Some(reward);
        s.status = SessionStatus::Finished;
        s.last_active = (self.clock)();
        self.persist(&s)?;
        self.export(&s)?;
        Ok(reward)
    }

    fn export(&self, s: &Session) -> Result<(), ServeError> {
        let dir = self.config.data_dir.join("export");
        let tmp = dir.join(format!(".{}.tmp", s.id));
        let mut line = serde_json::to_vec(&s.transcript)?;
        line.push(b'\n');
        std::fs::write(&tmp, line)?;
        std::fs::rename(&tmp, dir.join(format!("{}.jsonl", s.id)))?;
        Ok(())
    }

    pub fn get_session(&self, sid: &str) -> Result<Session, ServeError> {
        let cell = self.session(sid)?;
        let mut s = cell.lock().unwrap_or_else(|e| e.into_inner());
        self.check_expiry(&mut s)?;
        Ok(s.clone())
    }

    pub fn export_dir(&self) -> PathBuf {
        self.config.data_dir.join("export")
    }
}

/// Loads every exported transcript in `dir` (for feeding human sessions
/// back into a corpus).
pub fn read_exports(dir: &Path) -> Result<Vec<Dialogue>, ServeError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(crate::corpus::read_dialogues(&p).map_err(|e| ServeError::BadRequest(e.to_string()))?);
    }
    Ok(out)
}
