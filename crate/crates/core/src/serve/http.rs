//! REST routes over [`ServeState`].

use super::{FinishRequest, ServeError, ServeState, Session};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use std::sync::Arc;

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServeError::UnknownAgent(_) | ServeError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServeError::Finished(_) | ServeError::ConversationOver => StatusCode::CONFLICT,
            ServeError::Expired(_) => StatusCode::GONE,
            ServeError::EmptyMessage | ServeError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServeError::InvalidRating(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServeError::Agent(_) | ServeError::Io(_) | ServeError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"code": self.code(), "message": self.to_string()}))).into_response()
    }
}

type AppState = Arc<ServeState>;

fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ServeError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ServeError::BadRequest(e.to_string()))
}

fn view(s: &Session) -> Value {
    json!({
        "id": s.id,
        "agent_id": s.agent_id,
        "domain": s.domain,
        "status": s.status,
        "turn": s.turn,
        "done": s.done,
        "transcript": s.transcript.turns.iter().map(|t| json!({"role": t.role, "text": t.text})).collect::<Vec<_>>(),
        "ratings": s.ratings,
        "reward": s.reward,
    })
}

async fn list_agents(State(st): State<AppState>) -> Json<Value> {
    Json(Value::Array(st.agents().map(|a| json!({"id": a.id, "domain": a.domain, "policy": a.describe()})).collect()))
}

#[derive(Default, Deserialize)]
struct CreateRequest {
    initial_intensity: Option<u8>,
}

async fn create_session(State(st): State<AppState>, Path(agent): Path<String>, raw: Bytes) -> Result<(StatusCode, Json<Value>), ServeError> {
    let req: CreateRequest = body(&raw)?;
    let s = st.create_session(&agent, req.initial_intensity)?;
    let opener = s.transcript.turns.first().map(|t| t.text.clone());
    Ok((StatusCode::CREATED, Json(json!({"session_id": s.id, "opener": opener, "session": view(&s)}))))
}

#[derive(Default, Deserialize)]
struct MessageRequest {
    #[serde(default)]
    text: String,
}

async fn post_message(State(st): State<AppState>, Path(sid): Path<String>, raw: Bytes) -> Result<Json<Value>, ServeError> {
    let req: MessageRequest = body(&raw)?;
    Ok(Json(serde_json::to_value(st.post_message(&sid, &req.text)?)?))
}

async fn finish(State(st): State<AppState>, Path(sid): Path<String>, raw: Bytes) -> Result<Json<Value>, ServeError> {
    let req: FinishRequest = body(&raw)?;
    let reward = st.finish_session(&sid, &req)?;
    Ok(Json(json!({"reward": reward})))
}

async fn get_session(State(st): State<AppState>, Path(sid): Path<String>) -> Result<Json<Value>, ServeError> {
    Ok(Json(view(&st.get_session(&sid)?)))
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new()
        .route("/api/agents", get(list_agents))
        .route("/api/agents/{id}/sessions", post(create_session))
        .route("/api/sessions/{sid}", get(get_session))
        .route("/api/sessions/{sid}/messages", post(post_message))
        .route("/api/sessions/{sid}/finish", post(finish))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<ServeState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state)).await
}
