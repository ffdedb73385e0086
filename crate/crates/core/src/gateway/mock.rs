//! Local stand-in for an OpenAI-compatible server.
//!
//! Answers `POST /v1/completions` and `POST /v1/chat/completions`. The
//! segment is taken from the `x-segment-id` header, or else from the last
//! `{Tgt}: {hypothesis}` line found in the prompt.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockMode {
    /// Return the segment's reference.
    EchoReference,
    /// Return the segment's hypothesis unchanged.
    Identity,
    /// Return fixed outputs keyed by segment id.
    Scripted(HashMap<String, String>),
}

#[derive(Debug, Clone)]
pub struct MockOptions {
    pub mode: MockMode,
    /// Answer the first N requests for each segment with HTTP 500.
    pub fail_first: u32,
    /// Answer every request with this status instead.
    pub force_status: Option<u16>,
    /// Prefix outputs with the `Improved {Tgt}:` cue, as chat models often do.
    pub with_cue: bool,
}

impl MockOptions {
    pub fn new(mode: MockMode) -> Self {
        MockOptions {
            mode,
            fail_first: 0,
            force_status: None,
            with_cue: false,
        }
    }
}

struct Entry {
    output: Option<String>,
    hypothesis: String,
    tgt: String,
}

struct MockState {
    entries: HashMap<String, Entry>,
    opts: MockOptions,
    seen: Mutex<HashMap<String, u32>>,
    requests: Mutex<u64>,
}

impl MockState {
    fn new(corpus: &Corpus, opts: MockOptions) -> Self {
        let entries = corpus
            .segments()
            .iter()
            .map(|s| {
                let output = match &opts.mode {
                    MockMode::EchoReference => s.reference.clone(),
                    MockMode::Identity => Some(s.hypothesis.clone()),
                    MockMode::Scripted(map) => map.get(&s.id).cloned(),
                };
                let entry = Entry {
                    output,
                    hypothesis: s.hypothesis.clone(),
                    tgt: s.lang.tgt().to_string(),
                };
                (s.id.clone(), entry)
            })
            .collect();
        MockState {
            entries,
            opts,
            seen: Mutex::new(HashMap::new()),
            requests: Mutex::new(0),
        }
    }

    fn find_by_prompt(&self, prompt: &str) -> Option<String> {
        // The query block comes last, so the latest matching line wins.
        let mut best: Option<(usize, &String)> = None;
        for (id, e) in &self.entries {
            let needle = format!("{}: {}", e.tgt, e.hypothesis);
            if let Some(pos) = prompt.rfind(&needle) {
                if best.is_none_or(|(p, _)| pos > p) {
                    best = Some((pos, id));
                }
            }
        }
        best.map(|(_, id)| id.clone())
    }
}

fn prompt_of(body: &Value) -> Option<String> {
    if let Some(p) = body["prompt"].as_str() {
        return Some(p.to_string());
    }
    body["messages"]
        .as_array()?
        .iter()
        .rev()
        .find_map(|m| m["content"].as_str())
        .map(str::to_string)
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({"error": {"message": msg}}))).into_response()
}

async fn respond(state: &MockState, headers: &HeaderMap, body: &Value) -> Result<String, Response> {
    *state.requests.lock().unwrap() += 1;
    if let Some(code) = state.opts.force_status {
        let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return Err(error(status, "forced failure"));
    }
    let prompt = prompt_of(body).ok_or_else(|| error(StatusCode::BAD_REQUEST, "missing prompt"))?;
    let id = headers
        .get("x-segment-id")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .filter(|id| state.entries.contains_key(id))
        .or_else(|| state.find_by_prompt(&prompt))
        .ok_or_else(|| error(StatusCode::INTERNAL_SERVER_ERROR, "no segment matches the prompt"))?;
    {
        let mut seen = state.seen.lock().unwrap();
        let n = seen.entry(id.clone()).or_default();
        *n += 1;
        if *n <= state.opts.fail_first {
            return Err(error(StatusCode::INTERNAL_SERVER_ERROR, "injected failure"));
        }
    }
    let entry = &state.entries[&id];
    let output = entry
        .output
        .clone()
        .ok_or_else(|| error(StatusCode::INTERNAL_SERVER_ERROR, "no scripted output"))?;
    Ok(if state.opts.with_cue {
        format!(" Improved {}: {output}", entry.tgt)
    } else {
        format!(" {output}")
    })
}

async fn completions(State(state): State<Arc<MockState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    match respond(&state, &headers, &body).await {
        Ok(text) => Json(json!({
            "object": "text_completion",
            "model": body["model"],
            "choices": [{"index": 0, "text": text, "finish_reason": "stop"}],
        }))
        .into_response(),
        Err(r) => r,
    }
}

async fn chat(State(state): State<Arc<MockState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    match respond(&state, &headers, &body).await {
        Ok(text) => Json(json!({
            "object": "chat.completion",
            "model": body["model"],
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        }))
        .into_response(),
        Err(r) => r,
    }
}

fn router(state: Arc<MockState>) -> Router {
    Router::new()
        .route("/v1/completions", post(completions))
        .route("/v1/chat/completions", post(chat))
        .with_state(state)
}

/// A running mock server. Dropping it without [`MockServer::shutdown`] leaves
/// the task running until the runtime stops.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub async fn start(corpus: &Corpus, opts: MockOptions, addr: &str) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState::new(corpus, opts));
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("mock server stopped: {e}");
            }
        });
        Ok(MockServer {
            addr,
            state,
            stop: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to put in `GenerationConfig::endpoint`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn request_count(&self) -> u64 {
        *self.state.requests.lock().unwrap()
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Serves until the task ends (used by the `mock-serve` command).
    pub async fn wait(mut self) {
        let _ = (&mut self.task).await;
    }
}
