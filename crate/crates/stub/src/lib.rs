//! Local HTTP servers used by tests and demos.
//!
//! [`PlatformStub`] is a small discussion platform speaking the same wire
//! format as the remote platform client. [`ReplayStub`] answers every request
//! with the next canned response from a queue, which is enough to stand in
//! for a chat-completion or search endpoint.

use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

/// A request as received by a stub.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    pub url: String,
    pub authorization: Option<String>,
    pub body: String,
}

impl RecordedRequest {
    pub fn json(&self) -> Option<Value> {
        serde_json::from_str(&self.body).ok()
    }
}

struct Running {
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
    base_url: String,
}

impl Running {
    fn spawn(mut handle: impl FnMut(RecordedRequest) -> (u16, String) + Send + 'static) -> Running {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind loopback"));
        let base_url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
        let srv = Arc::clone(&server);
        let thread = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let recorded = record(&mut req);
                let (status, body) = handle(recorded);
                let header = Header::from_bytes("content-type", "application/json").unwrap();
                let resp = Response::from_string(body).with_status_code(status).with_header(header);
                let _ = req.respond(resp);
            }
        });
        Running {
            server,
            thread: Some(thread),
            base_url,
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn record(req: &mut Request) -> RecordedRequest {
    let mut body = String::new();
    let _ = req.as_reader().read_to_string(&mut body);
    let authorization = req
        .headers()
        .iter()
        .find(|h| h.field.equiv("authorization"))
        .map(|h| h.value.as_str().to_owned());
    RecordedRequest {
        method: req.method().as_str().to_owned(),
        url: req.url().to_owned(),
        authorization,
        body,
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn error(status: u16, message: impl Into<String>) -> (u16, String) {
    (status, json!({ "error": message.into() }).to_string())
}

#[derive(Default)]
struct PlatformState {
    posts: Vec<Value>,
    votes: Vec<Value>,
    voted: HashSet<(String, u64)>,
    requests: Vec<RecordedRequest>,
}

/// Discussion platform served over loopback HTTP.
///
/// Routes: `POST /posts`, `POST /posts/{id}/votes`, `GET /posts?scope=..`.
/// A dangling or self-directed parent is 400, a vote on a missing post is
/// 404, a repeated vote is 409 and a self-vote is 400. With a token set,
/// requests without the matching bearer header get 401.
pub struct PlatformStub {
    state: Arc<Mutex<PlatformState>>,
    running: Running,
}

impl PlatformStub {
    pub fn start() -> Self {
        Self::start_inner(None)
    }

    pub fn with_token(token: &str) -> Self {
        Self::start_inner(Some(format!("Bearer {token}")))
    }

    fn start_inner(expected_auth: Option<String>) -> Self {
        let state = Arc::new(Mutex::new(PlatformState::default()));
        let shared = Arc::clone(&state);
        let running = Running::spawn(move |req| {
            let mut st = lock(&shared);
            st.requests.push(req.clone());
            if expected_auth.is_some() && req.authorization != expected_auth {
                return error(401, "missing or invalid bearer token");
            }
            route(&mut st, &req)
        });
        PlatformStub { state, running }
    }

    pub fn base_url(&self) -> &str {
        &self.running.base_url
    }

    pub fn posts(&self) -> Vec<Value> {
        lock(&self.state).posts.clone()
    }

    pub fn votes(&self) -> Vec<Value> {
        lock(&self.state).votes.clone()
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        lock(&self.state).requests.clone()
    }
}

fn route(st: &mut PlatformState, req: &RecordedRequest) -> (u16, String) {
    let (path, query) = req.url.split_once('?').unwrap_or((&req.url, ""));
    let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
    match (req.method.as_str(), segments.as_slice()) {
        ("POST", ["posts"]) => publish(st, &req.body),
        ("POST", ["posts", id, "votes"]) => match id.parse::<u64>() {
            Ok(id) => vote(st, id, &req.body),
            Err(_) => error(404, format!("no post {id}")),
        },
        ("GET", ["posts"]) => list(st, query),
        _ if req.method == Method::Get.as_str() || req.method == Method::Post.as_str() => {
            error(404, format!("no route {}", req.url))
        }
        _ => error(405, "method not allowed"),
    }
}

fn find_post(st: &PlatformState, id: u64) -> Option<&Value> {
    st.posts.iter().find(|p| p["post_id"].as_u64() == Some(id))
}

fn publish(st: &mut PlatformState, body: &str) -> (u16, String) {
    let Ok(Value::Object(mut post)) = serde_json::from_str::<Value>(body) else {
        return error(400, "body is not a JSON object");
    };
    let author = post.get("author").and_then(Value::as_str).unwrap_or("").to_owned();
    if author.is_empty() {
        return error(400, "missing author");
    }
    if post.get("body").and_then(Value::as_str).is_none_or(|b| b.trim().is_empty()) {
        return error(400, "post body is empty");
    }
    let Some(ts) = post.get("timestamp").and_then(Value::as_f64).filter(|t| *t >= 0.0) else {
        return error(400, "invalid timestamp");
    };
    if let Some(last) = st.posts.last().and_then(|p| p["timestamp"].as_f64()) {
        if ts < last {
            return error(400, format!("timestamp {ts} precedes latest post at {last}"));
        }
    }
    let kind = post.get("kind").and_then(Value::as_str).unwrap_or("");
    let parent = post.get("parent").filter(|v| !v.is_null());
    let stance = post.get("stance").filter(|v| !v.is_null());
    match (kind, parent, stance) {
        ("new_comment", None, None) => {}
        ("new_comment", _, _) => return error(400, "new comment cannot carry a parent or stance"),
        ("reply", Some(parent), Some(_)) => {
            let Some(pid) = parent.as_u64() else {
                return error(400, "parent must be a post id");
            };
            match find_post(st, pid) {
                None => return error(400, format!("parent post {pid} does not exist")),
                Some(p) if p["author"].as_str() == Some(author.as_str()) => {
                    return error(400, format!("cannot reply to own post {pid}"))
                }
                Some(_) => {}
            }
        }
        ("reply", _, _) => return error(400, "reply requires a parent and a stance"),
        _ => return error(400, format!("unknown kind {kind:?}")),
    }
    let id = st.posts.len() as u64 + 1;
    post.insert("post_id".into(), json!(id));
    post.entry("tool_trace").or_insert_with(|| json!([]));
    post.entry("parent").or_insert(Value::Null);
    post.entry("stance").or_insert(Value::Null);
    st.posts.push(Value::Object(post));
    (201, json!({ "post_id": id }).to_string())
}

fn vote(st: &mut PlatformState, target: u64, body: &str) -> (u16, String) {
    let Ok(Value::Object(mut v)) = serde_json::from_str::<Value>(body) else {
        return error(400, "body is not a JSON object");
    };
    let voter = v.get("voter").and_then(Value::as_str).unwrap_or("").to_owned();
    if voter.is_empty() {
        return error(400, "missing voter");
    }
    if !matches!(v.get("direction").and_then(Value::as_str), Some("up" | "down")) {
        return error(400, "direction must be \"up\" or \"down\"");
    }
    if v.get("timestamp").and_then(Value::as_f64).is_none_or(|t| t < 0.0) {
        return error(400, "invalid timestamp");
    }
    let Some(post) = find_post(st, target) else {
        return error(404, format!("post {target} does not exist"));
    };
    if post["author"].as_str() == Some(voter.as_str()) {
        return error(400, "self-votes are not allowed");
    }
    if !st.voted.insert((voter.clone(), target)) {
        return error(409, format!("{voter} already voted on post {target}"));
    }
    v.insert("target".into(), json!(target));
    st.votes.push(Value::Object(v));
    (201, "{}".into())
}

fn list(st: &PlatformState, query: &str) -> (u16, String) {
    let mut scope = "full";
    let mut k = None;
    for pair in query.split('&').filter(|s| !s.is_empty()) {
        match pair.split_once('=') {
            Some(("scope", s)) => scope = s,
            Some(("k", n)) => match n.parse::<usize>() {
                Ok(n) => k = Some(n),
                Err(_) => return error(400, "k must be a non-negative integer"),
            },
            _ => {}
        }
    }
    let posts = match (scope, k) {
        ("full", _) => &st.posts[..],
        ("recent", Some(k)) => &st.posts[st.posts.len().saturating_sub(k)..],
        ("recent", None) => return error(400, "recent scope requires k"),
        _ => return error(400, format!("unknown scope {scope:?}")),
    };
    (200, Value::Array(posts.to_vec()).to_string())
}

/// One canned response.
#[derive(Debug, Clone, PartialEq)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
}

impl StubReply {
    pub fn json(status: u16, body: Value) -> Self {
        StubReply {
            status,
            body: body.to_string(),
        }
    }

    /// A successful chat-completion response whose message is `content`.
    pub fn chat(content: &str) -> Self {
        Self::json(
            200,
            json!({
                "id": "stub",
                "object": "chat.completion",
                "choices": [{
                    "index": 0,
                    "message": { "role": "assistant", "content": content },
                    "finish_reason": "stop"
                }]
            }),
        )
    }

    pub fn status(status: u16) -> Self {
        Self::json(status, json!({ "error": format!("status {status}") }))
    }
}

/// Serves queued replies in order and records every request. Once the queue
/// is empty it answers 500.
pub struct ReplayStub {
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    remaining: Arc<Mutex<VecDeque<StubReply>>>,
    running: Running,
}

impl ReplayStub {
    pub fn start(replies: impl IntoIterator<Item = StubReply>) -> Self {
        let requests = Arc::new(Mutex::new(Vec::new()));
        let remaining = Arc::new(Mutex::new(replies.into_iter().collect::<VecDeque<_>>()));
        let (reqs, queue) = (Arc::clone(&requests), Arc::clone(&remaining));
        let running = Running::spawn(move |req| {
            lock(&reqs).push(req);
            match lock(&queue).pop_front() {
                Some(r) => (r.status, r.body),
                None => error(500, "no recorded response left"),
            }
        });
        ReplayStub {
            requests,
            remaining,
            running,
        }
    }

    /// Chat-completion replies from a JSON array of message strings.
    pub fn from_chat_fixture(text: &str) -> Result<Self, serde_json::Error> {
        let contents: Vec<String> = serde_json::from_str(text)?;
        Ok(Self::start(contents.iter().map(|c| StubReply::chat(c))))
    }

    pub fn base_url(&self) -> &str {
        &self.running.base_url
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        lock(&self.requests).clone()
    }

    pub fn remaining(&self) -> usize {
        lock(&self.remaining).len()
    }
}
