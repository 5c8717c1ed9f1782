//! Backend that delegates every decision to an HTTP chat-completion
//! endpoint (`POST {endpoint}` with `{"model", "messages": [...]}`, answer
//! read from `choices[0].message.content`).
//!
//! The model is asked for one JSON object per call. A malformed, empty or
//! overlong answer earns one reformat request; a second bad answer fails
//! the event. Content generation may spend up to `max_tool_rounds` rounds on
//! web searches before it must produce a body.

use std::collections::HashSet;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::prompt::PromptTemplates;
use super::{word_count, AgentBackend, AgentBackendKind, AgentContext, AgentError};
use crate::behavior::{PostIntent, VoteDecision};
use crate::model::{Post, PostId, PostKind, Stance, VoteDirection};
use crate::platform::ToolBox;

pub const DEFAULT_API_KEY_ENV: &str = "CHORUS_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default)]
pub struct ChatCompletionConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    /// Extra attempts after a transport failure or 5xx answer.
    pub transport_retries: u32,
    pub temperature: Option<f64>,
    pub max_tool_rounds: u32,
    /// Only the newest posts of the visible history are sent when set.
    pub max_visible_posts: Option<usize>,
    /// Bodies longer than `factor * response_length.max` words are rejected.
    pub overlong_factor: f64,
}

impl Default for ChatCompletionConfig {
    fn default() -> Self {
        ChatCompletionConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60.0,
            transport_retries: 1,
            temperature: None,
            max_tool_rounds: 2,
            max_visible_posts: None,
            overlong_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct VoteReply {
    votes: Vec<RawVote>,
}

#[derive(Deserialize)]
struct RawVote {
    target: u64,
    direction: String,
    #[serde(default)]
    rationale: Option<String>,
}

#[derive(Deserialize)]
struct TargetReply {
    target: u64,
    stance: String,
}

#[derive(Deserialize)]
struct ContentReply {
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    tool_call: Option<ToolCall>,
}

#[derive(Deserialize)]
struct ToolCall {
    name: String,
    query: String,
}

/// Pulls the first `{ ... }` object out of a model answer, tolerating code
/// fences and surrounding prose.
fn extract_json<T: DeserializeOwned>(content: &str) -> Result<T, String> {
    let start = content.find('{').ok_or("no JSON object in answer")?;
    let end = content.rfind('}').ok_or("no JSON object in answer")?;
    if end < start {
        return Err("no JSON object in answer".into());
    }
    serde_json::from_str(&content[start..=end]).map_err(|e| format!("malformed JSON: {e}"))
}

fn parse_direction(s: &str) -> Option<VoteDirection> {
    match s.trim().to_ascii_lowercase().as_str() {
        "up" | "upvote" => Some(VoteDirection::Up),
        "down" | "downvote" => Some(VoteDirection::Down),
        _ => None,
    }
}

fn parse_stance(s: &str) -> Option<Stance> {
    match s.trim().to_ascii_lowercase().as_str() {
        "agree" => Some(Stance::Agree),
        "disagree" => Some(Stance::Disagree),
        _ => None,
    }
}

pub struct ChatCompletionAgent {
    config: ChatCompletionConfig,
    api_key: Option<String>,
    templates: PromptTemplates,
    http: ureq::Agent,
}

impl ChatCompletionAgent {
    /// Reads the bearer token from `config.api_key_env`.
    pub fn new(config: ChatCompletionConfig) -> Result<Self, AgentError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| AgentError::MissingCredential(config.api_key_env.clone()))?;
        Ok(Self::with_api_key(config, Some(key)))
    }

    pub fn with_api_key(config: ChatCompletionConfig, api_key: Option<String>) -> Self {
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        ChatCompletionAgent {
            config,
            api_key,
            templates: PromptTemplates::default(),
            http,
        }
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    fn complete_once(&self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
        })
        .map_err(|e| AgentError::InvalidOutput(e.to_string()))?;
        let mut req = self
            .http
            .post(&self.config.endpoint)
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(AgentError::Status { status, message: text });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| AgentError::InvalidOutput(format!("malformed chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| AgentError::InvalidOutput("chat response has no choices".into()))
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let mut attempt = 0;
        loop {
            match self.complete_once(messages) {
                Err(AgentError::Transport(_)) | Err(AgentError::Status { status: 500..=599, .. })
                    if attempt < self.config.transport_retries =>
                {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }

    /// One structured exchange with a single reformat retry.
    fn ask<T, R>(&self, ctx: &AgentContext<'_>, user: String, accept: impl Fn(T) -> Result<R, String>) -> Result<R, AgentError>
    where
        T: DeserializeOwned,
    {
        let mut messages = vec![
            ChatMessage::new("system", self.templates.system_prompt(ctx)),
            ChatMessage::new("user", user),
        ];
        let mut retried = false;
        loop {
            let content = self.complete(&messages)?;
            let problem = match extract_json::<T>(&content).and_then(&accept) {
                Ok(value) => return Ok(value),
                Err(problem) => problem,
            };
            if retried {
                return Err(AgentError::InvalidOutput(problem));
            }
            retried = true;
            messages.push(ChatMessage::new("assistant", content));
            messages.push(ChatMessage::new("user", self.templates.reformat_prompt(&problem)));
        }
    }

    fn check_body(&self, ctx: &AgentContext<'_>, body: &str) -> Result<(), String> {
        let words = word_count(body);
        let limit = (f64::from(ctx.persona.response_length.max) * self.config.overlong_factor).ceil() as usize;
        if words == 0 {
            Err("the body is empty".into())
        } else if words > limit {
            Err(format!("the body has {words} words, more than the allowed {limit}"))
        } else {
            Ok(())
        }
    }
}

impl AgentBackend for ChatCompletionAgent {
    fn kind(&self) -> AgentBackendKind {
        AgentBackendKind::ChatCompletionHttp
    }

    fn select_vote_candidates(
        &mut self,
        ctx: &AgentContext<'_>,
        pool: &[&Post],
        m: usize,
    ) -> Result<Vec<VoteDecision>, AgentError> {
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        let ids: HashSet<PostId> = pool.iter().map(|p| p.post_id).collect();
        let prompt = self
            .templates
            .vote_prompt(ctx, pool, m, self.config.max_visible_posts);
        self.ask(ctx, prompt, |reply: VoteReply| {
            let mut seen = HashSet::new();
            let decisions: Vec<VoteDecision> = reply
                .votes
                .into_iter()
                .filter_map(|v| {
                    let target = PostId(v.target);
                    let direction = parse_direction(&v.direction)?;
                    (ids.contains(&target) && seen.insert(target)).then_some(VoteDecision {
                        target,
                        direction,
                        rationale: v.rationale,
                    })
                })
                .take(m)
                .collect();
            Ok(decisions)
        })
    }

    fn select_reply_target(&mut self, ctx: &AgentContext<'_>, pool: &[&Post]) -> Result<PostIntent, AgentError> {
        if pool.is_empty() {
            return Err(AgentError::Precondition("reply pool is empty".into()));
        }
        let ids: HashSet<PostId> = pool.iter().map(|p| p.post_id).collect();
        let prompt = self.templates.reply_prompt(ctx, pool, self.config.max_visible_posts);
        self.ask(ctx, prompt, |reply: TargetReply| {
            let target = PostId(reply.target);
            if !ids.contains(&target) {
                return Err(format!("post {target} is not one of the candidates"));
            }
            let stance = parse_stance(&reply.stance)
                .ok_or_else(|| format!("stance `{}` is not agree or disagree", reply.stance))?;
            Ok(PostIntent::reply(target, stance))
        })
    }

    fn generate_content(
        &mut self,
        ctx: &AgentContext<'_>,
        intent: &PostIntent,
        target: Option<&Post>,
        tools: &mut ToolBox<'_>,
    ) -> Result<String, AgentError> {
        let target = match (intent.kind, target, intent.stance) {
            (PostKind::Reply, Some(post), Some(stance)) => Some((post, stance)),
            (PostKind::Reply, _, _) => {
                return Err(AgentError::Precondition("reply intent without target or stance".into()))
            }
            (PostKind::NewComment, _, _) => None,
        };
        let mut messages = vec![
            ChatMessage::new("system", self.templates.system_prompt(ctx)),
            ChatMessage::new(
                "user",
                self.templates
                    .content_prompt(ctx, target, tools.can_search(), self.config.max_visible_posts),
            ),
        ];
        let mut tool_rounds = 0;
        let mut retried = false;
        loop {
            let content = self.complete(&messages)?;
            let problem = match extract_json::<ContentReply>(&content) {
                Ok(ContentReply {
                    tool_call: Some(call),
                    body: None,
                }) if tools.can_search() && tool_rounds < self.config.max_tool_rounds => {
                    tool_rounds += 1;
                    let results = if call.name == "web_search" {
                        tools.web_search(&call.query).unwrap_or_default()
                    } else {
                        Vec::new()
                    };
                    messages.push(ChatMessage::new("assistant", content));
                    messages.push(ChatMessage::new(
                        "user",
                        self.templates.tool_results_prompt(&call.query, &results),
                    ));
                    continue;
                }
                Ok(ContentReply { body: Some(body), .. }) => {
                    let body = body.trim().to_owned();
                    match self.check_body(ctx, &body) {
                        Ok(()) => return Ok(body),
                        Err(problem) => problem,
                    }
                }
                Ok(ContentReply { tool_call: Some(_), .. }) => "no further tool calls are allowed; write the body".into(),
                Ok(_) => "the answer has no body".into(),
                Err(problem) => problem,
            };
            if retried {
                return Err(AgentError::InvalidOutput(problem));
            }
            retried = true;
            messages.push(ChatMessage::new("assistant", content));
            messages.push(ChatMessage::new("user", self.templates.reformat_prompt(&problem)));
        }
    }
}
