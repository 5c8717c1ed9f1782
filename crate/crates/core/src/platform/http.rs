//! Client for a remote discussion platform.
//!
//! Wire format (paths configurable):
//!
//! * `POST /posts` with a [`NewPost`] body → `{"post_id": n}`
//! * `POST /posts/{id}/votes` with `{"voter", "direction", "timestamp"}`
//! * `GET /posts?scope=full` or `GET /posts?scope=recent&k=K` → array of posts
//!
//! 400/404/422 map to validation errors, 409 to a duplicate vote, 401/403 to
//! an authorization error. Connection failures are reported as transport
//! errors, which abort a run.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{HistoryRequest, NewPost, Platform, PlatformAdapterKind, PlatformError};
use crate::model::{ActorId, Post, PostId, VoteDirection, VoteRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default)]
pub struct HttpPlatformConfig {
    pub base_url: String,
    pub posts_path: String,
    /// `{id}` is replaced with the target post id.
    pub votes_path: String,
    pub timeout_secs: f64,
    /// Environment variable holding an optional bearer token.
    pub token_env: Option<String>,
}

impl Default for HttpPlatformConfig {
    fn default() -> Self {
        HttpPlatformConfig {
            base_url: "http://127.0.0.1:8080".into(),
            posts_path: "/posts".into(),
            votes_path: "/posts/{id}/votes".into(),
            timeout_secs: 10.0,
            token_env: None,
        }
    }
}

#[derive(Serialize)]
struct VoteBody<'a> {
    voter: &'a ActorId,
    direction: VoteDirection,
    #[serde(with = "crate::timefmt")]
    timestamp: f64,
}

#[derive(Deserialize)]
struct PublishAck {
    post_id: PostId,
}

pub struct HttpPlatform {
    config: HttpPlatformConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpPlatform {
    pub fn new(config: HttpPlatformConfig) -> Self {
        let token = config
            .token_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok());
        Self::with_token(config, token)
    }

    pub fn with_token(config: HttpPlatformConfig, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpPlatform { config, token, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn send(&self, url: &str, body: String) -> Result<(u16, String), PlatformError> {
        let mut req = self.agent.post(url).header("content-type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        let resp = req.send(body).map_err(|e| PlatformError::Transport(e.to_string()))?;
        read(resp)
    }
}

fn read(mut resp: ureq::http::Response<ureq::Body>) -> Result<(u16, String), PlatformError> {
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| PlatformError::Transport(e.to_string()))?;
    Ok((status, text))
}

fn status_error(status: u16, message: String, vote: Option<&VoteRecord>) -> PlatformError {
    match (status, vote) {
        (409, Some(v)) => PlatformError::Duplicate {
            voter: v.voter.clone(),
            target: v.target,
        },
        (400 | 404 | 409 | 422, _) => PlatformError::Validation(message),
        (401 | 403, _) => PlatformError::Unauthorized(message),
        _ => PlatformError::Status { status, message },
    }
}

fn encode<T: Serialize>(value: &T) -> Result<String, PlatformError> {
    serde_json::to_string(value).map_err(|e| PlatformError::Validation(e.to_string()))
}

impl Platform for HttpPlatform {
    fn kind(&self) -> PlatformAdapterKind {
        PlatformAdapterKind::HttpRemote
    }

    fn publish(&mut self, post: &NewPost) -> Result<PostId, PlatformError> {
        let (status, text) = self.send(&self.url(&self.config.posts_path), encode(post)?)?;
        if !(200..300).contains(&status) {
            return Err(status_error(status, text, None));
        }
        let ack: PublishAck = serde_json::from_str(&text).map_err(|e| PlatformError::Status {
            status,
            message: format!("malformed publish acknowledgment: {e}"),
        })?;
        Ok(ack.post_id)
    }

    fn vote(&mut self, vote: &VoteRecord) -> Result<(), PlatformError> {
        let path = self.config.votes_path.replace("{id}", &vote.target.to_string());
        let body = encode(&VoteBody {
            voter: &vote.voter,
            direction: vote.direction,
            timestamp: vote.timestamp,
        })?;
        let (status, text) = self.send(&self.url(&path), body)?;
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(status_error(status, text, Some(vote)))
        }
    }

    fn fetch_history(&mut self, scope: HistoryRequest) -> Result<Vec<Post>, PlatformError> {
        let mut req = self.agent.get(self.url(&self.config.posts_path));
        req = match scope {
            HistoryRequest::Full => req.query("scope", "full"),
            HistoryRequest::RecentOnly(k) => req.query("scope", "recent").query("k", k.to_string()),
        };
        if let Some(token) = &self.token {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        let resp = req.call().map_err(|e| PlatformError::Transport(e.to_string()))?;
        let (status, text) = read(resp)?;
        if !(200..300).contains(&status) {
            return Err(status_error(status, text, None));
        }
        serde_json::from_str(&text).map_err(|e| PlatformError::Status {
            status,
            message: format!("malformed history: {e}"),
        })
    }
}
