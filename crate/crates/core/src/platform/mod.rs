//! The tool suite actors use to reach the discussion platform: publishing,
//! history retrieval, voting, and (for provisioned actors) web search.

mod http;
mod memory;
mod search;

pub use http::{HttpPlatform, HttpPlatformConfig};
pub use memory::InMemoryPlatform;
pub use search::{FixtureSearch, LiveSearch, SearchError, SearchProvider, SearchResult, MAX_SEARCH_RESULTS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActorId, Post, PostId, PostKind, Stance, ToolId, ToolTraceEntry, VoteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformAdapterKind {
    InMemory,
    HttpRemote,
}

/// A post as submitted for publication, before the platform assigns its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewPost {
    pub author: ActorId,
    #[serde(with = "crate::timefmt")]
    pub timestamp: f64,
    pub body: String,
    pub kind: PostKind,
    pub parent: Option<PostId>,
    pub stance: Option<Stance>,
    #[serde(default)]
    pub tool_trace: Vec<ToolTraceEntry>,
}

impl NewPost {
    pub fn into_post(self, post_id: PostId) -> Post {
        Post {
            post_id,
            author: self.author,
            timestamp: self.timestamp,
            body: self.body,
            kind: self.kind,
            parent: self.parent,
            stance: self.stance,
            tool_trace: self.tool_trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryRequest {
    Full,
    RecentOnly(usize),
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("rejected: {0}")]
    Validation(String),
    #[error("{voter} already voted on post {target}")]
    Duplicate { voter: ActorId, target: PostId },
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("platform answered HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("platform unreachable: {0}")]
    Transport(String),
}

impl PlatformError {
    /// Whether the error means the platform itself is gone, as opposed to a
    /// single rejected request.
    pub fn is_fatal(&self) -> bool {
        matches!(self, PlatformError::Transport(_))
    }
}

/// Contract shared by every platform adapter. Calls are sequential; the
/// adapter owns the durable copy of the discussion.
pub trait Platform: Send {
    fn kind(&self) -> PlatformAdapterKind;

    /// Stores `post` and returns the id the platform assigned to it.
    fn publish(&mut self, post: &NewPost) -> Result<PostId, PlatformError>;

    fn vote(&mut self, vote: &VoteRecord) -> Result<(), PlatformError>;

    /// Snapshot of the posts, oldest first.
    fn fetch_history(&mut self, scope: HistoryRequest) -> Result<Vec<Post>, PlatformError>;
}

#[derive(Debug, Error, PartialEq)]
pub enum ToolError {
    #[error("actor is not provisioned with {0:?}")]
    Unauthorized(ToolId),
    #[error("invalid tool input: {0}")]
    Validation(String),
}

/// Per-event view of the optional tools an agent may invoke while writing.
/// Every successful call is appended to the trace that ends up on the post.
pub struct ToolBox<'a> {
    provisioned: &'a [ToolId],
    search: &'a dyn SearchProvider,
    trace: Vec<ToolTraceEntry>,
}

impl<'a> ToolBox<'a> {
    pub fn new(provisioned: &'a [ToolId], search: &'a dyn SearchProvider) -> Self {
        ToolBox {
            provisioned,
            search,
            trace: Vec::new(),
        }
    }

    pub fn provisioned(&self) -> &[ToolId] {
        self.provisioned
    }

    pub fn can_search(&self) -> bool {
        self.provisioned.contains(&ToolId::WebSearch)
    }

    /// Runs a web search for the calling actor. Live-provider failures
    /// degrade to an empty result so content generation can continue.
    pub fn web_search(&mut self, query: &str) -> Result<Vec<SearchResult>, ToolError> {
        if !self.can_search() {
            return Err(ToolError::Unauthorized(ToolId::WebSearch));
        }
        let query = query.trim();
        if query.is_empty() {
            return Err(ToolError::Validation("empty search query".into()));
        }
        let mut results = match self.search.search(query) {
            Ok(results) => results,
            Err(err) => {
                tracing::warn!(%err, query, "web search failed; continuing without evidence");
                Vec::new()
            }
        };
        results.truncate(MAX_SEARCH_RESULTS);
        let summary = results
            .iter()
            .map(|r| r.title.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        self.trace.push(ToolTraceEntry {
            tool: ToolId::WebSearch,
            query: query.to_owned(),
            summary,
        });
        Ok(results)
    }

    pub fn into_trace(self) -> Vec<ToolTraceEntry> {
        self.trace
    }
}
