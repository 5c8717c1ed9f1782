//! Agent backends: the decision and writing component bound to each actor.
//!
//! The scheduler decides *when* an actor acts; a backend decides *what* it
//! does: which posts to vote on, which post to answer, and the text itself.

mod chat;
mod prompt;
mod scripted;

pub use chat::{ChatCompletionAgent, ChatCompletionConfig, DEFAULT_API_KEY_ENV};
pub use prompt::PromptTemplates;
pub use scripted::{AffinityTable, ScriptedAgent};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{PostIntent, VoteDecision};
use crate::model::{ActorId, Persona, Post, Roster, ToolId, VoteRecord};
use crate::platform::ToolBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentBackendKind {
    Scripted,
    ChatCompletionHttp,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend answered HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("backend output rejected: {0}")]
    InvalidOutput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
}

/// Everything an agent may look at when making one decision.
#[derive(Debug, Clone)]
pub struct AgentContext<'a> {
    pub actor_id: &'a ActorId,
    pub persona: &'a Persona,
    pub topic: &'a str,
    /// Oldest first, already cut to the actor's history scope.
    pub visible_posts: Vec<&'a Post>,
    pub own_post_history: Vec<&'a Post>,
    pub own_action_history: Vec<&'a VoteRecord>,
    pub provisioned_tools: &'a [ToolId],
    pub roster: &'a Roster,
    pub now: f64,
}

/// Contract every backend fulfils. Outputs are re-validated by the caller,
/// so a backend may return anything; invalid pieces are dropped there.
pub trait AgentBackend: Send {
    fn kind(&self) -> AgentBackendKind;

    /// Picks at most `m` posts from `pool` to consider voting on.
    fn select_vote_candidates(
        &mut self,
        ctx: &AgentContext<'_>,
        pool: &[&Post],
        m: usize,
    ) -> Result<Vec<VoteDecision>, AgentError>;

    /// Picks a post from a non-empty `pool` of other actors' posts to answer.
    fn select_reply_target(&mut self, ctx: &AgentContext<'_>, pool: &[&Post]) -> Result<PostIntent, AgentError>;

    /// Writes the body of a post. `target` is the parent post for replies.
    fn generate_content(
        &mut self,
        ctx: &AgentContext<'_>,
        intent: &PostIntent,
        target: Option<&Post>,
        tools: &mut ToolBox<'_>,
    ) -> Result<String, AgentError>;
}

impl<T: AgentBackend + ?Sized> AgentBackend for Box<T> {
    fn kind(&self) -> AgentBackendKind {
        (**self).kind()
    }

    fn select_vote_candidates(
        &mut self,
        ctx: &AgentContext<'_>,
        pool: &[&Post],
        m: usize,
    ) -> Result<Vec<VoteDecision>, AgentError> {
        (**self).select_vote_candidates(ctx, pool, m)
    }

    fn select_reply_target(&mut self, ctx: &AgentContext<'_>, pool: &[&Post]) -> Result<PostIntent, AgentError> {
        (**self).select_reply_target(ctx, pool)
    }

    fn generate_content(
        &mut self,
        ctx: &AgentContext<'_>,
        intent: &PostIntent,
        target: Option<&Post>,
        tools: &mut ToolBox<'_>,
    ) -> Result<String, AgentError> {
        (**self).generate_content(ctx, intent, target, tools)
    }
}

pub(crate) fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
