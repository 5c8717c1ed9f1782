//! Domain types shared by every part of the simulator: personas, actor
//! parameters, and the two artifacts (posts and votes) that make up the
//! shared discussion history.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timefmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(transparent)]
pub struct ActorId(pub String);

impl ActorId {
    pub fn new(id: impl Into<String>) -> Self {
        ActorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        ActorId(s.to_owned())
    }
}

/// Globally monotone post identifier, assigned at publish time starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PostId(pub u64);

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    CasualUser,
    Expert,
    Advocate,
    Skeptic,
    Custom,
}

impl Archetype {
    pub fn label(self) -> &'static str {
        match self {
            Archetype::CasualUser => "casual user",
            Archetype::Expert => "expert",
            Archetype::Advocate => "advocate",
            Archetype::Skeptic => "skeptic",
            Archetype::Custom => "participant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum HistoryScope {
    Full,
    RecentOnly,
}

/// Inclusive word-count range used as generation guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct WordRange {
    pub min: u32,
    pub max: u32,
}

impl WordRange {
    pub fn new(min: u32, max: u32) -> Self {
        WordRange { min, max }
    }

    pub fn contains(&self, words: usize) -> bool {
        (self.min as usize..=self.max as usize).contains(&words)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Persona {
    pub actor_name: String,
    pub archetype: Archetype,
    #[serde(default)]
    pub biography: String,
    #[serde(default)]
    pub tone: String,
    #[serde(default)]
    pub content_style: String,
    pub response_length: WordRange,
    pub history_scope: HistoryScope,
    #[serde(default)]
    pub core_beliefs: Vec<String>,
}

/// A violated invariant on a domain value. `field` is relative to the value
/// being validated; callers prefix it with their own path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct InvalidValue {
    pub field: String,
    pub message: String,
}

impl InvalidValue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        InvalidValue {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.field = format!("{prefix}.{}", self.field);
        self
    }
}

impl Persona {
    pub fn validate(&self) -> Result<(), InvalidValue> {
        let range = self.response_length;
        if range.min < 1 {
            return Err(InvalidValue::new(
                "response_length.min",
                "must be at least 1",
            ));
        }
        if range.min > range.max {
            return Err(InvalidValue::new(
                "response_length",
                format!("min {} exceeds max {}", range.min, range.max),
            ));
        }
        if self.archetype == Archetype::Custom && self.biography.trim().is_empty() {
            return Err(InvalidValue::new(
                "biography",
                "custom archetype requires a non-empty biography",
            ));
        }
        Ok(())
    }
}

/// Identifiers of the tools an actor may be provisioned with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ToolId {
    PublishPost,
    FetchHistory,
    Vote,
    WebSearch,
}

impl ToolId {
    /// The suite every actor receives regardless of configuration.
    pub const BASE_SUITE: [ToolId; 3] = [ToolId::PublishPost, ToolId::FetchHistory, ToolId::Vote];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct ActorConfig {
    pub actor_id: ActorId,
    pub persona: Persona,
    pub lambda_post: f64,
    pub lambda_action: f64,
    pub p_reply: f64,
    pub theta_action: f64,
    /// Vote candidates requested per action event.
    #[serde(default = "default_candidate_count")]
    pub candidate_count: usize,
    #[serde(default)]
    pub tools: Vec<ToolId>,
}

pub const DEFAULT_CANDIDATE_COUNT: usize = 3;

fn default_candidate_count() -> usize {
    DEFAULT_CANDIDATE_COUNT
}

impl ActorConfig {
    pub fn validate(&self) -> Result<(), InvalidValue> {
        if self.actor_id.0.trim().is_empty() {
            return Err(InvalidValue::new("actor_id", "must not be empty"));
        }
        for (name, rate) in [("lambda_post", self.lambda_post), ("lambda_action", self.lambda_action)] {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(InvalidValue::new(
                    name,
                    format!("{rate} is not a strictly positive rate"),
                ));
            }
        }
        for (name, p) in [("p_reply", self.p_reply), ("theta_action", self.theta_action)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(InvalidValue::new(name, format!("{p} out of range [0, 1]")));
            }
        }
        if self.candidate_count == 0 {
            return Err(InvalidValue::new("candidate_count", "must be a positive integer"));
        }
        self.persona.validate().map_err(|e| e.prefixed("persona"))
    }

    pub fn has_tool(&self, tool: ToolId) -> bool {
        self.tools.contains(&tool)
    }
}

/// Checks every actor and the uniqueness of actor ids.
pub fn validate_roster(actors: &[ActorConfig]) -> Result<(), InvalidValue> {
    if actors.is_empty() {
        return Err(InvalidValue::new("actors", "at least one actor is required"));
    }
    let mut seen = HashSet::new();
    for (i, actor) in actors.iter().enumerate() {
        actor.validate().map_err(|e| e.prefixed(&format!("actors[{i}]")))?;
        if !seen.insert(&actor.actor_id) {
            return Err(InvalidValue::new(
                format!("actors[{i}].actor_id"),
                format!("duplicate actor_id `{}`", actor.actor_id),
            ));
        }
    }
    Ok(())
}

/// Lookup from actor id to the display name and archetype of each cast member.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    entries: HashMap<ActorId, (String, Archetype)>,
}

impl Roster {
    pub fn from_actors(actors: &[ActorConfig]) -> Self {
        Roster {
            entries: actors
                .iter()
                .map(|a| (a.actor_id.clone(), (a.persona.actor_name.clone(), a.persona.archetype)))
                .collect(),
        }
    }

    pub fn archetype(&self, id: &ActorId) -> Option<Archetype> {
        self.entries.get(id).map(|(_, a)| *a)
    }

    /// Display name, falling back to the raw id for unknown authors.
    pub fn name<'a>(&'a self, id: &'a ActorId) -> &'a str {
        self.entries.get(id).map_or(id.as_str(), |(n, _)| n.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostKind {
    NewComment,
    Reply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Agree,
    Disagree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteDirection {
    Up,
    Down,
}

impl From<Stance> for VoteDirection {
    fn from(stance: Stance) -> Self {
        match stance {
            Stance::Agree => VoteDirection::Up,
            Stance::Disagree => VoteDirection::Down,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolTraceEntry {
    pub tool: ToolId,
    pub query: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: PostId,
    pub author: ActorId,
    #[serde(with = "timefmt")]
    pub timestamp: f64,
    pub body: String,
    pub kind: PostKind,
    pub parent: Option<PostId>,
    pub stance: Option<Stance>,
    #[serde(default)]
    pub tool_trace: Vec<ToolTraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub voter: ActorId,
    pub target: PostId,
    pub direction: VoteDirection,
    #[serde(with = "timefmt")]
    pub timestamp: f64,
}

/// Every post and executed vote of a run, in dispatch order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SharedHistory {
    pub posts: Vec<Post>,
    pub votes: Vec<VoteRecord>,
}

/// One broken structural rule found by [`SharedHistory::violations`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistoryViolation {
    #[error("post {0} is out of (timestamp, post_id) order")]
    PostOrder(PostId),
    #[error("vote by {voter} on {target} is out of timestamp order")]
    VoteOrder { voter: ActorId, target: PostId },
    #[error("reply {post} has no resolvable earlier parent")]
    DanglingParent { post: PostId },
    #[error("reply {post} targets its own author's post {parent}")]
    SelfReply { post: PostId, parent: PostId },
    #[error("post {post} kind/parent/stance fields disagree")]
    MalformedPost { post: PostId },
    #[error("vote by {voter} targets missing post {target}")]
    MissingTarget { voter: ActorId, target: PostId },
    #[error("{voter} voted on own post {target}")]
    SelfVote { voter: ActorId, target: PostId },
    #[error("{voter} voted on {target} more than once")]
    DuplicateVote { voter: ActorId, target: PostId },
    #[error("record at t={timestamp} lies outside [0, {horizon}]")]
    OutsideHorizon { timestamp: f64, horizon: f64 },
}

impl SharedHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty() && self.votes.is_empty()
    }

    /// Looks a post up by id. Posts are stored in id order.
    pub fn post(&self, id: PostId) -> Option<&Post> {
        self.posts
            .binary_search_by_key(&id, |p| p.post_id)
            .ok()
            .map(|i| &self.posts[i])
    }

    pub fn posts_by<'a>(&'a self, actor: &'a ActorId) -> impl Iterator<Item = &'a Post> + 'a {
        self.posts.iter().filter(move |p| &p.author == actor)
    }

    pub fn votes_by<'a>(&'a self, actor: &'a ActorId) -> impl Iterator<Item = &'a VoteRecord> + 'a {
        self.votes.iter().filter(move |v| &v.voter == actor)
    }

    pub fn push_post(&mut self, post: Post) {
        debug_assert!(self.posts.last().is_none_or(|p| p.post_id < post.post_id));
        self.posts.push(post);
    }

    pub fn push_vote(&mut self, vote: VoteRecord) {
        self.votes.push(vote);
    }

    /// Collects every structural invariant violation. An empty result means
    /// the history is well formed for the given horizon.
    pub fn violations(&self, horizon: f64) -> Vec<HistoryViolation> {
        let mut out = Vec::new();
        let in_horizon = |t: f64| (0.0..=horizon).contains(&t);

        for (i, post) in self.posts.iter().enumerate() {
            if i > 0 {
                let prev = &self.posts[i - 1];
                // ids are assigned in dispatch order, so both keys must agree
                if prev.timestamp > post.timestamp || prev.post_id >= post.post_id {
                    out.push(HistoryViolation::PostOrder(post.post_id));
                }
            }
            if !in_horizon(post.timestamp) {
                out.push(HistoryViolation::OutsideHorizon {
                    timestamp: post.timestamp,
                    horizon,
                });
            }
            match (post.kind, post.parent, post.stance) {
                (PostKind::NewComment, None, None) => {}
                (PostKind::Reply, Some(parent), Some(_)) => match self.post(parent) {
                    Some(p) if p.post_id < post.post_id && p.timestamp <= post.timestamp => {
                        if p.author == post.author {
                            out.push(HistoryViolation::SelfReply {
                                post: post.post_id,
                                parent,
                            });
                        }
                    }
                    _ => out.push(HistoryViolation::DanglingParent { post: post.post_id }),
                },
                _ => out.push(HistoryViolation::MalformedPost { post: post.post_id }),
            }
        }

        let mut pairs = HashSet::new();
        for (i, vote) in self.votes.iter().enumerate() {
            if i > 0 && self.votes[i - 1].timestamp > vote.timestamp {
                out.push(HistoryViolation::VoteOrder {
                    voter: vote.voter.clone(),
                    target: vote.target,
                });
            }
            if !in_horizon(vote.timestamp) {
                out.push(HistoryViolation::OutsideHorizon {
                    timestamp: vote.timestamp,
                    horizon,
                });
            }
            match self.post(vote.target) {
                None => out.push(HistoryViolation::MissingTarget {
                    voter: vote.voter.clone(),
                    target: vote.target,
                }),
                Some(p) if p.author == vote.voter => out.push(HistoryViolation::SelfVote {
                    voter: vote.voter.clone(),
                    target: vote.target,
                }),
                Some(_) => {}
            }
            if !pairs.insert((&vote.voter, vote.target)) {
                out.push(HistoryViolation::DuplicateVote {
                    voter: vote.voter.clone(),
                    target: vote.target,
                });
            }
        }
        out
    }
}
