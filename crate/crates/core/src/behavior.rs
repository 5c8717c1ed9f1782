//! The two procedures an actor runs when one of its events fires.
//!
//! An action event asks the agent for up to `M` vote candidates and passes
//! each through a Bernoulli gate: the vote executes iff a fresh uniform draw
//! `u` satisfies `u > theta_action`. A post event draws `v` and takes the
//! reply branch iff `v <= p_reply`; with no eligible target the reply branch
//! degrades to a new comment.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentBackend, AgentContext, AgentError};
use crate::model::{
    ActorConfig, HistoryScope, Post, PostId, PostKind, Roster, SharedHistory, Stance, VoteDirection, VoteRecord,
};
use crate::platform::{NewPost, Platform, PlatformError, SearchProvider, ToolBox};
use crate::rng::RandomSource;

/// How many posts a `RecentOnly` actor sees when nothing else is configured.
pub const DEFAULT_RECENT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteDecision {
    pub target: PostId,
    pub direction: VoteDirection,
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostIntent {
    pub kind: PostKind,
    pub target: Option<PostId>,
    pub stance: Option<Stance>,
}

impl PostIntent {
    pub fn new_comment() -> Self {
        PostIntent {
            kind: PostKind::NewComment,
            target: None,
            stance: None,
        }
    }

    pub fn reply(target: PostId, stance: Stance) -> Self {
        PostIntent {
            kind: PostKind::Reply,
            target: Some(target),
            stance: Some(stance),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.kind {
            PostKind::NewComment => self.target.is_none() && self.stance.is_none(),
            PostKind::Reply => self.target.is_some() && self.stance.is_some(),
        }
    }
}

/// Bernoulli gate of the action procedure.
pub fn vote_gate(u: f64, theta_action: f64) -> bool {
    u > theta_action
}

/// Branch rule of the post procedure.
pub fn takes_reply_branch(v: f64, p_reply: f64) -> bool {
    v <= p_reply
}

/// The posts an actor may see, oldest first.
pub fn visible_history<'a>(actor: &ActorConfig, history: &'a SharedHistory, recent_window: usize) -> Vec<&'a Post> {
    let posts = &history.posts;
    let start = match actor.persona.history_scope {
        HistoryScope::Full => 0,
        HistoryScope::RecentOnly => posts.len().saturating_sub(recent_window),
    };
    posts[start..].iter().collect()
}

/// Inputs shared by both procedures for a single event.
pub struct EventEnv<'a> {
    pub actor: &'a ActorConfig,
    pub roster: &'a Roster,
    pub topic: &'a str,
    pub recent_window: usize,
    pub search: &'a dyn SearchProvider,
    pub now: f64,
}

impl<'a> EventEnv<'a> {
    fn context<'h>(&self, history: &'h SharedHistory) -> AgentContext<'h>
    where
        'a: 'h,
    {
        let id = &self.actor.actor_id;
        AgentContext {
            actor_id: id,
            persona: &self.actor.persona,
            topic: self.topic,
            visible_posts: visible_history(self.actor, history, self.recent_window),
            own_post_history: history.posts.iter().filter(|p| &p.author == id).collect(),
            own_action_history: history.votes.iter().filter(|v| &v.voter == id).collect(),
            provisioned_tools: &self.actor.tools,
            roster: self.roster,
            now: self.now,
        }
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionReport {
    /// Validated candidates, in the order their gate draws were taken.
    pub considered: Vec<PostId>,
    pub executed: Vec<VoteRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostBranch {
    NewComment,
    Reply,
    /// The reply branch fired but no post by another actor existed yet.
    ReplyFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostReport {
    pub branch: PostBranch,
    pub post: Post,
}

/// Runs one action event and returns the votes that were executed.
///
/// Only platform transport failures and agent failures surface as errors;
/// invalid candidates and rejected votes become warnings.
pub fn execute_action_event(
    env: &EventEnv<'_>,
    history: &mut SharedHistory,
    agent: &mut dyn AgentBackend,
    platform: &mut dyn Platform,
    gate: &mut RandomSource,
) -> Result<ActionReport, EventError> {
    let actor = env.actor;
    let mut report = ActionReport::default();

    let decisions = {
        let voted: HashSet<PostId> = history.votes_by(&actor.actor_id).map(|v| v.target).collect();
        let pool: Vec<&Post> = history
            .posts
            .iter()
            .filter(|p| p.author != actor.actor_id && !voted.contains(&p.post_id))
            .collect();
        if pool.is_empty() {
            return Ok(report);
        }
        let ctx = env.context(history);
        let raw = agent.select_vote_candidates(&ctx, &pool, actor.candidate_count)?;

        let eligible: HashSet<PostId> = pool.iter().map(|p| p.post_id).collect();
        let mut seen = HashSet::new();
        let mut accepted = Vec::new();
        for decision in raw {
            if !eligible.contains(&decision.target) {
                report
                    .warnings
                    .push(format!("dropped candidate {}: not in eligible pool", decision.target));
            } else if !seen.insert(decision.target) {
                report
                    .warnings
                    .push(format!("dropped candidate {}: duplicate", decision.target));
            } else if accepted.len() == actor.candidate_count {
                report
                    .warnings
                    .push(format!("dropped candidate {}: more than M candidates", decision.target));
            } else {
                accepted.push(decision);
            }
        }
        accepted
    };

    for decision in decisions {
        report.considered.push(decision.target);
        let u = gate.draw_uniform();
        if !vote_gate(u, actor.theta_action) {
            continue;
        }
        let vote = VoteRecord {
            voter: actor.actor_id.clone(),
            target: decision.target,
            direction: decision.direction,
            timestamp: env.now,
        };
        match platform.vote(&vote) {
            Ok(()) => {
                history.push_vote(vote.clone());
                report.executed.push(vote);
            }
            Err(err) if err.is_fatal() => return Err(err.into()),
            Err(err) => report.warnings.push(format!("vote on {} not recorded: {err}", vote.target)),
        }
    }
    Ok(report)
}

/// Runs one post event and returns the published post.
pub fn execute_post_event(
    env: &EventEnv<'_>,
    history: &mut SharedHistory,
    agent: &mut dyn AgentBackend,
    platform: &mut dyn Platform,
    branch_rng: &mut RandomSource,
) -> Result<PostReport, EventError> {
    let actor = env.actor;
    let v = branch_rng.draw_uniform();

    let (branch, draft) = {
        let pool: Vec<&Post> = history
            .posts
            .iter()
            .filter(|p| p.author != actor.actor_id)
            .collect();
        let branch = match (takes_reply_branch(v, actor.p_reply), pool.is_empty()) {
            (false, _) => PostBranch::NewComment,
            (true, true) => PostBranch::ReplyFallback,
            (true, false) => PostBranch::Reply,
        };

        let ctx = env.context(history);
        let (intent, target) = if branch == PostBranch::Reply {
            let intent = agent.select_reply_target(&ctx, &pool)?;
            let target = intent
                .target
                .and_then(|id| pool.iter().copied().find(|p| p.post_id == id));
            match target {
                Some(t) if intent.is_valid() && intent.kind == PostKind::Reply => (intent, Some(t)),
                _ => {
                    return Err(AgentError::InvalidOutput(format!(
                        "reply intent {intent:?} does not name an eligible target"
                    ))
                    .into())
                }
            }
        } else {
            (PostIntent::new_comment(), None)
        };

        let mut tools = ToolBox::new(&actor.tools, env.search);
        let body = agent.generate_content(&ctx, &intent, target, &mut tools)?;
        if body.trim().is_empty() {
            return Err(AgentError::InvalidOutput("empty post body".into()).into());
        }
        let draft = NewPost {
            author: actor.actor_id.clone(),
            timestamp: env.now,
            body,
            kind: intent.kind,
            parent: intent.target,
            stance: intent.stance,
            tool_trace: tools.into_trace(),
        };
        (branch, draft)
    };

    let id = platform.publish(&draft)?;
    if history.posts.last().is_some_and(|p| p.post_id >= id) {
        return Err(PlatformError::Status {
            status: 0,
            message: format!("platform assigned non-monotone post id {id}"),
        }
        .into());
    }
    let post = draft.into_post(id);
    history.push_post(post.clone());
    Ok(PostReport { branch, post })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentBackendKind, ScriptedAgent};
    use crate::model::{Archetype, Persona, ToolId, WordRange};
    use crate::platform::{FixtureSearch, InMemoryPlatform};

    fn actor(id: &str, scope: HistoryScope, p_reply: f64, theta: f64) -> ActorConfig {
        ActorConfig {
            actor_id: id.into(),
            persona: Persona {
                actor_name: id.into(),
                archetype: Archetype::Skeptic,
                biography: String::new(),
                tone: "direct".into(),
                content_style: "fact-focused".into(),
                response_length: WordRange::new(10, 20),
                history_scope: scope,
                core_beliefs: vec!["Costs must be justified.".into()],
            },
            lambda_post: 1.0,
            lambda_action: 1.0,
            p_reply,
            theta_action: theta,
            candidate_count: 3,
            tools: ToolId::BASE_SUITE.to_vec(),
        }
    }

    fn history_with(n: u64, author_of: impl Fn(u64) -> &'static str) -> SharedHistory {
        let mut h = SharedHistory::new();
        for i in 1..=n {
            h.push_post(Post {
                post_id: PostId(i),
                author: author_of(i).into(),
                timestamp: i as f64 * 0.01,
                body: format!("post number {i}"),
                kind: PostKind::NewComment,
                parent: None,
                stance: None,
                tool_trace: vec![],
            });
        }
        h
    }

    fn platform_with(history: &SharedHistory) -> InMemoryPlatform {
        let mut p = InMemoryPlatform::new();
        for post in &history.posts {
            p.publish(&NewPost {
                author: post.author.clone(),
                timestamp: post.timestamp,
                body: post.body.clone(),
                kind: post.kind,
                parent: post.parent,
                stance: post.stance,
                tool_trace: vec![],
            })
            .unwrap();
        }
        p
    }

    #[test]
    fn visible_history_scopes() {
        let h = history_with(37, |_| "x");
        let full = actor("a", HistoryScope::Full, 0.5, 0.5);
        assert_eq!(visible_history(&full, &h, 10).len(), 37);
        let recent = actor("a", HistoryScope::RecentOnly, 0.5, 0.5);
        let seen: Vec<u64> = visible_history(&recent, &h, 10).iter().map(|p| p.post_id.0).collect();
        // oracle: sort by id, keep the last ten
        let mut ids: Vec<u64> = h.posts.iter().map(|p| p.post_id.0).collect();
        ids.sort_unstable();
        assert_eq!(seen, ids[ids.len() - 10..].to_vec());
        let small = history_with(4, |_| "x");
        assert_eq!(visible_history(&recent, &small, 10).len(), 4);
    }

    #[test]
    fn gate_rules_at_boundaries() {
        assert!(vote_gate(0.5, 0.35));
        assert!(!vote_gate(0.35, 0.35));
        assert!(!vote_gate(0.999_999, 1.0));
        assert!(takes_reply_branch(0.75, 0.75));
        assert!(!takes_reply_branch(0.76, 0.75));
    }

    #[test]
    fn gate_frequency_matches_one_minus_theta() {
        let mut rng = RandomSource::new(2024);
        for theta in [0.0, 0.25, 0.35, 0.5, 0.75, 1.0] {
            let n = 10_000;
            let hits = (0..n).filter(|_| vote_gate(rng.draw_uniform(), theta)).count();
            let frac = hits as f64 / n as f64;
            let sigma = (theta * (1.0 - theta) / n as f64).sqrt();
            assert!((frac - (1.0 - theta)).abs() <= (3.0 * sigma).max(1e-12), "theta {theta}: {frac}");
        }
    }

    struct Env {
        actor: ActorConfig,
        roster: Roster,
        search: FixtureSearch,
    }

    impl Env {
        fn new(actor: ActorConfig) -> Self {
            let roster = Roster::from_actors(std::slice::from_ref(&actor));
            Env {
                actor,
                roster,
                search: FixtureSearch::bundled(),
            }
        }

        fn env(&self, now: f64) -> EventEnv<'_> {
            EventEnv {
                actor: &self.actor,
                roster: &self.roster,
                topic: "t",
                recent_window: DEFAULT_RECENT_WINDOW,
                search: &self.search,
                now,
            }
        }
    }

    #[test]
    fn empty_history_action_is_a_no_op() {
        let e = Env::new(actor("a", HistoryScope::Full, 0.5, 0.0));
        let mut h = SharedHistory::new();
        let mut p = InMemoryPlatform::new();
        let mut rng = RandomSource::new(1).with_tape();
        let r = execute_action_event(&e.env(1.0), &mut h, &mut ScriptedAgent::default(), &mut p, &mut rng).unwrap();
        assert!(r.considered.is_empty() && r.executed.is_empty());
        assert!(rng.take_tape().is_empty());
    }

    #[test]
    fn theta_one_never_votes() {
        let e = Env::new(actor("a", HistoryScope::Full, 0.5, 1.0));
        let mut h = history_with(20, |_| "b");
        let mut p = platform_with(&h);
        let mut rng = RandomSource::new(5);
        for _ in 0..100 {
            let r = execute_action_event(&e.env(1.0), &mut h, &mut ScriptedAgent::default(), &mut p, &mut rng)
                .unwrap();
            assert_eq!(r.considered.len(), 3);
            assert!(r.executed.is_empty());
        }
    }

    #[test]
    fn own_posts_and_prior_targets_are_excluded() {
        let e = Env::new(actor("a", HistoryScope::Full, 0.5, 0.0));
        let mut h = history_with(6, |i| if i % 2 == 0 { "a" } else { "b" });
        let mut p = platform_with(&h);
        let mut rng = RandomSource::new(5);
        let mut agent = ScriptedAgent::default();
        let first = execute_action_event(&e.env(1.0), &mut h, &mut agent, &mut p, &mut rng).unwrap();
        let targets: Vec<u64> = first.executed.iter().map(|v| v.target.0).collect();
        assert_eq!(targets, vec![5, 3, 1]);
        let second = execute_action_event(&e.env(1.1), &mut h, &mut agent, &mut p, &mut rng).unwrap();
        assert!(second.considered.is_empty());
        assert!(h.violations(2.0).is_empty());
    }

    struct RogueAgent;

    impl AgentBackend for RogueAgent {
        fn kind(&self) -> AgentBackendKind {
            AgentBackendKind::Scripted
        }

        fn select_vote_candidates(
            &mut self,
            _: &AgentContext<'_>,
            _: &[&Post],
            _: usize,
        ) -> Result<Vec<VoteDecision>, AgentError> {
            let d = |id| VoteDecision {
                target: PostId(id),
                direction: VoteDirection::Up,
                rationale: None,
            };
            Ok(vec![d(2), d(1), d(1), d(999), d(3), d(5)])
        }

        fn select_reply_target(&mut self, _: &AgentContext<'_>, _: &[&Post]) -> Result<PostIntent, AgentError> {
            Ok(PostIntent::reply(PostId(2), Stance::Agree))
        }

        fn generate_content(
            &mut self,
            _: &AgentContext<'_>,
            _: &PostIntent,
            _: Option<&Post>,
            _: &mut ToolBox<'_>,
        ) -> Result<String, AgentError> {
            Ok("   ".into())
        }
    }

    #[test]
    fn invalid_agent_candidates_are_dropped_with_warnings() {
        let e = Env::new(actor("a", HistoryScope::Full, 1.0, 0.0));
        let mut h = history_with(5, |i| if i == 2 { "a" } else { "b" });
        let mut p = platform_with(&h);
        let mut rng = RandomSource::new(9);
        let r = execute_action_event(&e.env(1.0), &mut h, &mut RogueAgent, &mut p, &mut rng).unwrap();
        // 2 is own, the second 1 is a duplicate, 999 is missing
        assert_eq!(r.considered, vec![PostId(1), PostId(3), PostId(5)]);
        assert_eq!(r.warnings.len(), 3);
        assert!(h.violations(2.0).is_empty());
    }

    #[test]
    fn rogue_reply_and_empty_body_are_agent_errors() {
        let e = Env::new(actor("a", HistoryScope::Full, 1.0, 0.0));
        let mut h = history_with(3, |i| if i == 2 { "a" } else { "b" });
        let mut p = platform_with(&h);
        let mut rng = RandomSource::new(9);
        let err = execute_post_event(&e.env(1.0), &mut h, &mut RogueAgent, &mut p, &mut rng).unwrap_err();
        assert!(matches!(err, EventError::Agent(AgentError::InvalidOutput(_))));
        assert_eq!(h.posts.len(), 3);
    }

    #[test]
    fn empty_history_reply_falls_back() {
        let e = Env::new(actor("a", HistoryScope::Full, 1.0, 0.0));
        let mut h = SharedHistory::new();
        let mut p = InMemoryPlatform::new();
        let mut rng = RandomSource::new(3);
        let r = execute_post_event(&e.env(0.5), &mut h, &mut ScriptedAgent::default(), &mut p, &mut rng).unwrap();
        assert_eq!(r.branch, PostBranch::ReplyFallback);
        assert_eq!(r.post.kind, PostKind::NewComment);
        assert_eq!(r.post.post_id, PostId(1));
        assert_eq!(p.history().posts.len(), 1);
    }

    #[test]
    fn zero_reply_probability_never_replies() {
        let e = Env::new(actor("a", HistoryScope::Full, 0.0, 0.0));
        let mut h = history_with(3, |_| "b");
        let mut p = platform_with(&h);
        let mut rng = RandomSource::new(3);
        for i in 0..200 {
            let r = execute_post_event(&e.env(1.0 + i as f64 * 0.01), &mut h, &mut ScriptedAgent::default(), &mut p, &mut rng)
                .unwrap();
            assert_eq!(r.post.kind, PostKind::NewComment);
        }
    }

    #[test]
    fn reply_fraction_tracks_p_reply() {
        let e = Env::new(actor("a", HistoryScope::Full, 0.75, 0.0));
        let mut h = history_with(1, |_| "b");
        let mut p = platform_with(&h);
        let mut rng = RandomSource::new(11);
        let n = 10_000;
        let mut replies = 0;
        for i in 0..n {
            let r = execute_post_event(&e.env(1.0 + i as f64 * 1e-4), &mut h, &mut ScriptedAgent::default(), &mut p, &mut rng)
                .unwrap();
            if r.branch == PostBranch::Reply {
                assert_eq!(r.post.parent, Some(PostId(1)));
                replies += 1;
            }
        }
        let frac = replies as f64 / n as f64;
        assert!((frac - 0.75).abs() <= 0.02, "{frac}");
        assert!(h.violations(10.0).is_empty());
    }
}
