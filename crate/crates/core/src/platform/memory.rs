use std::collections::{HashMap, HashSet};

use super::{HistoryRequest, NewPost, Platform, PlatformAdapterKind, PlatformError};
use crate::model::{ActorId, Post, PostId, PostKind, SharedHistory, VoteDirection, VoteRecord};

/// Process-local platform. Every accepted call is applied to its own
/// [`SharedHistory`] before returning.
#[derive(Debug, Default)]
pub struct InMemoryPlatform {
    history: SharedHistory,
    voted: HashSet<(ActorId, PostId)>,
    scores: HashMap<PostId, i64>,
}

impl InMemoryPlatform {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history(&self) -> &SharedHistory {
        &self.history
    }

    /// Net vote tally (ups minus downs) of a post.
    pub fn score(&self, post: PostId) -> i64 {
        self.scores.get(&post).copied().unwrap_or(0)
    }

    fn next_id(&self) -> PostId {
        PostId(self.history.posts.last().map_or(1, |p| p.post_id.0 + 1))
    }
}

/// Validation of a post before it is stored.
pub(crate) fn check_new_post(post: &NewPost, lookup: impl Fn(PostId) -> Option<ActorId>) -> Result<(), String> {
    if post.body.trim().is_empty() {
        return Err("post body is empty".into());
    }
    if !post.timestamp.is_finite() || post.timestamp < 0.0 {
        return Err(format!("invalid timestamp {}", post.timestamp));
    }
    match (post.kind, post.parent, post.stance) {
        (PostKind::NewComment, None, None) => Ok(()),
        (PostKind::NewComment, _, _) => Err("new comment cannot carry a parent or stance".into()),
        (PostKind::Reply, None, _) => Err("reply requires a parent".into()),
        (PostKind::Reply, Some(_), None) => Err("reply requires a stance".into()),
        (PostKind::Reply, Some(parent), Some(_)) => match lookup(parent) {
            None => Err(format!("parent post {parent} does not exist")),
            Some(author) if author == post.author => Err(format!("cannot reply to own post {parent}")),
            Some(_) => Ok(()),
        },
    }
}

impl Platform for InMemoryPlatform {
    fn kind(&self) -> PlatformAdapterKind {
        PlatformAdapterKind::InMemory
    }

    fn publish(&mut self, post: &NewPost) -> Result<PostId, PlatformError> {
        check_new_post(post, |id| self.history.post(id).map(|p| p.author.clone()))
            .map_err(PlatformError::Validation)?;
        if let Some(last) = self.history.posts.last() {
            if post.timestamp < last.timestamp {
                return Err(PlatformError::Validation(format!(
                    "timestamp {} precedes latest post at {}",
                    post.timestamp, last.timestamp
                )));
            }
        }
        let id = self.next_id();
        self.history.push_post(post.clone().into_post(id));
        Ok(id)
    }

    fn vote(&mut self, vote: &VoteRecord) -> Result<(), PlatformError> {
        let target = self
            .history
            .post(vote.target)
            .ok_or_else(|| PlatformError::Validation(format!("post {} does not exist", vote.target)))?;
        if target.author == vote.voter {
            return Err(PlatformError::Validation(format!(
                "{} cannot vote on own post {}",
                vote.voter, vote.target
            )));
        }
        if !self.voted.insert((vote.voter.clone(), vote.target)) {
            return Err(PlatformError::Duplicate {
                voter: vote.voter.clone(),
                target: vote.target,
            });
        }
        let delta = match vote.direction {
            VoteDirection::Up => 1,
            VoteDirection::Down => -1,
        };
        *self.scores.entry(vote.target).or_default() += delta;
        self.history.push_vote(vote.clone());
        Ok(())
    }

    fn fetch_history(&mut self, scope: HistoryRequest) -> Result<Vec<Post>, PlatformError> {
        let posts = &self.history.posts;
        let start = match scope {
            HistoryRequest::Full => 0,
            HistoryRequest::RecentOnly(k) => posts.len().saturating_sub(k),
        };
        Ok(posts[start..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stance;

    #[test]
    fn tallies_are_adapter_side() {
        let mut p = InMemoryPlatform::new();
        let id = p
            .publish(&NewPost {
                author: "a".into(),
                timestamp: 0.1,
                body: "hello".into(),
                kind: PostKind::NewComment,
                parent: None,
                stance: None,
                tool_trace: vec![],
            })
            .unwrap();
        for (voter, dir) in [("b", VoteDirection::Up), ("c", VoteDirection::Up), ("d", VoteDirection::Down)] {
            p.vote(&VoteRecord {
                voter: voter.into(),
                target: id,
                direction: dir,
                timestamp: 0.2,
            })
            .unwrap();
        }
        assert_eq!(p.score(id), 1);
        assert_eq!(p.history().votes.len(), 3);
    }

    #[test]
    fn reply_shape_is_checked() {
        let lookup = |_| Some(ActorId::from("x"));
        let mut post = NewPost {
            author: "a".into(),
            timestamp: 1.0,
            body: "b".into(),
            kind: PostKind::Reply,
            parent: Some(PostId(1)),
            stance: None,
            tool_trace: vec![],
        };
        assert!(check_new_post(&post, lookup).is_err());
        post.stance = Some(Stance::Agree);
        assert!(check_new_post(&post, lookup).is_ok());
        post.author = "x".into();
        assert!(check_new_post(&post, lookup).is_err());
    }
}
