//! Deterministic backend used for tests, ensembles and offline runs.
//!
//! Every answer is a pure function of the context and the pool:
//!
//! * vote candidates: the `m` highest post ids; `Up` when the post shares a
//!   keyword with the persona's core beliefs, `Down` otherwise;
//! * reply target: the highest post id; `Agree` iff the target author's
//!   archetype is listed for the actor's archetype in the [`AffinityTable`];
//! * content: a persona template cut to a word count inside
//!   `response_length`, chosen by hashing the actor id, its post count and
//!   the target.

use std::collections::{BTreeSet, HashMap};

use super::{word_count, AgentBackend, AgentBackendKind, AgentContext, AgentError};
use crate::behavior::{PostIntent, VoteDecision};
use crate::model::{Archetype, Persona, Post, PostKind, Stance, VoteDirection};
use crate::platform::ToolBox;
use crate::rng::fnv1a64;

const DEFAULT_AFFINITY: &str = include_str!("../../config/affinity.json");

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "also", "because", "being", "could", "every", "first", "their", "there",
    "these", "thing", "think", "those", "through", "which", "while", "would", "should", "where", "other",
];

/// Which archetypes each archetype tends to agree with.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityTable {
    agrees_with: HashMap<Archetype, BTreeSet<Archetype>>,
}

impl AffinityTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: HashMap<Archetype, Vec<Archetype>> = serde_json::from_str(text)?;
        Ok(AffinityTable {
            agrees_with: raw.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        })
    }

    pub fn agrees(&self, actor: Archetype, author: Archetype) -> bool {
        self.agrees_with.get(&actor).is_some_and(|set| set.contains(&author))
    }
}

impl Default for AffinityTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_AFFINITY).expect("bundled affinity table is valid")
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedAgent {
    affinity: AffinityTable,
}

impl ScriptedAgent {
    pub fn new(affinity: AffinityTable) -> Self {
        ScriptedAgent { affinity }
    }

    pub fn stance_toward(&self, ctx: &AgentContext<'_>, post: &Post) -> Stance {
        match ctx.roster.archetype(&post.author) {
            Some(author) if self.affinity.agrees(ctx.persona.archetype, author) => Stance::Agree,
            _ => Stance::Disagree,
        }
    }
}

fn normalize(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Content words of the persona's beliefs, used for vote direction.
pub(crate) fn belief_keywords(persona: &Persona) -> BTreeSet<String> {
    persona
        .core_beliefs
        .iter()
        .flat_map(|b| b.split_whitespace())
        .map(normalize)
        .filter(|w| w.chars().count() >= 5 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn shares_keyword(keywords: &BTreeSet<String>, body: &str) -> bool {
    body.split_whitespace().any(|w| keywords.contains(&normalize(w)))
}

fn filler(archetype: Archetype) -> &'static str {
    match archetype {
        Archetype::CasualUser => {
            "Honestly it feels different around here lately and my neighbours keep talking about it at the bus stop every week."
        }
        Archetype::Expert => {
            "The measured trends are consistent across independent datasets, and the uncertainty ranges are narrow enough to support planning decisions. Local monitoring, transparent reporting and periodic review of thresholds remain essential for credible adaptation policy."
        }
        Archetype::Advocate => {
            "We need binding commitments, fair funding for the communities hit hardest, and action this year rather than another round of consultations."
        }
        Archetype::Skeptic => {
            "Before committing public money we should see the baseline data, the projected costs, and a clear account of what happened after similar measures elsewhere."
        }
        Archetype::Custom => "That is how I see it, and I am happy to hear other views on this.",
    }
}

impl AgentBackend for ScriptedAgent {
    fn kind(&self) -> AgentBackendKind {
        AgentBackendKind::Scripted
    }

    fn select_vote_candidates(
        &mut self,
        ctx: &AgentContext<'_>,
        pool: &[&Post],
        m: usize,
    ) -> Result<Vec<VoteDecision>, AgentError> {
        let keywords = belief_keywords(ctx.persona);
        let mut ranked: Vec<&Post> = pool.to_vec();
        ranked.sort_by_key(|p| std::cmp::Reverse(p.post_id));
        ranked.dedup_by_key(|p| p.post_id);
        Ok(ranked
            .into_iter()
            .take(m)
            .map(|post| {
                let agree = shares_keyword(&keywords, &post.body);
                VoteDecision {
                    target: post.post_id,
                    direction: if agree { VoteDirection::Up } else { VoteDirection::Down },
                    rationale: None,
                }
            })
            .collect())
    }

    fn select_reply_target(&mut self, ctx: &AgentContext<'_>, pool: &[&Post]) -> Result<PostIntent, AgentError> {
        let target = pool
            .iter()
            .filter(|p| &p.author != ctx.actor_id)
            .max_by_key(|p| p.post_id)
            .ok_or_else(|| AgentError::Precondition("reply pool has no posts by other actors".into()))?;
        Ok(PostIntent::reply(target.post_id, self.stance_toward(ctx, target)))
    }

    fn generate_content(
        &mut self,
        ctx: &AgentContext<'_>,
        intent: &PostIntent,
        target: Option<&Post>,
        tools: &mut ToolBox<'_>,
    ) -> Result<String, AgentError> {
        let persona = ctx.persona;
        let range = persona.response_length;
        let seq = ctx.own_post_history.len() as u64;
        let target_id = intent.target.map_or(0, |t| t.0);
        let hash = fnv1a64(
            ctx.actor_id
                .as_str()
                .bytes()
                .chain(seq.to_le_bytes())
                .chain(target_id.to_le_bytes())
                .chain([intent.kind as u8]),
        );
        let span = u64::from(range.max - range.min) + 1;
        let words_wanted = (u64::from(range.min) + hash % span) as usize;

        let mut text = String::new();
        match (intent.kind, target) {
            (PostKind::Reply, Some(parent)) => {
                let verb = match intent.stance {
                    Some(Stance::Agree) => "I agree with",
                    _ => "I disagree with",
                };
                let excerpt: Vec<&str> = parent.body.split_whitespace().take(5).collect();
                text.push_str(&format!(
                    "{verb} {} about \"{}\". ",
                    ctx.roster.name(&parent.author),
                    excerpt.join(" ").replace('"', "")
                ));
            }
            (PostKind::Reply, None) => {
                return Err(AgentError::Precondition("reply intent without a target post".into()));
            }
            (PostKind::NewComment, _) => {
                let label = persona.archetype.label();
                let article = if label.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
                text.push_str(&format!("Speaking as {article} {label}: "));
            }
        }

        let belief = (!persona.core_beliefs.is_empty())
            .then(|| &persona.core_beliefs[(seq as usize) % persona.core_beliefs.len()]);
        if let (true, Some(belief)) = (tools.can_search(), belief) {
            if let Ok(results) = tools.web_search(belief) {
                if let Some(top) = results.first() {
                    text.push_str(&format!("According to {}, {} ", top.title, top.snippet));
                }
            }
        }
        if let Some(belief) = belief {
            text.push_str(belief.trim_end_matches('.'));
            text.push_str(". ");
        }

        let fill = filler(persona.archetype);
        let mut words: Vec<&str> = text.split_whitespace().collect();
        let fill_words: Vec<&str> = fill.split_whitespace().collect();
        let mut i = 0;
        while words.len() < words_wanted {
            words.push(fill_words[i % fill_words.len()]);
            i += 1;
        }
        words.truncate(words_wanted);

        let mut body = words.join(" ");
        if !body.ends_with(['.', '!', '?']) {
            body = body.trim_end_matches([',', ';', ':']).to_owned();
            body.push('.');
        }
        debug_assert_eq!(word_count(&body), words_wanted);
        Ok(body)
    }
}
