use serde::Deserialize;

use super::AgentContext;
use crate::model::{Post, Stance};
use crate::platform::SearchResult;

const BUNDLED: &str = include_str!("../../prompts/templates.toml");

/// Text templates for chat-completion prompts; see `prompts/templates.toml`.
#[derive(Debug, Clone, Deserialize)]
pub struct PromptTemplates {
    pub system: String,
    pub history_header: String,
    pub history_line: String,
    pub reply_marker: String,
    pub empty_history: String,
    pub vote_task: String,
    pub reply_task: String,
    pub new_comment_task: String,
    pub reply_content_task: String,
    pub tool_hint: String,
    pub tool_results: String,
    pub no_results: String,
    pub reformat: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_toml(BUNDLED).expect("bundled prompt templates are valid")
    }
}

/// Replaces `{key}` for each listed key; other braces are left alone.
pub(crate) fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn stance_label(stance: Stance) -> &'static str {
    match stance {
        Stance::Agree => "agree",
        Stance::Disagree => "disagree",
    }
}

impl PromptTemplates {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn system_prompt(&self, ctx: &AgentContext<'_>) -> String {
        let p = ctx.persona;
        let beliefs: Vec<String> = p.core_beliefs.iter().map(|b| format!("- {b}")).collect();
        let (min, max) = (p.response_length.min.to_string(), p.response_length.max.to_string());
        render(
            self.system.trim(),
            &[
                ("actor_name", &p.actor_name),
                ("archetype", p.archetype.label()),
                ("topic", ctx.topic),
                ("biography", &p.biography),
                ("tone", &p.tone),
                ("content_style", &p.content_style),
                ("core_beliefs", &beliefs.join("\n")),
                ("min_words", &min),
                ("max_words", &max),
            ],
        )
    }

    pub fn post_line(&self, ctx: &AgentContext<'_>, post: &Post) -> String {
        let marker = match (post.parent, post.stance) {
            (Some(parent), Some(stance)) => render(
                &self.reply_marker,
                &[("parent", &parent.to_string()), ("stance", stance_label(stance))],
            ),
            _ => String::new(),
        };
        let archetype = ctx.roster.archetype(&post.author).map_or("participant", |a| a.label());
        render(
            &self.history_line,
            &[
                ("post_id", &post.post_id.to_string()),
                ("author_name", ctx.roster.name(&post.author)),
                ("author_archetype", archetype),
                ("reply_marker", &marker),
                ("body", &post.body),
            ],
        )
    }

    /// The visible history, oldest first, cut to the last `limit` posts.
    pub fn history_block(&self, ctx: &AgentContext<'_>, limit: Option<usize>) -> String {
        let posts = &ctx.visible_posts;
        let start = limit.map_or(0, |k| posts.len().saturating_sub(k));
        let mut out = self.history_header.clone();
        out.push('\n');
        if posts[start..].is_empty() {
            out.push_str(&self.empty_history);
        }
        for post in &posts[start..] {
            out.push_str(&self.post_line(ctx, post));
            out.push('\n');
        }
        out.trim_end().to_owned()
    }

    fn candidates(&self, ctx: &AgentContext<'_>, pool: &[&Post]) -> String {
        pool.iter()
            .map(|p| self.post_line(ctx, p))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn vote_prompt(&self, ctx: &AgentContext<'_>, pool: &[&Post], m: usize, limit: Option<usize>) -> String {
        let task = render(
            self.vote_task.trim(),
            &[("m", &m.to_string()), ("candidates", &self.candidates(ctx, pool))],
        );
        format!("{}\n\n{task}", self.history_block(ctx, limit))
    }

    pub fn reply_prompt(&self, ctx: &AgentContext<'_>, pool: &[&Post], limit: Option<usize>) -> String {
        let task = render(self.reply_task.trim(), &[("candidates", &self.candidates(ctx, pool))]);
        format!("{}\n\n{task}", self.history_block(ctx, limit))
    }

    pub fn content_prompt(
        &self,
        ctx: &AgentContext<'_>,
        target: Option<(&Post, Stance)>,
        can_search: bool,
        limit: Option<usize>,
    ) -> String {
        let hint = if can_search { self.tool_hint.trim_end() } else { "" };
        let task = match target {
            None => render(self.new_comment_task.trim(), &[("tool_hint", hint)]),
            Some((post, stance)) => render(
                self.reply_content_task.trim(),
                &[
                    ("target_id", &post.post_id.to_string()),
                    ("target_author", ctx.roster.name(&post.author)),
                    (
                        "stance_verb",
                        match stance {
                            Stance::Agree => "agree with",
                            Stance::Disagree => "disagree with",
                        },
                    ),
                    ("target_body", &post.body),
                    ("tool_hint", hint),
                ],
            ),
        };
        format!("{}\n\n{task}", self.history_block(ctx, limit))
    }

    pub fn tool_results_prompt(&self, query: &str, results: &[SearchResult]) -> String {
        let listed = if results.is_empty() {
            self.no_results.clone()
        } else {
            results
                .iter()
                .enumerate()
                .map(|(i, r)| format!("{}. {} ({}): {}", i + 1, r.title, r.url, r.snippet))
                .collect::<Vec<_>>()
                .join("\n")
        };
        render(self.tool_results.trim(), &[("query", query), ("results", &listed)])
    }

    pub fn reformat_prompt(&self, problem: &str) -> String {
        render(&self.reformat, &[("problem", problem)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_leaves_json_braces() {
        let out = render(r#"pick {m}: {"votes": []}"#, &[("m", "3")]);
        assert_eq!(out, r#"pick 3: {"votes": []}"#);
    }

    #[test]
    fn bundled_templates_parse() {
        let t = PromptTemplates::default();
        assert!(t.system.contains("{actor_name}"));
        assert!(t.vote_task.contains("{m}"));
    }
}
