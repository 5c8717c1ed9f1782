use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SEARCH_RESULTS: usize = 5;

const DEFAULT_CORPUS: &str = include_str!("../../fixtures/search_corpus.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search corpus {path}: {message}")]
    Corpus { path: String, message: String },
    #[error("search transport: {0}")]
    Transport(String),
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, SearchError>;
}

/// Deterministic search backed by a JSON object that maps lowercase query
/// substrings to result lists. The longest key contained in the query wins;
/// ties go to the lexicographically smaller key.
#[derive(Debug, Clone)]
pub struct FixtureSearch {
    entries: BTreeMap<String, Vec<SearchResult>>,
}

impl FixtureSearch {
    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let raw: BTreeMap<String, Vec<SearchResult>> =
            serde_json::from_str(text).map_err(|e| SearchError::Corpus {
                path: "<inline>".into(),
                message: e.to_string(),
            })?;
        let entries = raw
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .filter(|(k, _)| !k.trim().is_empty())
            .collect();
        Ok(FixtureSearch { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, SearchError> {
        let text = std::fs::read_to_string(path).map_err(|e| SearchError::Corpus {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            SearchError::Corpus { message, .. } => SearchError::Corpus {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// The corpus shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_CORPUS).expect("bundled search corpus is valid")
    }
}

impl SearchProvider for FixtureSearch {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, SearchError> {
        let query = query.to_lowercase();
        let best = self
            .entries
            .iter()
            .filter(|(key, _)| query.contains(key.as_str()))
            .max_by(|(a, _), (b, _)| a.len().cmp(&b.len()).then_with(|| b.cmp(a)));
        Ok(best
            .map(|(_, results)| results.iter().take(MAX_SEARCH_RESULTS).cloned().collect())
            .unwrap_or_default())
    }
}

/// Optional live adapter: `GET {endpoint}?q=<query>` answering with a JSON
/// array of results.
pub struct LiveSearch {
    endpoint: String,
    agent: ureq::Agent,
}

impl LiveSearch {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        LiveSearch {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl SearchProvider for LiveSearch {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, SearchError> {
        let mut results: Vec<SearchResult> = self
            .agent
            .get(&self.endpoint)
            .query("q", query)
            .call()
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        results.truncate(MAX_SEARCH_RESULTS);
        Ok(results)
    }
}
