//! Many independent runs of one config over a list of seeds.
//!
//! Each seed is a self-contained run with its own agents and platform, so
//! runs can execute on a rayon pool (`parallel` feature) or one after the
//! other. Both paths return results in seed order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::behavior::PostBranch;
use crate::config::SimulationConfig;
use crate::metrics::{actor_breakdown, per_minute_activity, ActivitySeries, ActorTally};
use crate::model::{ActorId, HistoryViolation};
use crate::runner::{run_config, RunError};
use crate::scheduler::{EventOutcome, SimulationOutcome};

/// Reply-branch tallies of one actor. Posts produced by the cold-start
/// fallback are counted apart from deliberate new comments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchTally {
    pub replies: u64,
    pub chosen_new: u64,
    pub fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub seed: u64,
    pub complete: bool,
    pub series: ActivitySeries,
    pub actors: Vec<ActorTally>,
    pub branches: Vec<BranchTally>,
    pub violations: Vec<String>,
}

pub fn branch_tallies(outcome: &SimulationOutcome, roster: &[ActorId]) -> Vec<BranchTally> {
    let mut by_actor: BTreeMap<&ActorId, BranchTally> = BTreeMap::new();
    for entry in &outcome.trace {
        if let EventOutcome::Posted { branch, .. } = &entry.outcome {
            let t = by_actor.entry(&entry.actor).or_default();
            match branch {
                PostBranch::Reply => t.replies += 1,
                PostBranch::NewComment => t.chosen_new += 1,
                PostBranch::ReplyFallback => t.fallbacks += 1,
            }
        }
    }
    roster.iter().map(|a| by_actor.get(a).copied().unwrap_or_default()).collect()
}

/// Runs `config` once with `seed` and keeps the summary numbers.
pub fn run_member(config: &SimulationConfig, seed: u64) -> Result<EnsembleRun, RunError> {
    let out = run_config(config, seed, false)?;
    let roster: Vec<ActorId> = config.actors.iter().map(|a| a.actor_id.clone()).collect();
    let history = &out.outcome.history;
    Ok(EnsembleRun {
        seed,
        complete: out.outcome.status.is_complete(),
        series: per_minute_activity(history, config.horizon_minutes),
        actors: actor_breakdown(history, &roster),
        branches: branch_tallies(&out.outcome, &roster),
        violations: history
            .violations(config.horizon_minutes)
            .iter()
            .map(HistoryViolation::to_string)
            .collect(),
    })
}

pub fn run_ensemble_sequential(config: &SimulationConfig, seeds: &[u64]) -> Result<Vec<EnsembleRun>, RunError> {
    seeds.iter().map(|&s| run_member(config, s)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_ensemble_parallel(config: &SimulationConfig, seeds: &[u64]) -> Result<Vec<EnsembleRun>, RunError> {
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| run_member(config, s)).collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn run_ensemble(config: &SimulationConfig, seeds: &[u64]) -> Result<Vec<EnsembleRun>, RunError> {
    #[cfg(feature = "parallel")]
    {
        run_ensemble_parallel(config, seeds)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_ensemble_sequential(config, seeds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSummary {
    pub actor: ActorId,
    pub mean_posts: f64,
    pub mean_votes: f64,
    /// Pooled over runs: replies / (replies + deliberate new comments).
    pub reply_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub mean_total_posts: f64,
    pub mean_total_votes: f64,
    pub actors: Vec<ActorSummary>,
}

pub fn summarize(runs: &[EnsembleRun]) -> EnsembleSummary {
    let n = runs.len().max(1) as f64;
    let width = runs.first().map_or(0, |r| r.actors.len());
    let actors = (0..width)
        .map(|i| {
            let (mut posts, mut votes, mut replies, mut chosen) = (0u64, 0u64, 0u64, 0u64);
            for r in runs {
                posts += r.actors[i].posts;
                votes += r.actors[i].votes;
                replies += r.branches[i].replies;
                chosen += r.branches[i].chosen_new;
            }
            ActorSummary {
                actor: runs[0].actors[i].actor.clone(),
                mean_posts: posts as f64 / n,
                mean_votes: votes as f64 / n,
                reply_fraction: (replies + chosen > 0).then(|| replies as f64 / (replies + chosen) as f64),
            }
        })
        .collect();
    EnsembleSummary {
        runs: runs.len(),
        mean_total_posts: runs.iter().map(|r| r.series.total_posts()).sum::<u64>() as f64 / n,
        mean_total_votes: runs.iter().map(|r| r.series.total_votes()).sum::<u64>() as f64 / n,
        actors,
    }
}
