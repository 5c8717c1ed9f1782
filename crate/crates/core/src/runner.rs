//! One complete run from a resolved config, plus its metadata document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentBackendKind, AgentError};
use crate::config::{BackendConfig, PlatformConfig, SimulationConfig};
use crate::model::{ActorId, Archetype, ToolId, DEFAULT_CANDIDATE_COUNT};
use crate::platform::{PlatformAdapterKind, SearchError};
use crate::rng::RandomSource;
use crate::scheduler::{run_simulation, AbortCause, EventCounts, InterArrivalMode, RunStatus, SimError, SimulationOutcome};

pub const ACTIONS_DEFINITION: &str = "actions are executed votes, not action events";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("agent backend: {0}")]
    Backend(#[from] AgentError),
    #[error("search provider: {0}")]
    Search(#[from] SearchError),
    #[error("{0}")]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub actor_id: ActorId,
    pub actor_name: String,
    pub archetype: Archetype,
    pub candidate_count: usize,
    pub tools: Vec<ToolId>,
}

/// Written next to the history as `run_meta.json`. The embedded config has
/// the seed filled in, so this file alone reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub interarrival_mode: InterArrivalMode,
    pub horizon_minutes: f64,
    pub default_candidate_count: usize,
    pub recent_window: usize,
    pub event_cap: usize,
    pub backend: AgentBackendKind,
    pub platform: PlatformAdapterKind,
    pub config_hash: String,
    pub roster: Vec<RosterEntry>,
    pub counts: EventCounts,
    pub actions_definition: String,
    pub complete: bool,
    pub abort_cause: Option<AbortCause>,
    pub abort_reason: Option<String>,
    pub config: SimulationConfig,
}

impl RunMeta {
    pub fn new(config: &SimulationConfig, outcome: &SimulationOutcome) -> Self {
        let seed = config.seed.expect("run config carries its seed");
        let abort_reason = match &outcome.status {
            RunStatus::Complete => None,
            RunStatus::Aborted { reason, .. } => Some(reason.clone()),
        };
        RunMeta {
            seed,
            interarrival_mode: config.interarrival_mode,
            horizon_minutes: config.horizon_minutes,
            default_candidate_count: DEFAULT_CANDIDATE_COUNT,
            recent_window: config.recent_window,
            event_cap: config.event_cap,
            backend: match config.backend {
                BackendConfig::Scripted { .. } => AgentBackendKind::Scripted,
                BackendConfig::ChatCompletionHttp(_) => AgentBackendKind::ChatCompletionHttp,
            },
            platform: match config.platform {
                PlatformConfig::InMemory => PlatformAdapterKind::InMemory,
                PlatformConfig::HttpRemote(_) => PlatformAdapterKind::HttpRemote,
            },
            config_hash: config.hash(),
            roster: config
                .actors
                .iter()
                .map(|a| RosterEntry {
                    actor_id: a.actor_id.clone(),
                    actor_name: a.persona.actor_name.clone(),
                    archetype: a.persona.archetype,
                    candidate_count: a.candidate_count,
                    tools: a.tools.clone(),
                })
                .collect(),
            counts: outcome.counts.clone(),
            actions_definition: ACTIONS_DEFINITION.into(),
            complete: outcome.status.is_complete(),
            abort_cause: match outcome.status {
                RunStatus::Complete => None,
                RunStatus::Aborted { cause, .. } => Some(cause),
            },
            abort_reason,
            config: config.clone(),
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    /// The input config with `seed` set.
    pub config: SimulationConfig,
    pub outcome: SimulationOutcome,
    pub meta: RunMeta,
}

/// `explicit`, else the config's seed, else a fresh one below 2^53 so it
/// survives any JSON reader.
pub fn resolve_seed(config: &SimulationConfig, explicit: Option<u64>) -> u64 {
    explicit.or(config.seed).unwrap_or_else(|| rand::random::<u64>() >> 11)
}

pub fn run_config(config: &SimulationConfig, seed: u64, record_draws: bool) -> Result<RunOutput, RunError> {
    let mut config = config.clone();
    config.seed = Some(seed);
    let mut agents = config.build_agents()?;
    let mut platform = config.build_platform();
    let search = config.build_search()?;
    let mut settings = config.settings();
    settings.record_draws = record_draws;
    let outcome = run_simulation(
        &config.actors,
        &settings,
        &mut agents,
        platform.as_mut(),
        search.as_ref(),
        &RandomSource::new(seed),
    )?;
    let meta = RunMeta::new(&config, &outcome);
    Ok(RunOutput { config, outcome, meta })
}
