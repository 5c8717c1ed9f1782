//! Global event queue and the dispatch loop.
//!
//! Each actor owns one pending post event and one pending action event. The
//! loop pops the earliest event, stops as soon as its fire time exceeds the
//! horizon (the popped event is discarded), runs the matching procedure and
//! reschedules the same actor and procedure after a fresh inter-arrival gap.
//! Ties on fire time are served in insertion order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentBackend;
use crate::behavior::{self, EventEnv, EventError, PostBranch};
use crate::model::{ActorConfig, ActorId, PostId, PostKind, Roster, SharedHistory, Stance, VoteDirection};
use crate::platform::{Platform, SearchProvider};
use crate::rng::{ActorStreams, RandomSource, StreamKind};

/// Default per-actor, per-procedure dispatch limit.
pub const DEFAULT_EVENT_CAP: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Post,
    Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub fire_time: f64,
    pub actor: ActorId,
    pub procedure: Procedure,
    pub sequence: u64,
}

impl Eq for ScheduledEvent {}

impl Ord for ScheduledEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.fire_time
            .total_cmp(&other.fire_time)
            .then(self.sequence.cmp(&other.sequence))
    }
}

impl PartialOrd for ScheduledEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap on `(fire_time, sequence)`.
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<ScheduledEvent>>,
    next_sequence: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules an event and returns its sequence number.
    ///
    /// # Panics
    ///
    /// If `fire_time` is negative or not finite.
    pub fn push(&mut self, fire_time: f64, actor: ActorId, procedure: Procedure) -> u64 {
        assert!(
            fire_time.is_finite() && fire_time >= 0.0,
            "invalid fire time {fire_time}"
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Reverse(ScheduledEvent {
            fire_time,
            actor,
            procedure,
            sequence,
        }));
        sequence
    }

    pub fn pop(&mut self) -> Option<ScheduledEvent> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn peek(&self) -> Option<&ScheduledEvent> {
        self.heap.peek().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Pending events in dispatch order.
    pub fn snapshot(&self) -> Vec<ScheduledEvent> {
        let mut events: Vec<_> = self.heap.iter().map(|Reverse(e)| e.clone()).collect();
        events.sort();
        events
    }
}

/// How an actor's waiting time between same-kind events is drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum InterArrivalMode {
    /// Exponential gaps with mean `1 / rate`: a Poisson process with `rate`
    /// events per minute.
    #[default]
    ExponentialRate,
    /// The gap itself is an integer Poisson(`rate`) draw.
    LiteralPoisson,
}

impl fmt::Display for InterArrivalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterArrivalMode::ExponentialRate => "exponential_rate",
            InterArrivalMode::LiteralPoisson => "literal_poisson",
        })
    }
}

impl FromStr for InterArrivalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "exponential_rate" | "exponential" => Ok(InterArrivalMode::ExponentialRate),
            "literal_poisson" | "poisson" => Ok(InterArrivalMode::LiteralPoisson),
            other => Err(format!(
                "unknown inter-arrival mode `{other}` (expected exponential_rate or literal_poisson)"
            )),
        }
    }
}

/// Draws the waiting time until an actor's next event of one kind. The gap
/// is appended to the stream's tape when recording is on.
pub fn sample_interarrival(rate: f64, mode: InterArrivalMode, rng: &mut RandomSource) -> Result<f64, SimError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(SimError::Config(format!("rate {rate} must be strictly positive")));
    }
    let gap = match mode {
        InterArrivalMode::ExponentialRate => Exp::new(rate)
            .map_err(|e| SimError::Config(e.to_string()))?
            .sample(rng),
        InterArrivalMode::LiteralPoisson => Poisson::new(rate)
            .map_err(|e| SimError::Config(e.to_string()))?
            .sample(rng),
    };
    rng.record(gap);
    Ok(gap)
}

fn rate_of(actor: &ActorConfig, procedure: Procedure) -> f64 {
    match procedure {
        Procedure::Post => actor.lambda_post,
        Procedure::Action => actor.lambda_action,
    }
}

fn clock_of(streams: &mut ActorStreams, procedure: Procedure) -> &mut RandomSource {
    match procedure {
        Procedure::Post => &mut streams.post_clock,
        Procedure::Action => &mut streams.action_clock,
    }
}

/// Seeds the queue with one post and one action event per actor, in roster
/// order. `streams[i]` must belong to `actors[i]`.
pub fn initialize_queue(
    actors: &[ActorConfig],
    mode: InterArrivalMode,
    streams: &mut [ActorStreams],
) -> Result<EventQueue, SimError> {
    if actors.is_empty() {
        return Err(SimError::Config("actor list is empty".into()));
    }
    if streams.len() != actors.len() {
        return Err(SimError::Config("one stream set per actor is required".into()));
    }
    let mut queue = EventQueue::new();
    for (actor, streams) in actors.iter().zip(streams.iter_mut()) {
        for procedure in [Procedure::Post, Procedure::Action] {
            let t = sample_interarrival(rate_of(actor, procedure), mode, clock_of(streams, procedure))?;
            queue.push(t, actor.actor_id.clone(), procedure);
        }
    }
    Ok(queue)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub horizon: f64,
    pub mode: InterArrivalMode,
    pub recent_window: usize,
    pub event_cap: usize,
    pub topic: String,
    /// Keep every gap and uniform draw, per actor and stream.
    pub record_draws: bool,
    /// Wall-clock seconds slept per simulated minute between events.
    pub pacing: Option<f64>,
}

impl SimulationSettings {
    pub fn new(horizon: f64) -> Self {
        SimulationSettings {
            horizon,
            mode: InterArrivalMode::default(),
            recent_window: behavior::DEFAULT_RECENT_WINDOW,
            event_cap: DEFAULT_EVENT_CAP,
            topic: String::new(),
            record_draws: false,
            pacing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventOutcome {
    Posted {
        post_id: PostId,
        kind: PostKind,
        parent: Option<PostId>,
        stance: Option<Stance>,
        branch: PostBranch,
    },
    Voted {
        considered: Vec<PostId>,
        executed: Vec<(PostId, VoteDirection)>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub fire_time: f64,
    pub actor: ActorId,
    pub procedure: Procedure,
    pub sequence: u64,
    pub outcome: EventOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub post_events: u64,
    pub action_events: u64,
    pub posts: u64,
    pub new_comments: u64,
    pub replies: u64,
    pub reply_fallbacks: u64,
    pub votes: u64,
    pub skipped_events: u64,
    pub agent_errors: u64,
    pub warnings: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Aborted { cause: AbortCause, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortCause {
    Platform,
    EventCap,
}

impl RunStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, RunStatus::Complete)
    }
}

/// Recorded draws keyed by actor and stream, in consumption order.
pub type DrawLog = BTreeMap<(ActorId, StreamKind), Vec<f64>>;

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub history: SharedHistory,
    pub trace: Vec<TraceEntry>,
    pub draws: DrawLog,
    pub counts: EventCounts,
    pub status: RunStatus,
}

/// Runs the event loop until the queue is empty or the horizon is passed.
///
/// `agents[i]` is the backend bound to `actors[i]`. Agent failures skip the
/// event but keep the actor scheduled; a platform transport failure stops
/// the run and returns the partial history with an aborted status.
pub fn run_simulation(
    actors: &[ActorConfig],
    settings: &SimulationSettings,
    agents: &mut [Box<dyn AgentBackend>],
    platform: &mut dyn Platform,
    search: &dyn SearchProvider,
    master: &RandomSource,
) -> Result<SimulationOutcome, SimError> {
    crate::model::validate_roster(actors).map_err(|e| SimError::Config(e.to_string()))?;
    if agents.len() != actors.len() {
        return Err(SimError::Config(format!(
            "{} agents bound for {} actors",
            agents.len(),
            actors.len()
        )));
    }
    if !(settings.horizon.is_finite() && settings.horizon >= 0.0) {
        return Err(SimError::Config(format!("horizon {} must be a finite non-negative number", settings.horizon)));
    }
    if settings.event_cap == 0 {
        return Err(SimError::Config("event cap must be positive".into()));
    }

    let mut streams: Vec<ActorStreams> = actors
        .iter()
        .map(|a| ActorStreams::derive(master, &a.actor_id, settings.record_draws))
        .collect();
    let mut outcome = SimulationOutcome {
        history: SharedHistory::new(),
        trace: Vec::new(),
        draws: DrawLog::new(),
        counts: EventCounts::default(),
        status: RunStatus::Complete,
    };
    if settings.horizon == 0.0 {
        return Ok(outcome);
    }

    let mut queue = initialize_queue(actors, settings.mode, &mut streams)?;
    let index: HashMap<&ActorId, usize> = actors.iter().enumerate().map(|(i, a)| (&a.actor_id, i)).collect();
    let roster = Roster::from_actors(actors);
    let mut dispatched = vec![[0usize; 2]; actors.len()];
    let mut last_time = 0.0;

    while let Some(event) = queue.pop() {
        if event.fire_time > settings.horizon {
            break;
        }
        let i = index[&event.actor];
        let actor = &actors[i];
        let slot = match event.procedure {
            Procedure::Post => 0,
            Procedure::Action => 1,
        };
        dispatched[i][slot] += 1;
        if dispatched[i][slot] > settings.event_cap {
            outcome.status = RunStatus::Aborted {
                cause: AbortCause::EventCap,
                reason: format!(
                    "actor {} exceeded the cap of {} {:?} events",
                    actor.actor_id, settings.event_cap, event.procedure
                ),
            };
            break;
        }
        if let Some(secs_per_minute) = settings.pacing {
            let gap = (event.fire_time - last_time).max(0.0) * secs_per_minute;
            std::thread::sleep(Duration::from_secs_f64(gap));
        }
        last_time = event.fire_time;

        let env = EventEnv {
            actor,
            roster: &roster,
            topic: &settings.topic,
            recent_window: settings.recent_window,
            search,
            now: event.fire_time,
        };
        let agent = agents[i].as_mut();
        let result = match event.procedure {
            Procedure::Post => {
                outcome.counts.post_events += 1;
                behavior::execute_post_event(
                    &env,
                    &mut outcome.history,
                    agent,
                    platform,
                    &mut streams[i].reply_branch,
                )
                .map(|report| {
                    let post = &report.post;
                    let counts = &mut outcome.counts;
                    counts.posts += 1;
                    match post.kind {
                        PostKind::NewComment => counts.new_comments += 1,
                        PostKind::Reply => counts.replies += 1,
                    }
                    if report.branch == PostBranch::ReplyFallback {
                        counts.reply_fallbacks += 1;
                    }
                    EventOutcome::Posted {
                        post_id: post.post_id,
                        kind: post.kind,
                        parent: post.parent,
                        stance: post.stance,
                        branch: report.branch,
                    }
                })
            }
            Procedure::Action => {
                outcome.counts.action_events += 1;
                behavior::execute_action_event(&env, &mut outcome.history, agent, platform, &mut streams[i].vote_gate)
                    .map(|report| {
                        outcome.counts.votes += report.executed.len() as u64;
                        outcome.counts.warnings += report.warnings.len() as u64;
                        for warning in &report.warnings {
                            tracing::warn!(actor = %actor.actor_id, "{warning}");
                        }
                        EventOutcome::Voted {
                            considered: report.considered,
                            executed: report.executed.iter().map(|v| (v.target, v.direction)).collect(),
                        }
                    })
            }
        };

        let entry_outcome = match result {
            Ok(o) => o,
            Err(EventError::Platform(err)) if err.is_fatal() => {
                tracing::error!(actor = %actor.actor_id, %err, "platform failure; aborting run");
                outcome.status = RunStatus::Aborted {
                    cause: AbortCause::Platform,
                    reason: format!("platform failure: {err}"),
                };
                outcome.trace.push(TraceEntry {
                    fire_time: event.fire_time,
                    actor: event.actor.clone(),
                    procedure: event.procedure,
                    sequence: event.sequence,
                    outcome: EventOutcome::Skipped { reason: err.to_string() },
                });
                break;
            }
            Err(err) => {
                tracing::warn!(actor = %actor.actor_id, procedure = ?event.procedure, %err, "event skipped");
                outcome.counts.skipped_events += 1;
                if matches!(err, EventError::Agent(_)) {
                    outcome.counts.agent_errors += 1;
                }
                EventOutcome::Skipped { reason: err.to_string() }
            }
        };
        outcome.trace.push(TraceEntry {
            fire_time: event.fire_time,
            actor: event.actor.clone(),
            procedure: event.procedure,
            sequence: event.sequence,
            outcome: entry_outcome,
        });

        let gap = sample_interarrival(
            rate_of(actor, event.procedure),
            settings.mode,
            clock_of(&mut streams[i], event.procedure),
        )?;
        queue.push(event.fire_time + gap, event.actor, event.procedure);
    }

    if settings.record_draws {
        for (actor, s) in actors.iter().zip(streams.iter_mut()) {
            for kind in [
                StreamKind::PostClock,
                StreamKind::ActionClock,
                StreamKind::ReplyBranch,
                StreamKind::VoteGate,
            ] {
                outcome
                    .draws
                    .insert((actor.actor_id.clone(), kind), s.stream_mut(kind).take_tape());
            }
        }
    }
    Ok(outcome)
}
