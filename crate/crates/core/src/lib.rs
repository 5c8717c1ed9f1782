//! Discrete-event simulation of persona-driven actors taking part in an
//! online discussion.
//!
//! Each actor owns two Poisson clocks, one for posting and one for voting.
//! A single event queue orders all clock firings; every firing asks an
//! [`agent::AgentBackend`] what to say or which posts to vote on and
//! commits the result through a [`platform::Platform`].
//!
//! ```
//! let mut config = delibsim::config::preset();
//! config.horizon_minutes = 2.0;
//! let run = delibsim::runner::run_config(&config, 42, false).unwrap();
//! assert!(run.outcome.history.violations(2.0).is_empty());
//! ```

pub mod agent;
pub mod behavior;
pub mod config;
pub mod ensemble;
pub mod jsonl;
pub mod metrics;
pub mod model;
pub mod platform;
pub mod rng;
pub mod runner;
pub mod scheduler;
pub mod timefmt;

pub use config::{load_config, SimulationConfig};
pub use model::{ActorConfig, ActorId, Archetype, Persona, Post, PostId, SharedHistory, VoteRecord};
pub use rng::RandomSource;
pub use runner::{run_config, RunMeta};
pub use scheduler::{run_simulation, InterArrivalMode, SimulationOutcome, SimulationSettings};
