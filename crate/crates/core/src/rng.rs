//! Seeded randomness.
//!
//! A run owns one master [`RandomSource`]. Each actor gets four independent
//! streams derived by [`RandomSource::split`]: the ChaCha8 key is expanded
//! from the master seed with SplitMix64, and the ChaCha stream number is the
//! FNV-1a hash of `actor_id`, a `0xFF` separator, and the stream tag byte.
//! The derivation depends only on the seed and the actor's id, so adding or
//! reordering actors never changes another actor's draws.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ActorId;

/// Which per-actor stream a draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    PostClock,
    ActionClock,
    ReplyBranch,
    VoteGate,
}

impl StreamKind {
    fn tag(self) -> u8 {
        match self {
            StreamKind::PostClock => 1,
            StreamKind::ActionClock => 2,
            StreamKind::ReplyBranch => 3,
            StreamKind::VoteGate => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
    tape: Option<Vec<f64>>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::from_seed(key_from_seed(seed)),
            tape: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives the stream `kind` of `actor` from this source's seed.
    pub fn split(&self, actor: &ActorId, kind: StreamKind) -> RandomSource {
        let mut rng = ChaCha8Rng::from_seed(key_from_seed(self.seed));
        let id = actor.as_str().bytes().chain([0xFF, kind.tag()]);
        rng.set_stream(fnv1a64(id));
        RandomSource {
            seed: self.seed,
            rng,
            tape: None,
        }
    }

    /// Starts recording every value handed out through [`draw_uniform`] and
    /// [`record`](Self::record).
    ///
    /// [`draw_uniform`]: Self::draw_uniform
    pub fn with_tape(mut self) -> Self {
        self.tape = Some(Vec::new());
        self
    }

    pub fn take_tape(&mut self) -> Vec<f64> {
        self.tape.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Next uniform variate in `[0, 1)`.
    pub fn draw_uniform(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        self.record(u);
        u
    }

    /// Appends a derived sample (e.g. an inter-arrival gap) to the tape.
    pub fn record(&mut self, value: f64) {
        if let Some(tape) = self.tape.as_mut() {
            tape.push(value);
        }
    }
}

/// Raw access for distribution sampling; raw words are never taped.
impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// The four streams owned by one actor during a run.
#[derive(Debug, Clone)]
pub struct ActorStreams {
    pub post_clock: RandomSource,
    pub action_clock: RandomSource,
    pub reply_branch: RandomSource,
    pub vote_gate: RandomSource,
}

impl ActorStreams {
    pub fn derive(master: &RandomSource, actor: &ActorId, taped: bool) -> Self {
        let make = |kind| {
            let s = master.split(actor, kind);
            if taped {
                s.with_tape()
            } else {
                s
            }
        };
        ActorStreams {
            post_clock: make(StreamKind::PostClock),
            action_clock: make(StreamKind::ActionClock),
            reply_branch: make(StreamKind::ReplyBranch),
            vote_gate: make(StreamKind::VoteGate),
        }
    }

    pub fn stream_mut(&mut self, kind: StreamKind) -> &mut RandomSource {
        match kind {
            StreamKind::PostClock => &mut self.post_clock,
            StreamKind::ActionClock => &mut self.action_clock,
            StreamKind::ReplyBranch => &mut self.reply_branch,
            StreamKind::VoteGate => &mut self.vote_gate,
        }
    }
}
