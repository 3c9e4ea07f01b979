use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agents::JointHidden;
use crate::gridworld::Action;
use crate::neuralcore::Scalar;
use crate::util::seeded_rng;

/// Fixed unroll length: replay stores 8-transition segments and BPTT is
/// truncated at their boundaries.
pub const SEGMENT_LEN: usize = 8;

/// One replay unit: eight consecutive transitions from a single episode plus
/// the recurrent state that entered the segment. Observations are stored
/// already encoded (scaled bytes + role one-hot) so batch assembly is a
/// straight copy; `rows[SEGMENT_LEN]` is the post-segment observation used for
/// bootstrapping.
///
/// Segments cut short by episode termination are padded: padded steps keep a
/// repeat of the terminal observation, `Stand` actions, zero reward, and a set
/// terminal flag, and are masked out of the loss.
#[derive(Debug, Clone)]
pub struct TrajectorySegment<S> {
    /// `SEGMENT_LEN + 1` encoded observation pairs, one `input_width` row per
    /// agent slot.
    pub rows: Vec<[Vec<S>; 2]>,
    pub actions: [[Action; 2]; SEGMENT_LEN],
    pub team_rewards: [f32; SEGMENT_LEN],
    /// `terminal_flags[t]` marks that the episode was over *after* step `t`'s
    /// transition (so every padded step also carries it).
    pub terminal_flags: [bool; SEGMENT_LEN],
    /// Snapshot of the recurrent state at the segment's first step (batch 1).
    pub initial_hidden: JointHidden<S>,
}

impl<S: Scalar> TrajectorySegment<S> {
    /// Number of real transitions: up to and including the terminal step.
    pub fn valid_len(&self) -> usize {
        self.terminal_flags
            .iter()
            .position(|&t| t)
            .map_or(SEGMENT_LEN, |k| k + 1)
    }
}

/// Ring buffer of segments with uniform-with-replacement sampling from its own
/// seeded stream.
#[derive(Debug)]
pub struct ReplayBuffer<S> {
    segments: Vec<TrajectorySegment<S>>,
    capacity: usize,
    /// Next ring slot to overwrite once the buffer is full.
    cursor: usize,
    rng: ChaCha8Rng,
}

impl<S: Scalar> ReplayBuffer<S> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            segments: Vec::with_capacity(capacity),
            capacity,
            cursor: 0,
            rng: seeded_rng(seed, 0x7265706c), // "repl"
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts a segment, evicting the oldest one once at capacity.
    pub fn push(&mut self, segment: TrajectorySegment<S>) {
        if self.segments.len() < self.capacity {
            self.segments.push(segment);
        } else {
            self.segments[self.cursor] = segment;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Draws `batch` segments uniformly with replacement.
    pub fn sample(&mut self, batch: usize) -> Vec<&TrajectorySegment<S>> {
        assert!(!self.segments.is_empty(), "sampling from an empty replay buffer");
        let idx: Vec<usize> =
            (0..batch).map(|_| self.rng.gen_range(0..self.segments.len())).collect();
        idx.into_iter().map(|i| &self.segments[i]).collect()
    }

    /// Index stream only, for distribution checks.
    pub fn sample_indices(&mut self, batch: usize) -> Vec<usize> {
        assert!(!self.segments.is_empty(), "sampling from an empty replay buffer");
        (0..batch).map(|_| self.rng.gen_range(0..self.segments.len())).collect()
    }
}
