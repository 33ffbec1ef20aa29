//! Deterministic, splittable random streams and Poisson clock bundles.
//!
//! Every source of randomness in the crate is an independent stream addressed
//! by a [`SeedSpec`]: a master seed plus a short path of non-negative
//! integers.  The 256-bit ChaCha12 key for a stream is the SHA-256 digest of
//! a domain tag, the master seed, and the path, so distinct paths give
//! independent streams and any (master seed, path) pair reproduces exactly —
//! across runs, platforms and thread counts.
//!
//! A [`ClockBundle`] is the graphical representation of a continuous-time
//! Markov chain: a family of independent Poisson processes ("clocks"), each
//! with its own stream and rate, merged into a single strictly ordered event
//! sequence.  Simulation engines pop events in time order and apply a
//! transition only when the current state matches the clock's role; skipped
//! events cost nothing but a pop.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::math;
use crate::{Error, Result};

/// Maximum number of path elements in a [`SeedSpec`].
pub const MAX_STREAM_DEPTH: usize = 4;

const DOMAIN_TAG: &[u8] = b"starsim/stream/v1";

/// Address of one random stream: a master seed plus a path of up to
/// [`MAX_STREAM_DEPTH`] non-negative integers.
///
/// Streams with different addresses are computationally independent; the
/// same address always derives the same stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    master_seed: u64,
    depth: u8,
    path: [u64; MAX_STREAM_DEPTH],
}

impl SeedSpec {
    /// Root spec: the master seed with an empty path.
    pub fn new(master_seed: u64) -> Self {
        SeedSpec {
            master_seed,
            depth: 0,
            path: [0; MAX_STREAM_DEPTH],
        }
    }

    /// Spec with an explicit path (at most [`MAX_STREAM_DEPTH`] elements).
    pub fn with_path(master_seed: u64, path: &[u64]) -> Result<Self> {
        let mut spec = SeedSpec::new(master_seed);
        for &e in path {
            spec = spec.child(e)?;
        }
        Ok(spec)
    }

    /// Append one path element.
    pub fn child(&self, element: u64) -> Result<Self> {
        if usize::from(self.depth) >= MAX_STREAM_DEPTH {
            return Err(Error::InvalidParameter(
                "stream path exceeds maximum depth",
            ));
        }
        let mut next = *self;
        next.path[usize::from(next.depth)] = element;
        next.depth += 1;
        Ok(next)
    }

    /// The master seed.
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The path elements.
    pub fn path(&self) -> &[u64] {
        &self.path[..usize::from(self.depth)]
    }

    /// 256-bit stream key: SHA-256 over the domain tag, master seed and path.
    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN_TAG);
        h.update(self.master_seed.to_le_bytes());
        h.update([self.depth]);
        for e in self.path() {
            h.update(e.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Derive the stream this spec addresses.
    pub fn derive_stream(&self) -> RandomStream {
        RandomStream::from_key(self.key())
    }
}

/// One deterministic random stream (ChaCha12 keyed by a [`SeedSpec`]).
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha12Rng,
}

impl RandomStream {
    /// Stream from a raw 256-bit key.
    pub fn from_key(key: [u8; 32]) -> Self {
        RandomStream {
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Next raw 64-bit output.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on the open interval `(0, 1)`; never returns an endpoint,
    /// so `-ln(u)` is always finite and strictly positive.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential draw with the given rate, by inversion: `-ln(U)/rate`.
    ///
    /// Inversion makes the draw a deterministic, rate-scaling function of the
    /// stream position: the same stream sampled at rate `2r` yields exactly
    /// half the value it would at rate `r`.  Errors when `rate` is not a
    /// strictly positive finite number.
    #[inline]
    pub fn sample_exponential(&mut self, rate: f64) -> Result<f64> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(
                "exponential rate must be positive and finite",
            ));
        }
        Ok(self.exp_unchecked(rate))
    }

    /// Exponential draw for rates already validated by the caller.
    #[inline]
    pub(crate) fn exp_unchecked(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0 && rate.is_finite());
        -math::ln(self.uniform_open()) / rate
    }
}

/// Role of a clock in the graphical representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClockClass {
    /// Recovery clock of a vertex (rate 1 in the model).
    Recovery,
    /// De-immunization clock of a vertex (rate `alpha`).
    Deimmunization,
    /// Infection clock of a directed edge (rate `lambda`).
    Infection,
}

impl ClockClass {
    /// Stable integer tag used in stream paths.
    pub fn tag(self) -> u64 {
        match self {
            ClockClass::Recovery => 0,
            ClockClass::Deimmunization => 1,
            ClockClass::Infection => 2,
        }
    }
}

/// Identity of a clock: its class plus an index (vertex id for recovery and
/// de-immunization clocks, directed-edge id for infection clocks).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClockId {
    pub class: ClockClass,
    pub index: u32,
}

impl ClockId {
    pub fn new(class: ClockClass, index: u32) -> Self {
        ClockId { class, index }
    }
}

/// Pre-derived stream keys for a bundle layout, reusable across several
/// bundles built over the same layout (key derivation hashes; re-keying a
/// ChaCha stream is cheap by comparison).
#[derive(Clone, Debug)]
pub struct BundleSeeds {
    keys: Vec<[u8; 32]>,
}

impl BundleSeeds {
    /// Derive one key per clock id, in layout order, as children of `parent`
    /// at path `(class tag, index)`.
    pub fn derive(parent: &SeedSpec, ids: &[ClockId]) -> Result<Self> {
        let mut keys = Vec::with_capacity(ids.len());
        for id in ids {
            keys.push(parent.child(id.class.tag())?.child(u64::from(id.index))?.key());
        }
        Ok(BundleSeeds { keys })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Clock {
    stream: RandomStream,
    rate: f64,
    /// Time of this clock's pending event; `f64::INFINITY` when unscheduled.
    next_time: f64,
}

/// Heap key: event time, ties broken by clock slot (the fixed total order in
/// which clocks were declared), so merged event order is fully deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
struct EventKey {
    time: f64,
    slot: u32,
}

impl Eq for EventKey {}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we want the earliest event.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

/// Smallest positive step above `x` (for non-negative finite `x`): keeps
/// per-clock event times strictly increasing even when a tiny gap underflows
/// against a large accumulated time.
#[inline]
fn next_up(x: f64) -> f64 {
    debug_assert!(x >= 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() + 1)
}

/// A family of independent Poisson clocks merged into one strictly ordered
/// event sequence.
///
/// Each clock owns an independent stream; its event times are the cumulative
/// sums of exponential gaps at the clock's rate, starting from time 0.
/// Clocks with rate 0 are legal and never fire.
#[derive(Clone, Debug)]
pub struct ClockBundle {
    ids: Vec<ClockId>,
    clocks: Vec<Clock>,
    heap: BinaryHeap<EventKey>,
}

impl ClockBundle {
    /// Build a bundle from `(id, rate)` pairs, deriving each clock's stream
    /// as a child of `parent` at path `(class tag, index)`.
    pub fn new(parent: &SeedSpec, layout: &[(ClockId, f64)]) -> Result<Self> {
        let ids: Vec<ClockId> = layout.iter().map(|&(id, _)| id).collect();
        let seeds = BundleSeeds::derive(parent, &ids)?;
        Self::from_seeds(&seeds, layout)
    }

    /// Build a bundle from pre-derived stream keys (see [`BundleSeeds`]);
    /// `seeds` must have been derived for exactly this layout order.
    pub fn from_seeds(seeds: &BundleSeeds, layout: &[(ClockId, f64)]) -> Result<Self> {
        if seeds.keys.len() != layout.len() {
            return Err(Error::InvalidInput(
                "bundle seed count does not match layout",
            ));
        }
        let mut clocks = Vec::with_capacity(layout.len());
        let mut ids = Vec::with_capacity(layout.len());
        let mut heap = BinaryHeap::with_capacity(layout.len());
        for (slot, (&(id, rate), key)) in layout.iter().zip(&seeds.keys).enumerate() {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidParameter(
                    "clock rate must be non-negative and finite",
                ));
            }
            let mut stream = RandomStream::from_key(*key);
            let next_time = if rate > 0.0 {
                stream.exp_unchecked(rate)
            } else {
                f64::INFINITY
            };
            if next_time.is_finite() {
                heap.push(EventKey {
                    time: next_time,
                    slot: slot as u32,
                });
            }
            ids.push(id);
            clocks.push(Clock {
                stream,
                rate,
                next_time,
            });
        }
        Ok(ClockBundle { ids, clocks, heap })
    }

    /// Number of clocks (including never-firing rate-0 clocks).
    pub fn len(&self) -> usize {
        self.clocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clocks.is_empty()
    }

    /// Identity of the clock in a given slot.
    pub fn id_of(&self, slot: u32) -> ClockId {
        self.ids[slot as usize]
    }

    /// Pending event time of the clock with the given identity, if it is
    /// scheduled.  Linear scan; intended for occasional queries, not the hot
    /// loop.
    pub fn next_time_of(&self, id: ClockId) -> Option<f64> {
        let slot = self.ids.iter().position(|&c| c == id)?;
        let t = self.clocks[slot].next_time;
        t.is_finite().then_some(t)
    }

    /// Pop the earliest pending event; the owning clock is advanced by a
    /// fresh exponential gap.  Returns `None` when no clock is scheduled.
    pub fn next_event(&mut self) -> Option<(f64, ClockId)> {
        let key = self.heap.pop()?;
        let slot = key.slot as usize;
        let clock = &mut self.clocks[slot];
        debug_assert_eq!(clock.next_time, key.time);
        let gap = clock.stream.exp_unchecked(clock.rate);
        let mut next = key.time + gap;
        if next <= key.time {
            next = next_up(key.time);
        }
        clock.next_time = next;
        self.heap.push(EventKey {
            time: next,
            slot: key.slot,
        });
        Some((key.time, self.ids[slot]))
    }

    /// Pop the earliest event strictly after `after`; events at or before
    /// `after` are consumed and discarded.
    pub fn next_event_after(&mut self, after: f64) -> Option<(f64, ClockId)> {
        loop {
            let (t, id) = self.next_event()?;
            if t > after {
                return Some((t, id));
            }
        }
    }
}
