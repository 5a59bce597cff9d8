//! Seeded discrete-event scheduler with a lossy, partitionable network.
//!
//! Events are ordered by `(time, sequence)`, so a run is a pure function of
//! the seed and the inputs.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Simulated time in microseconds.
pub type SimTime = u64;

pub const MS: SimTime = 1_000;
pub const SECOND: SimTime = 1_000_000;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub base_latency: SimTime,
    /// Uniform extra delay in `[0, jitter]`.
    pub jitter: SimTime,
    /// Probability that a message is dropped.
    pub loss: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { base_latency: 2 * MS, jitter: 3 * MS, loss: 0.0 }
    }
}

/// Nodes in different groups cannot exchange messages during `[from, until)`.
/// Nodes not listed in any group are unaffected.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub from: SimTime,
    pub until: SimTime,
    pub groups: Vec<Vec<NodeId>>,
}

impl Partition {
    fn separates(&self, at: SimTime, a: NodeId, b: NodeId) -> bool {
        if at < self.from || at >= self.until {
            return false;
        }
        let group = |n| self.groups.iter().position(|g| g.contains(&n));
        matches!((group(a), group(b)), (Some(x), Some(y)) if x != y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event<M> {
    Deliver { from: NodeId, to: NodeId, msg: M },
    Timer { node: NodeId, id: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug)]
pub struct Scheduler<M> {
    now: SimTime,
    seq: u64,
    queue: BTreeMap<(SimTime, u64), Event<M>>,
    rng: ChaCha20Rng,
    net: NetConfig,
    down: BTreeSet<NodeId>,
    partitions: Vec<Partition>,
    stats: NetStats,
}

impl<M> Scheduler<M> {
    pub fn new(seed: u64, net: NetConfig) -> Self {
        Self {
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            net,
            down: BTreeSet::new(),
            partitions: Vec::new(),
            stats: NetStats::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    /// Time of the next queued event.
    pub fn next_time(&self) -> Option<SimTime> {
        self.queue.first_key_value().map(|((t, _), _)| *t)
    }

    /// Moves the clock forward to `t` without processing events.
    pub fn advance(&mut self, t: SimTime) {
        let limit = self.next_time().unwrap_or(SimTime::MAX);
        self.now = self.now.max(t.min(limit));
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn set_down(&mut self, node: NodeId, down: bool) {
        if down {
            self.down.insert(node);
        } else {
            self.down.remove(&node);
        }
    }

    pub fn is_down(&self, node: NodeId) -> bool {
        self.down.contains(&node)
    }

    pub fn add_partition(&mut self, p: Partition) {
        self.partitions.push(p);
    }

    fn push(&mut self, at: SimTime, ev: Event<M>) {
        self.seq += 1;
        self.queue.insert((at.max(self.now), self.seq), ev);
    }

    /// Sends `msg` leaving `from` at time `at` (not earlier than now), with
    /// network latency added. Messages to self skip the network.
    pub fn send_at(&mut self, at: SimTime, from: NodeId, to: NodeId, msg: M) {
        self.stats.sent += 1;
        let at = at.max(self.now);
        if from == to {
            self.push(at, Event::Deliver { from, to, msg });
            return;
        }
        let lost = self.net.loss > 0.0 && self.rng.gen_bool(self.net.loss.min(1.0));
        if lost || self.down.contains(&from) || self.partitions.iter().any(|p| p.separates(at, from, to)) {
            self.stats.dropped += 1;
            return;
        }
        let jitter = if self.net.jitter > 0 { self.rng.gen_range(0..=self.net.jitter) } else { 0 };
        self.push(at + self.net.base_latency + jitter, Event::Deliver { from, to, msg });
    }

    pub fn send(&mut self, from: NodeId, to: NodeId, msg: M) {
        self.send_at(self.now, from, to, msg);
    }

    pub fn set_timer(&mut self, node: NodeId, delay: SimTime, id: u64) {
        self.push(self.now + delay, Event::Timer { node, id });
    }

    /// Pops the next event, advancing the clock. Deliveries to nodes that are
    /// down at delivery time are dropped; their timers still fire.
    pub fn next(&mut self) -> Option<(SimTime, Event<M>)> {
        loop {
            let ((at, _), ev) = self.queue.pop_first()?;
            self.now = at;
            match &ev {
                Event::Deliver { to, .. } if self.down.contains(to) => {
                    self.stats.dropped += 1;
                }
                Event::Deliver { .. } => {
                    self.stats.delivered += 1;
                    return Some((at, ev));
                }
                Event::Timer { .. } => return Some((at, ev)),
            }
        }
    }
}
