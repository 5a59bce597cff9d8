use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::block::{commit_message, sign_commit, Block, QuorumCertificate};
use super::chain::Chain;
use super::genesis::{Genesis, LedgerRules};
use super::state::WorldState;
use super::tx::SignedTx;
use super::{Digest, LedgerError, G};
use crate::codec::Writer;
use crate::crypto::{schnorr_sign, schnorr_verify, CosignerKey, DeviceKeyPair, Signature};
use crate::sim::{Event, NetConfig, NodeId, Partition, Scheduler, SimTime, MS, SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Honest,
    /// Never sends or receives anything.
    Crashed,
    /// Sends a different block to every replica when leading.
    Equivocating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsortiumConfig {
    pub seed: u64,
    pub net: NetConfig,
    /// One per peer; missing entries are honest.
    pub behaviors: Vec<Behavior>,
    /// View timeout in view 0; doubles with every view.
    pub view_timeout: SimTime,
    /// How long a leader waits for more transactions before proposing.
    pub batch_delay: SimTime,
    /// First client retry delay; doubles with every attempt.
    pub ack_timeout: SimTime,
    pub max_attempts: u32,
}

impl Default for ConsortiumConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            net: NetConfig::default(),
            behaviors: Vec::new(),
            view_timeout: 300 * MS,
            batch_delay: 5 * MS,
            ack_timeout: 100 * MS,
            max_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubmissionResult {
    Pending,
    Committed { height: u64, latency_us: SimTime },
    Rejected { reason: String },
    TimedOut { attempts: u32 },
}

/// Client-side view of one submitted transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub digest: Digest,
    pub submitted_at: SimTime,
    pub attempts: u32,
    pub acks: BTreeSet<usize>,
    pub result: SubmissionResult,
    commits: BTreeMap<u64, BTreeSet<usize>>,
    drops: BTreeMap<usize, String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PeerStats {
    pub blocks: u64,
    pub proposals: u64,
    pub view_changes: u64,
    pub invalid_proposals: u64,
    pub fetched: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClientStats {
    pub submitted: u64,
    pub committed: u64,
    pub rejected: u64,
    pub timed_out: u64,
    pub pending: u64,
    pub retries: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct PreparedCert {
    view: u64,
    block: Block,
    votes: Vec<(usize, Signature<G>)>,
}

#[derive(Debug, Clone, PartialEq)]
struct ViewChange {
    height: u64,
    view: u64,
    peer: usize,
    prepared: Option<PreparedCert>,
    sig: Signature<G>,
}

#[derive(Debug, Clone, PartialEq)]
enum Msg {
    Submit { sid: u64, tx: Box<SignedTx> },
    Ack { sid: u64 },
    Dropped { digest: Digest, reason: String },
    Committed { height: u64, digests: Vec<Digest> },
    PrePrepare { height: u64, view: u64, block: Box<Block> },
    Prepare { height: u64, view: u64, digest: Digest, sig: Signature<G> },
    Commit { height: u64, digest: Digest, sig: Signature<G> },
    ViewChange(Box<ViewChange>),
    NewView { height: u64, view: u64, proofs: Vec<ViewChange> },
    Fetch { height: u64 },
    BlockData(Box<Block>),
}

impl Msg {
    fn height(&self) -> Option<u64> {
        match self {
            Msg::PrePrepare { height, .. }
            | Msg::Prepare { height, .. }
            | Msg::Commit { height, .. }
            | Msg::NewView { height, .. } => Some(*height),
            Msg::ViewChange(vc) => Some(vc.height),
            _ => None,
        }
    }
}

fn prepare_message(height: u64, view: u64, digest: &Digest) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("fdd/prepare").u64(height).u64(view).raw(digest);
    w.finish()
}

fn view_change_message(height: u64, view: u64, prepared: Option<(u64, Digest)>) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("fdd/view-change").u64(height).u64(view);
    match prepared {
        Some((v, d)) => w.u8(1).u64(v).raw(&d),
        None => w.u8(0),
    };
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PeerTimer {
    Propose { height: u64, view: u64 },
    View { height: u64, view: u64 },
}

#[derive(Debug, Default)]
struct Round {
    height: u64,
    view: u64,
    in_view_change: bool,
    proposal: Option<(u64, Block)>,
    proposed: bool,
    required: Option<Digest>,
    blocks: BTreeMap<Digest, Block>,
    prepares: BTreeMap<(u64, Digest), BTreeMap<usize, Signature<G>>>,
    commits: BTreeMap<Digest, BTreeMap<usize, Signature<G>>>,
    sent_commit: BTreeSet<Digest>,
    prepared: Option<PreparedCert>,
    view_changes: BTreeMap<u64, BTreeMap<usize, ViewChange>>,
    new_view_sent: BTreeSet<u64>,
    /// Messages for a later view of this height.
    early: Vec<(NodeId, Msg)>,
}

struct Ctx<'a> {
    sched: &'a mut Scheduler<Msg>,
    rules: &'a LedgerRules,
    config: &'a ConsortiumConfig,
    client: NodeId,
}

impl Ctx<'_> {
    fn now_ms(&self) -> i64 {
        self.rules.genesis_time_ms + (self.sched.now() / MS) as i64
    }
}

struct Peer {
    index: usize,
    behavior: Behavior,
    key: CosignerKey<G>,
    chain: Chain,
    mempool: Vec<SignedTx>,
    pool_state: WorldState,
    committed: BTreeMap<Digest, u64>,
    round: Round,
    future: BTreeMap<u64, Vec<(NodeId, Msg)>>,
    timers: BTreeMap<u64, PeerTimer>,
    next_timer: u64,
    armed_view: Option<(u64, u64)>,
    armed_propose: Option<(u64, u64)>,
    stats: PeerStats,
}

impl Peer {
    fn new(index: usize, behavior: Behavior, key: CosignerKey<G>, rules: &LedgerRules) -> Self {
        let chain = Chain::new(rules.clone());
        let pool_state = chain.state().clone();
        Self {
            index,
            behavior,
            key,
            round: Round { height: 1, ..Default::default() },
            chain,
            mempool: Vec::new(),
            pool_state,
            committed: BTreeMap::new(),
            future: BTreeMap::new(),
            timers: BTreeMap::new(),
            next_timer: 0,
            armed_view: None,
            armed_propose: None,
            stats: PeerStats::default(),
        }
    }

    fn n(&self) -> usize {
        self.chain.rules().peers
    }

    fn quorum(&self) -> usize {
        self.chain.rules().vote_quorum()
    }

    fn leader(&self, height: u64, view: u64) -> usize {
        ((height + view) % self.n() as u64) as usize
    }

    fn broadcast(&self, ctx: &mut Ctx<'_>, msg: Msg) {
        for j in 0..self.n() {
            if j != self.index {
                ctx.sched.send(self.index, j, msg.clone());
            }
        }
    }

    fn timer(&mut self, ctx: &mut Ctx<'_>, delay: SimTime, t: PeerTimer) {
        self.next_timer += 1;
        self.timers.insert(self.next_timer, t);
        ctx.sched.set_timer(self.index, delay, self.next_timer);
    }

    fn arm_view_timer(&mut self, ctx: &mut Ctx<'_>) {
        let key = (self.round.height, self.round.view);
        if self.armed_view == Some(key) {
            return;
        }
        self.armed_view = Some(key);
        let delay = ctx.config.view_timeout << self.round.view.min(16);
        self.timer(ctx, delay, PeerTimer::View { height: key.0, view: key.1 });
    }

    fn start_work(&mut self, ctx: &mut Ctx<'_>) {
        let busy = !self.mempool.is_empty() || self.round.proposal.is_some() || self.round.in_view_change;
        if !busy {
            return;
        }
        self.arm_view_timer(ctx);
        let (h, v) = (self.round.height, self.round.view);
        if self.leader(h, v) == self.index
            && !self.round.in_view_change
            && !self.round.proposed
            && self.round.required.is_none()
            && !self.mempool.is_empty()
            && self.armed_propose != Some((h, v))
        {
            self.armed_propose = Some((h, v));
            self.timer(ctx, ctx.config.batch_delay, PeerTimer::Propose { height: h, view: v });
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, id: u64) {
        let Some(t) = self.timers.remove(&id) else { return };
        let current = (self.round.height, self.round.view);
        match t {
            PeerTimer::Propose { height, view } if (height, view) == current => self.propose(ctx),
            PeerTimer::View { height, view } if (height, view) == current => {
                self.armed_view = None;
                self.broadcast(ctx, Msg::Fetch { height });
                self.start_view_change(ctx, view + 1);
            }
            _ => {}
        }
    }

    fn propose(&mut self, ctx: &mut Ctx<'_>) {
        if self.round.in_view_change || self.round.proposed || self.round.required.is_some() {
            return;
        }
        let now = ctx.now_ms();
        let (chosen, _) = self.chain.select(&self.mempool, now);
        if chosen.is_empty() {
            return;
        }
        self.round.proposed = true;
        self.stats.proposals += 1;
        let (h, v) = (self.round.height, self.round.view);
        let block = Block::propose(h, self.chain.tip(), now.max(self.chain.last_timestamp()), self.index as u32, chosen);
        if self.behavior == Behavior::Equivocating {
            for j in 0..self.n() {
                if j == self.index {
                    continue;
                }
                let mut variant = block.clone();
                variant.header.timestamp += j as i64;
                let d = variant.hash();
                let sig = schnorr_sign(&self.chain.rules().params, self.key.secret(), &prepare_message(h, v, &d));
                ctx.sched.send(self.index, j, Msg::PrePrepare { height: h, view: v, block: Box::new(variant) });
                ctx.sched.send(self.index, j, Msg::Prepare { height: h, view: v, digest: d, sig });
            }
            return;
        }
        self.broadcast(ctx, Msg::PrePrepare { height: h, view: v, block: Box::new(block.clone()) });
        self.accept_proposal(ctx, block);
    }

    fn accept_proposal(&mut self, ctx: &mut Ctx<'_>, block: Block) {
        let (h, v) = (self.round.height, self.round.view);
        let d = block.hash();
        self.round.blocks.insert(d, block.clone());
        self.round.proposal = Some((v, block));
        let sig = schnorr_sign(&self.chain.rules().params, self.key.secret(), &prepare_message(h, v, &d));
        self.broadcast(ctx, Msg::Prepare { height: h, view: v, digest: d, sig: sig.clone() });
        self.round.prepares.entry((v, d)).or_default().insert(self.index, sig);
        self.arm_view_timer(ctx);
        self.check_prepared(ctx);
        self.check_committed(ctx, d);
    }

    fn check_prepared(&mut self, ctx: &mut Ctx<'_>) {
        let Some((v, block)) = &self.round.proposal else { return };
        if *v != self.round.view || self.round.in_view_change {
            return;
        }
        let d = block.hash();
        let Some(votes) = self.round.prepares.get(&(*v, d)) else { return };
        if votes.len() < self.quorum() || self.round.sent_commit.contains(&d) {
            return;
        }
        let cert = PreparedCert {
            view: *v,
            block: block.clone(),
            votes: votes.iter().take(self.quorum()).map(|(i, s)| (*i, s.clone())).collect(),
        };
        self.round.prepared = Some(cert);
        self.round.sent_commit.insert(d);
        let h = self.round.height;
        let sig = sign_commit(&self.key, h, &d);
        self.broadcast(ctx, Msg::Commit { height: h, digest: d, sig: sig.clone() });
        self.round.commits.entry(d).or_default().insert(self.index, sig);
        self.check_committed(ctx, d);
    }

    fn check_committed(&mut self, ctx: &mut Ctx<'_>, d: Digest) {
        let Some(votes) = self.round.commits.get(&d) else { return };
        if votes.len() < self.quorum() {
            return;
        }
        let Some(block) = self.round.blocks.get(&d) else { return };
        let mut block = block.clone();
        block.qc = QuorumCertificate::from_votes(self.n(), votes.iter().map(|(i, s)| (*i, s.clone())));
        self.commit_block(ctx, block);
    }

    fn commit_block(&mut self, ctx: &mut Ctx<'_>, block: Block) {
        let height = block.header.height;
        let digests: Vec<Digest> = block.txs.iter().map(SignedTx::digest).collect();
        if self.chain.append(block).is_err() {
            self.stats.invalid_proposals += 1;
            return;
        }
        self.stats.blocks += 1;
        for d in &digests {
            self.committed.insert(*d, height);
        }
        if !digests.is_empty() {
            ctx.sched.send(self.index, ctx.client, Msg::Committed { height, digests: digests.clone() });
        }
        self.mempool.retain(|t| !digests.contains(&t.digest()));
        self.round = Round { height: height + 1, ..Default::default() };
        self.armed_view = None;
        self.armed_propose = None;
        self.timers.clear();
        self.refresh_pool(ctx);
        let buffered = self.future.remove(&(height + 1)).unwrap_or_default();
        self.future = self.future.split_off(&(height + 1));
        for (from, msg) in buffered {
            self.handle(ctx, from, msg);
        }
        self.start_work(ctx);
    }

    /// Re-checks the mempool against the new state and drops what can no
    /// longer commit.
    fn refresh_pool(&mut self, ctx: &mut Ctx<'_>) {
        let now = ctx.now_ms();
        let next = self.chain.height() + 1;
        let mut state = self.chain.state().clone();
        let mut kept = Vec::with_capacity(self.mempool.len());
        for stx in std::mem::take(&mut self.mempool) {
            let out = state.apply(self.chain.rules(), &stx, now, next);
            match out.rejection {
                None => kept.push(stx),
                Some(reason) => ctx.sched.send(self.index, ctx.client, Msg::Dropped { digest: out.digest, reason }),
            }
        }
        self.mempool = kept;
        self.pool_state = state;
    }

    fn handle(&mut self, ctx: &mut Ctx<'_>, from: NodeId, msg: Msg) {
        if let Some(h) = msg.height() {
            let mine = self.round.height;
            if h < mine {
                if matches!(msg, Msg::ViewChange(_) | Msg::PrePrepare { .. }) {
                    if let Some(b) = self.chain.block(h) {
                        ctx.sched.send(self.index, from, Msg::BlockData(Box::new(b.clone())));
                    }
                }
                return;
            }
            if h > mine {
                let first = !self.future.contains_key(&h);
                self.future.entry(h).or_default().push((from, msg));
                if first {
                    ctx.sched.send(self.index, from, Msg::Fetch { height: mine });
                }
                return;
            }
        }
        match msg {
            Msg::Submit { sid, tx } => self.on_submit(ctx, from, sid, *tx),
            Msg::PrePrepare { view, block, .. } => self.on_pre_prepare(ctx, from, view, *block),
            Msg::Prepare { view, digest, sig, .. } => self.on_prepare(ctx, from, view, digest, sig),
            Msg::Commit { height, digest, sig } => {
                let ok = self
                    .chain
                    .rules()
                    .peer_public(from)
                    .is_some_and(|p| schnorr_verify(&self.chain.rules().params, p, &commit_message(height, &digest), &sig));
                if ok {
                    self.round.commits.entry(digest).or_default().insert(from, sig);
                    self.check_committed(ctx, digest);
                }
            }
            Msg::ViewChange(vc) => self.on_view_change(ctx, from, *vc),
            Msg::NewView { view, proofs, .. } => self.on_new_view(ctx, from, view, proofs),
            Msg::Fetch { height } => {
                if let Some(b) = self.chain.block(height).filter(|_| height > 0) {
                    ctx.sched.send(self.index, from, Msg::BlockData(Box::new(b.clone())));
                }
            }
            Msg::BlockData(block) => {
                if block.header.height == self.chain.height() + 1
                    && self.chain.validate(&block, true).is_ok()
                {
                    self.stats.fetched += 1;
                    self.commit_block(ctx, *block);
                }
            }
            Msg::Ack { .. } | Msg::Dropped { .. } | Msg::Committed { .. } => {}
        }
    }

    fn on_submit(&mut self, ctx: &mut Ctx<'_>, from: NodeId, sid: u64, tx: SignedTx) {
        ctx.sched.send(self.index, from, Msg::Ack { sid });
        let d = tx.digest();
        if let Some(&height) = self.committed.get(&d) {
            ctx.sched.send(self.index, from, Msg::Committed { height, digests: vec![d] });
            return;
        }
        if self.mempool.iter().any(|t| t.digest() == d) {
            return;
        }
        let out = self.pool_state.apply(self.chain.rules(), &tx, ctx.now_ms(), self.chain.height() + 1);
        match out.rejection {
            Some(reason) => ctx.sched.send(self.index, from, Msg::Dropped { digest: d, reason }),
            None => {
                self.mempool.push(tx);
                self.start_work(ctx);
            }
        }
    }

    fn on_pre_prepare(&mut self, ctx: &mut Ctx<'_>, from: NodeId, view: u64, block: Block) {
        if view > self.round.view || (view == self.round.view && self.round.in_view_change) {
            self.round.early.push((from, Msg::PrePrepare { height: self.round.height, view, block: Box::new(block) }));
            return;
        }
        if view < self.round.view || from != self.leader(self.round.height, view) || self.round.proposal.is_some() {
            return;
        }
        let d = block.hash();
        let fresh = (block.header.timestamp - ctx.now_ms()).abs() <= self.chain.rules().clock_skew_ms;
        if self.round.required.is_some_and(|r| r != d) || !fresh || self.chain.validate(&block, false).is_err() {
            self.stats.invalid_proposals += 1;
            return;
        }
        self.accept_proposal(ctx, block);
    }

    fn on_prepare(&mut self, ctx: &mut Ctx<'_>, from: NodeId, view: u64, digest: Digest, sig: Signature<G>) {
        let h = self.round.height;
        let rules = self.chain.rules();
        let ok = rules
            .peer_public(from)
            .is_some_and(|p| schnorr_verify(&rules.params, p, &prepare_message(h, view, &digest), &sig));
        if ok {
            self.round.prepares.entry((view, digest)).or_default().insert(from, sig);
            self.check_prepared(ctx);
        }
    }

    fn start_view_change(&mut self, ctx: &mut Ctx<'_>, view: u64) {
        if view <= self.round.view && self.round.in_view_change {
            return;
        }
        self.stats.view_changes += 1;
        let h = self.round.height;
        self.round.view = view;
        self.round.in_view_change = true;
        self.round.proposal = None;
        self.round.proposed = false;
        let prepared = self.round.prepared.clone();
        let msg = view_change_message(h, view, prepared.as_ref().map(|c| (c.view, c.block.hash())));
        let sig = schnorr_sign(&self.chain.rules().params, self.key.secret(), &msg);
        let vc = ViewChange { height: h, view, peer: self.index, prepared, sig };
        self.broadcast(ctx, Msg::ViewChange(Box::new(vc.clone())));
        self.record_view_change(ctx, vc);
        self.arm_view_timer(ctx);
    }

    fn valid_view_change(&self, vc: &ViewChange) -> bool {
        let rules = self.chain.rules();
        let Some(public) = rules.peer_public(vc.peer) else { return false };
        let prepared = vc.prepared.as_ref().map(|c| (c.view, c.block.hash()));
        if vc.height != self.round.height
            || !schnorr_verify(&rules.params, public, &view_change_message(vc.height, vc.view, prepared), &vc.sig)
        {
            return false;
        }
        let Some(cert) = &vc.prepared else { return true };
        let d = cert.block.hash();
        let signers: BTreeSet<usize> = cert.votes.iter().map(|(i, _)| *i).collect();
        cert.view < vc.view
            && cert.block.header.height == vc.height
            && signers.len() == cert.votes.len()
            && signers.len() >= rules.vote_quorum()
            && cert.votes.iter().all(|(i, s)| {
                rules
                    .peer_public(*i)
                    .is_some_and(|p| schnorr_verify(&rules.params, p, &prepare_message(vc.height, cert.view, &d), s))
            })
    }

    fn on_view_change(&mut self, ctx: &mut Ctx<'_>, from: NodeId, vc: ViewChange) {
        if vc.peer != from || !self.valid_view_change(&vc) {
            return;
        }
        self.record_view_change(ctx, vc);
    }

    fn record_view_change(&mut self, ctx: &mut Ctx<'_>, vc: ViewChange) {
        let view = vc.view;
        self.round.view_changes.entry(view).or_default().insert(vc.peer, vc);

        // join once f + 1 peers have moved past our view
        let ahead: BTreeSet<usize> = self
            .round
            .view_changes
            .range(self.round.view + 1..)
            .flat_map(|(_, m)| m.keys().copied())
            .collect();
        if ahead.len() > self.chain.rules().f {
            let target = *self.round.view_changes.range(self.round.view + 1..).next().expect("non-empty").0;
            self.start_view_change(ctx, target);
        }

        let h = self.round.height;
        let v = self.round.view;
        let count = self.round.view_changes.get(&v).map_or(0, BTreeMap::len);
        if self.round.in_view_change
            && self.leader(h, v) == self.index
            && count >= self.quorum()
            && self.round.new_view_sent.insert(v)
        {
            let proofs: Vec<ViewChange> =
                self.round.view_changes[&v].values().take(self.quorum()).cloned().collect();
            self.broadcast(ctx, Msg::NewView { height: h, view: v, proofs: proofs.clone() });
            self.install_new_view(ctx, v, proofs);
        }
    }

    fn on_new_view(&mut self, ctx: &mut Ctx<'_>, from: NodeId, view: u64, proofs: Vec<ViewChange>) {
        let h = self.round.height;
        if from != self.leader(h, view) || view < self.round.view || (view == self.round.view && !self.round.in_view_change)
        {
            return;
        }
        let signers: BTreeSet<usize> = proofs.iter().map(|vc| vc.peer).collect();
        if signers.len() != proofs.len()
            || signers.len() < self.quorum()
            || !proofs.iter().all(|vc| vc.view == view && self.valid_view_change(vc))
        {
            return;
        }
        self.install_new_view(ctx, view, proofs);
    }

    fn install_new_view(&mut self, ctx: &mut Ctx<'_>, view: u64, proofs: Vec<ViewChange>) {
        let r = &mut self.round;
        r.view = view;
        r.in_view_change = false;
        r.proposal = None;
        r.proposed = false;
        let carried = proofs.into_iter().filter_map(|vc| vc.prepared).max_by_key(|c| c.view);
        r.required = carried.as_ref().map(|c| c.block.hash());
        self.arm_view_timer(ctx);
        if let Some(cert) = carried {
            self.accept_proposal(ctx, cert.block);
        }
        let early = std::mem::take(&mut self.round.early);
        for (from, msg) in early {
            self.handle(ctx, from, msg);
        }
        self.start_work(ctx);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClientTimer {
    Retry { sid: u64 },
}

/// Peers, one client and the network connecting them.
pub struct Consortium {
    genesis: Genesis,
    config: ConsortiumConfig,
    sched: Scheduler<Msg>,
    peers: Vec<Peer>,
    client: NodeId,
    submissions: BTreeMap<u64, Submission>,
    by_digest: BTreeMap<Digest, Vec<u64>>,
    pending_txs: BTreeMap<u64, SignedTx>,
    client_timers: BTreeMap<u64, ClientTimer>,
    next_id: u64,
    retries: u64,
}

impl Consortium {
    pub fn new(genesis: Genesis, config: ConsortiumConfig) -> Self {
        let n = genesis.rules.peers;
        let mut sched = Scheduler::new(config.seed, config.net);
        let peers: Vec<Peer> = (0..n)
            .map(|i| {
                let behavior = config.behaviors.get(i).copied().unwrap_or(Behavior::Honest);
                if behavior == Behavior::Crashed {
                    sched.set_down(i, true);
                }
                Peer::new(i, behavior, genesis.keys()[i].clone(), &genesis.rules)
            })
            .collect();
        Self {
            genesis,
            config,
            sched,
            peers,
            client: n,
            submissions: BTreeMap::new(),
            by_digest: BTreeMap::new(),
            pending_txs: BTreeMap::new(),
            client_timers: BTreeMap::new(),
            next_id: 0,
            retries: 0,
        }
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn rules(&self) -> &LedgerRules {
        &self.genesis.rules
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Simulated wall clock in milliseconds, as used in transaction timestamps.
    pub fn now_ms(&self) -> i64 {
        self.rules().genesis_time_ms + (self.sched.now() / MS) as i64
    }

    pub fn peers(&self) -> usize {
        self.peers.len()
    }

    pub fn behavior(&self, peer: usize) -> Behavior {
        self.peers[peer].behavior
    }

    pub fn chain(&self, peer: usize) -> &Chain {
        &self.peers[peer].chain
    }

    pub fn peer_stats(&self, peer: usize) -> PeerStats {
        self.peers[peer].stats
    }

    pub fn set_down(&mut self, peer: usize, down: bool) {
        self.sched.set_down(peer, down);
    }

    /// Partitions peers and the client (index `peers()`).
    pub fn add_partition(&mut self, p: Partition) {
        self.sched.add_partition(p);
    }

    /// Registers `id` through KGD issuance and submits the registration.
    pub fn enroll(&mut self, id: &str) -> Result<(DeviceKeyPair<G>, u64), LedgerError> {
        let now = self.now_ms();
        let (keys, stx) = self.genesis.enroll(id, now, self.sched.rng())?;
        Ok((keys, self.submit(stx)))
    }

    /// Broadcasts `tx` to every peer and returns its submission id.
    pub fn submit(&mut self, tx: SignedTx) -> u64 {
        self.next_id += 1;
        let sid = self.next_id;
        let digest = tx.digest();
        self.submissions.insert(
            sid,
            Submission {
                digest,
                submitted_at: self.sched.now(),
                attempts: 0,
                acks: BTreeSet::new(),
                result: SubmissionResult::Pending,
                commits: BTreeMap::new(),
                drops: BTreeMap::new(),
            },
        );
        self.by_digest.entry(digest).or_default().push(sid);
        self.pending_txs.insert(sid, tx);
        self.send_attempt(sid);
        sid
    }

    fn send_attempt(&mut self, sid: u64) {
        let sub = self.submissions.get_mut(&sid).expect("known submission");
        sub.attempts += 1;
        let attempt = sub.attempts;
        let acked = sub.acks.clone();
        let tx = &self.pending_txs[&sid];
        for p in 0..self.peers.len() {
            if !acked.contains(&p) {
                self.sched.send(self.client, p, Msg::Submit { sid, tx: Box::new(tx.clone()) });
            }
        }
        self.next_id += 1;
        self.client_timers.insert(self.next_id, ClientTimer::Retry { sid });
        self.sched.set_timer(self.client, self.config.ack_timeout << (attempt - 1).min(16), self.next_id);
    }

    pub fn submission(&self, sid: u64) -> Option<&Submission> {
        self.submissions.get(&sid)
    }

    pub fn result(&self, sid: u64) -> &SubmissionResult {
        &self.submissions[&sid].result
    }

    fn finish(&mut self, sid: u64, result: SubmissionResult) {
        let sub = self.submissions.get_mut(&sid).expect("known submission");
        if sub.result == SubmissionResult::Pending {
            sub.result = result;
            self.pending_txs.remove(&sid);
        }
    }

    fn on_client(&mut self, from: NodeId, msg: Msg) {
        let f = self.rules().f;
        match msg {
            Msg::Ack { sid } => {
                if let Some(s) = self.submissions.get_mut(&sid) {
                    s.acks.insert(from);
                }
            }
            Msg::Committed { height, digests } => {
                for d in digests {
                    for sid in self.by_digest.get(&d).cloned().unwrap_or_default() {
                        let s = self.submissions.get_mut(&sid).expect("indexed");
                        let voters = s.commits.entry(height).or_default();
                        voters.insert(from);
                        if voters.len() > f {
                            let latency_us = self.sched.now() - s.submitted_at;
                            self.finish(sid, SubmissionResult::Committed { height, latency_us });
                        }
                    }
                }
            }
            Msg::Dropped { digest, reason } => {
                for sid in self.by_digest.get(&digest).cloned().unwrap_or_default() {
                    let s = self.submissions.get_mut(&sid).expect("indexed");
                    s.drops.insert(from, reason.clone());
                    if s.drops.len() > f {
                        self.finish(sid, SubmissionResult::Rejected { reason: reason.clone() });
                    }
                }
            }
            _ => {}
        }
    }

    fn on_client_timer(&mut self, id: u64) {
        let Some(ClientTimer::Retry { sid }) = self.client_timers.remove(&id) else { return };
        let s = &self.submissions[&sid];
        if s.result != SubmissionResult::Pending || s.acks.len() > self.rules().f {
            return;
        }
        if s.attempts >= self.config.max_attempts {
            let attempts = s.attempts;
            self.finish(sid, SubmissionResult::TimedOut { attempts });
        } else {
            self.retries += 1;
            self.send_attempt(sid);
        }
    }

    fn step(&mut self) -> bool {
        let Some((_, ev)) = self.sched.next() else { return false };
        let client = self.client;
        match ev {
            Event::Deliver { from, to, msg } if to == client => self.on_client(from, msg),
            Event::Timer { node, id } if node == client => self.on_client_timer(id),
            Event::Deliver { from, to, msg } => {
                let mut ctx = Ctx { sched: &mut self.sched, rules: &self.genesis.rules, config: &self.config, client };
                self.peers[to].handle(&mut ctx, from, msg);
            }
            Event::Timer { node, id } => {
                let mut ctx = Ctx { sched: &mut self.sched, rules: &self.genesis.rules, config: &self.config, client };
                if !ctx.sched.is_down(node) {
                    self.peers[node].on_timer(&mut ctx, id);
                }
            }
        }
        true
    }

    /// Processes every event up to time `t`, then sets the clock to `t`.
    pub fn run_until(&mut self, t: SimTime) {
        while self.sched.next_time().is_some_and(|at| at <= t) {
            self.step();
        }
        self.sched.advance(t);
    }

    pub fn run_for(&mut self, d: SimTime) {
        self.run_until(self.sched.now() + d);
    }

    /// Runs until no submission is pending, for at most `limit` of simulated
    /// time. Submissions still pending after that mean the peers cannot
    /// reach a quorum.
    pub fn settle(&mut self, limit: SimTime) -> Result<(), LedgerError> {
        let deadline = self.sched.now() + limit;
        while self.pending() > 0 && self.sched.next_time().is_some_and(|t| t <= deadline) {
            self.step();
        }
        match self.pending() {
            0 => Ok(()),
            n => Err(LedgerError::LivenessLoss(format!(
                "{n} submissions uncommitted after {:.1} s",
                limit as f64 / SECOND as f64
            ))),
        }
    }

    pub fn pending(&self) -> usize {
        self.submissions.values().filter(|s| s.result == SubmissionResult::Pending).count()
    }

    pub fn client_stats(&self) -> ClientStats {
        let mut s = ClientStats { submitted: self.submissions.len() as u64, retries: self.retries, ..Default::default() };
        for sub in self.submissions.values() {
            match sub.result {
                SubmissionResult::Pending => s.pending += 1,
                SubmissionResult::Committed { .. } => s.committed += 1,
                SubmissionResult::Rejected { .. } => s.rejected += 1,
                SubmissionResult::TimedOut { .. } => s.timed_out += 1,
            }
        }
        s
    }

    /// Peers that follow the protocol and are up.
    pub fn honest_peers(&self) -> Vec<usize> {
        (0..self.peers.len())
            .filter(|&i| self.peers[i].behavior == Behavior::Honest && !self.sched.is_down(i))
            .collect()
    }

    /// First height at which two honest peers hold different blocks.
    pub fn divergence(&self) -> Option<(u64, usize, usize)> {
        let honest = self.honest_peers();
        for (k, &a) in honest.iter().enumerate() {
            for &b in &honest[k + 1..] {
                let (ca, cb) = (&self.peers[a].chain, &self.peers[b].chain);
                for h in 0..=ca.height().min(cb.height()) {
                    if ca.block(h).map(Block::hash) != cb.block(h).map(Block::hash) {
                        return Some((h, a, b));
                    }
                }
            }
        }
        None
    }

    /// Longest chain among honest peers.
    pub fn best_chain(&self) -> &Chain {
        let best = self.honest_peers().into_iter().max_by_key(|&i| self.peers[i].chain.height()).unwrap_or(0);
        &self.peers[best].chain
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dht::ContentAddress;
    use crate::ledger::{create_tx, replay_world_state, AclEntry, Action, GenesisConfig, Permission, Transaction};
    use crate::reputation::ReputationRecord;

    fn consortium(behaviors: Vec<Behavior>, seed: u64) -> Consortium {
        let genesis = Genesis::new(GenesisConfig::default()).unwrap();
        Consortium::new(genesis, ConsortiumConfig { seed, behaviors, ..Default::default() })
    }

    fn record(id: &str) -> ReputationRecord {
        ReputationRecord {
            id: id.into(),
            alpha: 3.0,
            beta: 1.0,
            level: 0.75,
            last_detection_level: 0.0,
            status: false,
            updated_at: 0,
            quarantined: false,
        }
    }

    fn store(c: &mut Consortium, keys: &DeviceKeyPair<G>, payload: &[u8], acl: Vec<AclEntry>) -> u64 {
        let tx = create_tx(&keys.id, acl, Action::Store, ContentAddress::of(payload), b"p".to_vec(), &record(&keys.id), c.now_ms())
            .unwrap();
        let stx = SignedTx::sign(Transaction::Data(tx), keys, c.sched.rng());
        c.submit(stx)
    }

    fn assert_consistent(c: &Consortium) {
        assert_eq!(c.divergence(), None);
        for p in c.honest_peers() {
            let chain = c.chain(p);
            let replayed = replay_world_state(chain.rules(), chain.blocks()).unwrap();
            assert_eq!(replayed.to_bytes(chain.rules()), chain.state().to_bytes(chain.rules()));
        }
    }

    fn run_workload(c: &mut Consortium) -> Vec<u64> {
        let (a, ra) = c.enroll("a").unwrap();
        let (_, rb) = c.enroll("b").unwrap();
        c.settle(20 * SECOND).unwrap();
        assert!(matches!(c.result(ra), SubmissionResult::Committed { .. }), "{:?}", c.result(ra));
        assert!(matches!(c.result(rb), SubmissionResult::Committed { .. }));
        let sids: Vec<u64> = (0..10).map(|i| store(c, &a, &[i], vec![AclEntry::new("b", Permission::Read)])).collect();
        c.settle(20 * SECOND).unwrap();
        sids
    }

    #[test]
    fn honest_peers_commit() {
        let mut c = consortium(vec![], 3);
        let sids = run_workload(&mut c);
        for sid in sids {
            assert!(matches!(c.result(sid), SubmissionResult::Committed { .. }));
        }
        assert_eq!(c.best_chain().state().ads.len(), 10);
        assert_consistent(&c);
        assert_eq!(c.peer_stats(0).view_changes, 0);
    }

    #[test]
    fn crashed_leader_triggers_view_change() {
        let mut c = consortium(vec![Behavior::Honest, Behavior::Crashed], 4);
        run_workload(&mut c);
        assert_eq!(c.client_stats().committed, 12);
        assert!(c.peer_stats(0).view_changes > 0);
        assert_consistent(&c);
    }

    #[test]
    fn equivocating_leader_is_survived() {
        for seed in 0..4 {
            let mut c = consortium(vec![Behavior::Honest, Behavior::Equivocating], seed);
            run_workload(&mut c);
            assert_eq!(c.client_stats().committed, 12, "seed {seed}");
            assert_consistent(&c);
        }
    }

    #[test]
    fn two_crashed_peers_lose_liveness() {
        let mut c = consortium(vec![Behavior::Crashed, Behavior::Crashed], 5);
        c.enroll("a").unwrap();
        assert!(matches!(c.settle(10 * SECOND), Err(LedgerError::LivenessLoss(_))));
        assert!(c.honest_peers().iter().all(|&p| c.chain(p).height() == 0));
    }

    #[test]
    fn all_peers_down_times_out() {
        let mut c = consortium(vec![Behavior::Crashed; 4], 6);
        let (_, sid) = c.enroll("a").unwrap();
        c.settle(60 * SECOND).unwrap();
        assert_eq!(c.result(sid), &SubmissionResult::TimedOut { attempts: 5 });
    }

    #[test]
    fn invalid_transactions_are_rejected() {
        let mut c = consortium(vec![], 7);
        let (a, _) = c.enroll("a").unwrap();
        c.settle(10 * SECOND).unwrap();
        let first = store(&mut c, &a, b"x", vec![]);
        c.settle(10 * SECOND).unwrap();
        let again = store(&mut c, &a, b"x", vec![]);
        c.settle(10 * SECOND).unwrap();
        assert!(matches!(c.result(first), SubmissionResult::Committed { .. }));
        assert!(matches!(c.result(again), SubmissionResult::Rejected { reason } if reason.contains("already stored")));
    }

    #[test]
    fn lossy_network_is_deterministic() {
        let run = || {
            let genesis = Genesis::new(GenesisConfig::default()).unwrap();
            let net = NetConfig { loss: 0.05, ..Default::default() };
            let mut c = Consortium::new(genesis, ConsortiumConfig { seed: 9, net, ..Default::default() });
            run_workload(&mut c);
            assert_consistent(&c);
            (c.now(), c.best_chain().tip())
        };
        assert_eq!(run(), run());
    }
}
