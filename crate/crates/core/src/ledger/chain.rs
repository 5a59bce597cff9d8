use serde::Serialize;

use super::block::{sign_commit, Block, QuorumCertificate};
use super::genesis::{Genesis, GenesisConfig, LedgerRules};
use super::state::{TxOutcome, WorldState};
use super::tx::SignedTx;
use super::{Digest, LedgerError};
use crate::codec::{Reader, Writer};

const MAGIC: &[u8; 4] = b"FDDC";
const VERSION: u32 = 1;

/// Validated chain of blocks and the state it produces.
#[derive(Debug, Clone)]
pub struct Chain {
    rules: LedgerRules,
    blocks: Vec<Block>,
    state: WorldState,
}

impl Chain {
    pub fn new(rules: LedgerRules) -> Self {
        let genesis = Block::genesis(&rules);
        let state = WorldState::genesis(genesis.hash());
        Self { rules, blocks: vec![genesis], state }
    }

    pub fn rules(&self) -> &LedgerRules {
        &self.rules
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> Digest {
        self.state.tip
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn last_timestamp(&self) -> i64 {
        self.blocks.last().expect("genesis").header.timestamp
    }

    /// Checks `block` as the next block and returns the state after it.
    /// Every transaction in a block must be accepted.
    pub fn validate(&self, block: &Block, check_qc: bool) -> Result<WorldState, String> {
        let h = &block.header;
        if h.height != self.height() + 1 {
            return Err(format!("height {} does not follow {}", h.height, self.height()));
        }
        if h.prev_hash != self.tip() {
            return Err("previous hash does not match the tip".into());
        }
        if h.timestamp < self.last_timestamp() {
            return Err("timestamp goes backwards".into());
        }
        if h.proposer as usize >= self.rules.peers {
            return Err(format!("unknown proposer {}", h.proposer));
        }
        if block.txs.len() > self.rules.max_batch {
            return Err(format!("{} transactions exceed the batch limit", block.txs.len()));
        }
        block.check_body()?;
        let hash = block.hash();
        if check_qc {
            block.qc.verify(&self.rules, h.height, &hash)?;
        }
        let mut state = self.state.clone();
        for (i, stx) in block.txs.iter().enumerate() {
            let out = state.apply(&self.rules, stx, h.timestamp, h.height);
            if let Some(why) = out.rejection {
                return Err(format!("transaction {i}: {why}"));
            }
        }
        state.height = h.height;
        state.tip = hash;
        Ok(state)
    }

    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        let height = block.header.height;
        self.state = self.validate(&block, true).map_err(|reason| LedgerError::Integrity { height, reason })?;
        self.blocks.push(block);
        Ok(())
    }

    /// Picks the transactions from `pending` that can commit together in
    /// the next block at `now`, in order, up to the batch limit. Also returns
    /// the outcome of every candidate.
    pub fn select(&self, pending: &[SignedTx], now: i64) -> (Vec<SignedTx>, Vec<TxOutcome>) {
        let mut state = self.state.clone();
        let mut chosen = Vec::new();
        let mut outcomes = Vec::with_capacity(pending.len());
        for stx in pending {
            if chosen.len() == self.rules.max_batch {
                break;
            }
            let out = state.apply(&self.rules, stx, now, self.height() + 1);
            if out.accepted() {
                chosen.push(stx.clone());
            }
            outcomes.push(out);
        }
        (chosen, outcomes)
    }

    /// Commits `pending` in one block signed by every genesis key, without
    /// running consensus.
    pub fn commit_direct(&mut self, genesis: &Genesis, pending: &[SignedTx], now: i64) -> Result<Vec<TxOutcome>, LedgerError> {
        let (chosen, outcomes) = self.select(pending, now);
        let mut block = Block::propose(self.height() + 1, self.tip(), now.max(self.last_timestamp()), 0, chosen);
        let hash = block.hash();
        let votes = genesis.keys().iter().enumerate().map(|(i, k)| (i, sign_commit(k, block.header.height, &hash)));
        block.qc = QuorumCertificate::from_votes(self.rules.peers, votes);
        self.append(block)?;
        Ok(outcomes)
    }

    pub fn export(&self, genesis: &GenesisConfig) -> Vec<u8> {
        export_chain(genesis, &self.blocks)
    }
}

/// `FDDC`, version, published genesis config, then length-prefixed blocks.
pub fn export_chain(genesis: &GenesisConfig, blocks: &[Block]) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(MAGIC).u32(VERSION).str(&genesis.to_toml_string()).u32(blocks.len() as u32);
    for b in blocks {
        w.bytes(&b.to_bytes());
    }
    w.finish()
}

/// Decodes an export. A block that fails to decode is reported as an
/// integrity violation at its position.
pub fn import_chain(bytes: &[u8]) -> Result<(GenesisConfig, Vec<Block>), LedgerError> {
    let mut r = Reader::new(bytes);
    if r.raw(4)? != MAGIC {
        return Err(LedgerError::Encoding("not a chain export".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LedgerError::Encoding(format!("unsupported chain version {version}")));
    }
    let genesis = GenesisConfig::from_toml_str(r.str()?)?;
    let n = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(n.min(1 << 16));
    for height in 0..n as u64 {
        let block = r
            .bytes()
            .map_err(LedgerError::from)
            .and_then(Block::from_bytes)
            .map_err(|e| LedgerError::Integrity { height, reason: e.to_string() })?;
        blocks.push(block);
    }
    r.finish()?;
    Ok((genesis, blocks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    /// Height of the last valid block.
    pub height: u64,
    pub tip: String,
    pub transactions: usize,
    pub first_bad_height: Option<u64>,
    pub reason: Option<String>,
}

impl ChainReport {
    pub fn ok(&self) -> bool {
        self.first_bad_height.is_none()
    }
}

/// Re-validates every block from genesis, including every transaction, and
/// reports the first height that fails.
pub fn verify_chain(rules: &LedgerRules, blocks: &[Block]) -> ChainReport {
    let (chain, bad) = rebuild(rules, blocks);
    ChainReport {
        height: chain.height(),
        tip: hex::encode(chain.tip()),
        transactions: chain.blocks.iter().map(|b| b.txs.len()).sum(),
        first_bad_height: bad.as_ref().map(|(h, _)| *h),
        reason: bad.map(|(_, r)| r),
    }
}

/// World state obtained by replaying `blocks` from genesis.
pub fn replay_world_state(rules: &LedgerRules, blocks: &[Block]) -> Result<WorldState, LedgerError> {
    match rebuild(rules, blocks) {
        (chain, None) => Ok(chain.state),
        (_, Some((height, reason))) => Err(LedgerError::Integrity { height, reason }),
    }
}

fn rebuild(rules: &LedgerRules, blocks: &[Block]) -> (Chain, Option<(u64, String)>) {
    let mut chain = Chain::new(rules.clone());
    match blocks.first() {
        None => return (chain, Some((0, "missing genesis block".into()))),
        Some(g) if *g != chain.blocks[0] => return (chain, Some((0, "genesis block does not match the rules".into()))),
        Some(_) => {}
    }
    for (i, b) in blocks.iter().enumerate().skip(1) {
        if let Err(e) = chain.append(b.clone()) {
            let reason = match e {
                LedgerError::Integrity { reason, .. } => reason,
                e => e.to_string(),
            };
            return (chain, Some((i as u64, reason)));
        }
    }
    (chain, None)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::DeviceKeyPair;
    use crate::dht::ContentAddress;
    use crate::ledger::{create_tx, AccessDecision, AclEntry, Action, Permission, Transaction, G};
    use crate::reputation::ReputationRecord;

    fn rep(id: &str, level: f64, quarantined: bool) -> ReputationRecord {
        ReputationRecord {
            id: id.into(),
            alpha: 1.0,
            beta: 1.0,
            level,
            last_detection_level: 0.0,
            status: false,
            updated_at: 0,
            quarantined,
        }
    }

    struct Fixture {
        genesis: Genesis,
        chain: Chain,
        rng: ChaCha20Rng,
        keys: Vec<DeviceKeyPair<G>>,
    }

    fn fixture(config: GenesisConfig) -> Fixture {
        let genesis = Genesis::new(config).unwrap();
        let mut chain = Chain::new(genesis.rules.clone());
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut keys = Vec::new();
        let mut regs = Vec::new();
        for id in ["a", "b", "c"] {
            let (k, stx) = genesis.enroll(id, 1_000, &mut rng).unwrap();
            keys.push(k);
            regs.push(stx);
        }
        let out = chain.commit_direct(&genesis, &regs, 1_000).unwrap();
        assert!(out.iter().all(|o| o.accepted()), "{out:?}");
        Fixture { genesis, chain, rng, keys }
    }

    fn data(f: &mut Fixture, who: usize, action: Action, ads: ContentAddress, acl: Vec<AclEntry>, t: i64) -> SignedTx {
        let id = f.keys[who].id.clone();
        let tx = create_tx(&id, acl, action, ads, b"ptr".to_vec(), &rep(&id, 0.9, false), t).unwrap();
        SignedTx::sign(Transaction::Data(tx), &f.keys[who], &mut f.rng)
    }

    #[test]
    fn store_access_and_replay() {
        let mut f = fixture(GenesisConfig::default());
        let ads = ContentAddress::of(b"payload");
        let store = data(&mut f, 0, Action::Store, ads, vec![AclEntry::new("b", Permission::Read)], 2_000);
        let out = f.chain.commit_direct(&f.genesis.clone(), &[store], 2_000).unwrap();
        assert!(out[0].accepted() && out[0].flags.s);
        assert_eq!(f.chain.state().apply_acl(&ads, "b"), AccessDecision::Permit);
        assert_eq!(f.chain.state().apply_acl(&ads, "c"), AccessDecision::Deny);

        let mut acl = vec![AclEntry::new("b", Permission::Read)];
        let access = data(&mut f, 1, Action::Access, ads, acl.clone(), 3_000);
        acl.push(AclEntry::new("c", Permission::Read));
        // c signs a transaction claiming an ACL that grants it access
        let sneaky = data(&mut f, 2, Action::Access, ads, acl, 3_000);
        let out = f.chain.commit_direct(&f.genesis.clone(), &[access, sneaky], 3_000).unwrap();
        assert!(out[0].accepted());
        assert!(out[1].rejection.as_deref().unwrap().contains("denied"));
        assert_eq!(f.chain.state().ads[&ads].accesses, 1);
        assert_eq!(f.chain.block(3).unwrap().txs.len(), 1);

        let bytes = f.chain.export(&f.genesis.published_config());
        let (config, blocks) = import_chain(&bytes).unwrap();
        let rules = Genesis::new(config).unwrap().rules;
        assert!(verify_chain(&rules, &blocks).ok());
        let replayed = replay_world_state(&rules, &blocks).unwrap();
        assert_eq!(replayed.to_bytes(&rules), f.chain.state().to_bytes(&rules));
    }

    #[test]
    fn tampering_reports_first_bad_height() {
        let mut f = fixture(GenesisConfig::default());
        let ads = ContentAddress::of(b"x");
        let store = data(&mut f, 0, Action::Store, ads, vec![], 2_000);
        f.chain.commit_direct(&f.genesis.clone(), &[store], 2_000).unwrap();
        f.chain.commit_direct(&f.genesis.clone(), &[], 2_500).unwrap();

        let mut blocks = f.chain.blocks().to_vec();
        if let Transaction::Data(d) = &mut blocks[2].txs[0].tx {
            d.payload_pointer = b"evil".to_vec();
        }
        let report = verify_chain(f.chain.rules(), &blocks);
        assert_eq!(report.first_bad_height, Some(2));
        assert_eq!(report.height, 1);

        let mut blocks = f.chain.blocks().to_vec();
        blocks[1].header.timestamp += 1;
        assert_eq!(verify_chain(f.chain.rules(), &blocks).first_bad_height, Some(1));
    }

    #[test]
    fn quorum_certificate_needs_two_f_plus_one() {
        let f = fixture(GenesisConfig::default());
        let mut block = Block::propose(2, f.chain.tip(), 5_000, 1, vec![]);
        let hash = block.hash();
        let votes = f.genesis.keys()[..2].iter().enumerate().map(|(i, k)| (i, sign_commit(k, 2, &hash)));
        block.qc = QuorumCertificate::from_votes(4, votes);
        assert!(f.chain.validate(&block, true).unwrap_err().contains("2 of 3"));
        let votes = f.genesis.keys()[1..].iter().enumerate().map(|(i, k)| (i + 1, sign_commit(k, 2, &[0; 32])));
        block.qc = QuorumCertificate::from_votes(4, votes);
        assert!(f.chain.validate(&block, true).unwrap_err().contains("does not verify"));
    }

    #[test]
    fn stale_and_forged_transactions() {
        let mut f = fixture(GenesisConfig::default());
        let ads = ContentAddress::of(b"x");
        let stale = data(&mut f, 0, Action::Store, ads, vec![], 0);
        let out = f.chain.state().check(f.chain.rules(), &stale, 60_000);
        assert!(out.flags.v1 && !out.flags.v2 && !out.accepted());

        let mut forged = data(&mut f, 0, Action::Store, ads, vec![], 60_000);
        forged.pk = f.keys[1].pk.clone();
        let out = f.chain.state().check(f.chain.rules(), &forged, 60_000);
        assert!(!out.flags.v1 && !out.flags.v2);

        let mut f = fixture(GenesisConfig { admit_either: true, ..Default::default() });
        let stale = data(&mut f, 0, Action::Store, ads, vec![], 0);
        assert!(f.chain.state().check(f.chain.rules(), &stale, 60_000).accepted());
    }

    #[test]
    fn duplicate_registration_and_quarantine() {
        let mut f = fixture(GenesisConfig::default());
        let (_, again) = f.genesis.enroll("a", 2_000, &mut f.rng).unwrap();
        let out = f.chain.state().check(f.chain.rules(), &again, 2_000);
        assert!(out.rejection.unwrap().contains("already registered"));

        let ads = ContentAddress::of(b"x");
        let tx = create_tx("a", vec![], Action::Store, ads, vec![], &rep("a", 0.1, false), 2_000).unwrap();
        let low = SignedTx::sign(Transaction::Data(tx), &f.keys[0], &mut f.rng);
        assert!(f.chain.commit_direct(&f.genesis.clone(), &[low], 2_000).unwrap()[0].accepted());
        assert!(f.chain.state().devices["a"].quarantined);

        let ads2 = ContentAddress::of(b"y");
        let tx = create_tx("a", vec![], Action::Store, ads2, vec![], &rep("a", 0.2, false), 3_000).unwrap();
        let next = SignedTx::sign(Transaction::Data(tx), &f.keys[0], &mut f.rng);
        let out = f.chain.state().check(f.chain.rules(), &next, 3_000);
        assert!(out.rejection.unwrap().contains("quarantined"));
        let tx = create_tx("a", vec![], Action::Store, ads2, vec![], &rep("a", 0.36, false), 3_000).unwrap();
        let recovered = SignedTx::sign(Transaction::Data(tx), &f.keys[0], &mut f.rng);
        assert!(f.chain.state().check(f.chain.rules(), &recovered, 3_000).accepted());
    }

    #[test]
    fn truncated_export_fails_to_import() {
        let f = fixture(GenesisConfig::default());
        let bytes = f.chain.export(&f.genesis.published_config());
        assert!(import_chain(&bytes[..bytes.len() - 3]).is_err());
        assert!(import_chain(b"XXXX").is_err());
    }
}
