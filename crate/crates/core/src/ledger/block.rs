use serde::Serialize;
use sha2::{Digest as _, Sha256};

use super::tx::SignedTx;
use super::{params, Digest, LedgerError, LedgerRules, G};
use crate::codec::{Reader, Writer};
use crate::crypto::{schnorr_sign, schnorr_verify, CosignerKey, Signature, SignerSet};
use crate::dht::ContentAddress;

/// `Tp`: a committed transaction's digest and the DHT address it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxPointer {
    #[serde(serialize_with = "hex_digest")]
    pub digest: Digest,
    pub ads: Option<ContentAddress>,
}

fn hex_digest<S: serde::Serializer>(d: &Digest, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(d))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub height: u64,
    #[serde(serialize_with = "hex_digest")]
    pub prev_hash: Digest,
    #[serde(serialize_with = "hex_digest")]
    pub merkle_root: Digest,
    pub timestamp: i64,
    pub proposer: u32,
    pub tx_pointers: Vec<TxPointer>,
}

impl BlockHeader {
    fn write(&self, w: &mut Writer) {
        w.u64(self.height).raw(&self.prev_hash).raw(&self.merkle_root).i64(self.timestamp).u32(self.proposer);
        w.u32(self.tx_pointers.len() as u32);
        for tp in &self.tx_pointers {
            w.raw(&tp.digest);
            match &tp.ads {
                Some(a) => w.u8(1).raw(&a.0),
                None => w.u8(0),
            };
        }
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let height = r.u64()?;
        let prev_hash = r.array()?;
        let merkle_root = r.array()?;
        let timestamp = r.i64()?;
        let proposer = r.u32()?;
        let n = r.u32()? as usize;
        let mut tx_pointers = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let digest = r.array()?;
            let ads = if r.bool()? { Some(ContentAddress(r.array()?)) } else { None };
            tx_pointers.push(TxPointer { digest, ads });
        }
        Ok(Self { height, prev_hash, merkle_root, timestamp, proposer, tx_pointers })
    }

    pub fn hash(&self) -> Digest {
        let mut w = Writer::new();
        w.str("fdd/block");
        self.write(&mut w);
        Sha256::digest(w.finish()).into()
    }
}

/// `2f + 1` peer signatures over `(height, block hash)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuorumCertificate {
    pub signers: SignerSet,
    /// One per signer, in ascending signer index.
    pub signatures: Vec<Signature<G>>,
}

pub fn commit_message(height: u64, hash: &Digest) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("fdd/commit").u64(height).raw(hash);
    w.finish()
}

pub fn sign_commit(key: &CosignerKey<G>, height: u64, hash: &Digest) -> Signature<G> {
    schnorr_sign(&params(), key.secret(), &commit_message(height, hash))
}

impl QuorumCertificate {
    pub fn from_votes(n: usize, votes: impl IntoIterator<Item = (usize, Signature<G>)>) -> Self {
        let mut votes: Vec<_> = votes.into_iter().collect();
        votes.sort_by_key(|(i, _)| *i);
        votes.dedup_by_key(|(i, _)| *i);
        Self {
            signers: SignerSet::from_indices(n, votes.iter().map(|(i, _)| *i)),
            signatures: votes.into_iter().map(|(_, s)| s).collect(),
        }
    }

    pub fn verify(&self, rules: &LedgerRules, height: u64, hash: &Digest) -> Result<(), String> {
        if self.signers.as_bytes().len() != rules.peers.div_ceil(8) || !self.signers.within(rules.peers) {
            return Err("signer bitmap names unknown peers".into());
        }
        let idx = self.signers.indices();
        if idx.len() != self.signatures.len() {
            return Err("signature count does not match bitmap".into());
        }
        if idx.len() < rules.vote_quorum() {
            return Err(format!("{} of {} required commit votes", idx.len(), rules.vote_quorum()));
        }
        let msg = commit_message(height, hash);
        for (i, sig) in idx.iter().zip(&self.signatures) {
            let public = rules.peer_public(*i).expect("bitmap checked");
            if !schnorr_verify(&rules.params, public, &msg, sig) {
                return Err(format!("commit vote from peer {i} does not verify"));
            }
        }
        Ok(())
    }

    fn write(&self, w: &mut Writer) {
        let p = params();
        w.bytes(self.signers.as_bytes()).u32(self.signatures.len() as u32);
        for s in &self.signatures {
            w.bytes(&s.to_bytes(&p));
        }
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let p = params();
        let signers = SignerSet::from_bytes(r.bytes()?.to_vec());
        let n = r.u32()? as usize;
        let mut signatures = Vec::with_capacity(n.min(256));
        for _ in 0..n {
            signatures.push(Signature::from_bytes(&p, r.bytes()?)?);
        }
        Ok(Self { signers, signatures })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<SignedTx>,
    pub qc: QuorumCertificate,
}

/// Binary Merkle root over `leaves`; an odd node is paired with itself and
/// the empty list hashes to zeros.
pub fn merkle_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return [0; 32];
    }
    let mut level: Vec<Digest> = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let mut h = Sha256::new();
                h.update(b"fdd/merkle");
                h.update(pair[0]);
                h.update(pair.get(1).unwrap_or(&pair[0]));
                h.finalize().into()
            })
            .collect();
    }
    level[0]
}

impl Block {
    /// Unsigned block over `txs`.
    pub fn propose(height: u64, prev_hash: Digest, timestamp: i64, proposer: u32, txs: Vec<SignedTx>) -> Self {
        let digests: Vec<_> = txs.iter().map(SignedTx::digest).collect();
        let tx_pointers = txs
            .iter()
            .zip(&digests)
            .map(|(t, d)| TxPointer { digest: *d, ads: t.tx.ads() })
            .collect();
        Self {
            header: BlockHeader {
                height,
                prev_hash,
                merkle_root: merkle_root(&digests),
                timestamp,
                proposer,
                tx_pointers,
            },
            txs,
            qc: QuorumCertificate::default(),
        }
    }

    pub fn genesis(rules: &LedgerRules) -> Self {
        Self::propose(0, rules.digest, rules.genesis_time_ms, 0, Vec::new())
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    /// Checks the body against the header: Merkle root and `Tp`.
    pub fn check_body(&self) -> Result<(), String> {
        let digests: Vec<_> = self.txs.iter().map(SignedTx::digest).collect();
        if merkle_root(&digests) != self.header.merkle_root {
            return Err("merkle root mismatch".into());
        }
        let expected: Vec<_> =
            self.txs.iter().zip(&digests).map(|(t, d)| TxPointer { digest: *d, ads: t.tx.ads() }).collect();
        if expected != self.header.tx_pointers {
            return Err("transaction pointers mismatch".into());
        }
        Ok(())
    }

    pub fn write(&self, w: &mut Writer) {
        self.header.write(w);
        w.u32(self.txs.len() as u32);
        for t in &self.txs {
            let mut inner = Writer::new();
            t.write(&mut inner);
            w.bytes(&inner.finish());
        }
        self.qc.write(w);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    /// Strict decoding: every byte must be consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::read(&mut r)?;
        let n = r.u32()? as usize;
        let mut txs = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            txs.push(SignedTx::from_bytes(r.bytes()?)?);
        }
        let qc = QuorumCertificate::read(&mut r)?;
        r.finish()?;
        Ok(Self { header, txs, qc })
    }
}
