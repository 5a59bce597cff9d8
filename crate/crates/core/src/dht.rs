//! Content-addressed replicated storage with XOR-distance placement.
//!
//! Placement is computed from a global membership view; there is no
//! iterative routing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum DhtError {
    #[error("payload is empty")]
    EmptyPayload,
    #[error("no live storage node")]
    StorageUnavailable,
    #[error("no live replica holds {0}")]
    NotFound(ContentAddress),
    #[error("every replica of {0} is corrupt")]
    IntegrityFailure(ContentAddress),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} already exists")]
    DuplicateNode(String),
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("storage file: {0}")]
    Persist(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentAddress(pub [u8; 32]);

impl ContentAddress {
    pub fn of(data: &[u8]) -> Self {
        Self(sha256(data))
    }
}

impl fmt::Display for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentAddress({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for ContentAddress {
    type Err = DhtError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| DhtError::InvalidAddress(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| DhtError::InvalidAddress("expected 32 bytes".into()))?;
        Ok(Self(arr))
    }
}

impl Serialize for ContentAddress {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ContentAddress {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub [u8; 32]);

impl NodeId {
    pub fn from_name(name: &str) -> Self {
        Self(sha256(name.as_bytes()))
    }

    pub fn distance(&self, addr: &ContentAddress) -> [u8; 32] {
        std::array::from_fn(|i| self.0[i] ^ addr.0[i])
    }
}

#[derive(Debug, Clone)]
pub struct StorageNode {
    pub name: String,
    pub id: NodeId,
    pub alive: bool,
    store: BTreeMap<ContentAddress, Vec<u8>>,
}

impl StorageNode {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), id: NodeId::from_name(name), alive: true, store: BTreeMap::new() }
    }

    pub fn holds(&self, addr: &ContentAddress) -> bool {
        self.store.contains_key(addr)
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.store.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DhtEvent {
    /// A corrupt copy was dropped and the address re-replicated from a good copy.
    Repair { address: ContentAddress, node: String },
    Copied { address: ContentAddress, node: String },
    Lost { address: ContentAddress },
}

/// What a rebalance changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RepairReport {
    pub copied: Vec<(ContentAddress, String)>,
    pub dropped_corrupt: Vec<(ContentAddress, String)>,
    pub lost: Vec<ContentAddress>,
}

impl RepairReport {
    pub fn is_empty(&self) -> bool {
        self.copied.is_empty() && self.dropped_corrupt.is_empty() && self.lost.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DhtStats {
    pub k: usize,
    pub nodes: usize,
    pub live_nodes: usize,
    pub addresses: usize,
    pub replicas: usize,
    pub bytes: usize,
    pub under_replicated: usize,
}

#[derive(Debug, Clone)]
pub struct Dht {
    k: usize,
    nodes: BTreeMap<NodeId, StorageNode>,
    known: BTreeSet<ContentAddress>,
    events: Vec<DhtEvent>,
}

impl Dht {
    pub fn new(k: usize) -> Self {
        Self { k: k.max(1), nodes: BTreeMap::new(), known: BTreeSet::new(), events: Vec::new() }
    }

    /// `n` nodes named `node-0` .. `node-{n-1}`.
    pub fn with_nodes(k: usize, n: usize) -> Self {
        let mut dht = Self::new(k);
        for i in 0..n {
            dht.add_node(&format!("node-{i}")).expect("distinct names");
        }
        dht
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> impl Iterator<Item = &StorageNode> {
        self.nodes.values()
    }

    pub fn events(&self) -> &[DhtEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<DhtEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn addresses(&self) -> impl Iterator<Item = &ContentAddress> {
        self.known.iter()
    }

    fn add_node(&mut self, name: &str) -> Result<NodeId, DhtError> {
        let node = StorageNode::new(name);
        let id = node.id;
        if self.nodes.contains_key(&id) {
            return Err(DhtError::DuplicateNode(name.to_string()));
        }
        self.nodes.insert(id, node);
        Ok(id)
    }

    /// Adds a live node. Call [`Dht::rebalance`] to move data onto it.
    pub fn join(&mut self, name: &str) -> Result<NodeId, DhtError> {
        self.add_node(name)
    }

    fn node_mut(&mut self, name: &str) -> Result<&mut StorageNode, DhtError> {
        self.nodes
            .get_mut(&NodeId::from_name(name))
            .ok_or_else(|| DhtError::UnknownNode(name.to_string()))
    }

    pub fn kill(&mut self, name: &str) -> Result<(), DhtError> {
        self.node_mut(name)?.alive = false;
        Ok(())
    }

    pub fn revive(&mut self, name: &str) -> Result<(), DhtError> {
        self.node_mut(name)?.alive = true;
        Ok(())
    }

    /// Flips one bit of the copy `name` holds, for fault injection.
    pub fn corrupt(&mut self, name: &str, addr: &ContentAddress, bit: usize) -> Result<bool, DhtError> {
        let node = self.node_mut(name)?;
        Ok(match node.store.get_mut(addr) {
            Some(v) if !v.is_empty() => {
                let i = bit % (v.len() * 8);
                v[i / 8] ^= 1 << (i % 8);
                true
            }
            _ => false,
        })
    }

    /// Live nodes ordered by XOR distance to `addr`.
    fn by_distance(&self, addr: &ContentAddress) -> Vec<NodeId> {
        let mut live: Vec<_> = self.nodes.values().filter(|n| n.alive).map(|n| n.id).collect();
        live.sort_by_key(|id| id.distance(addr));
        live
    }

    /// The `min(k, live)` nearest live nodes.
    pub fn replica_set(&self, addr: &ContentAddress) -> Vec<String> {
        self.by_distance(addr).into_iter().take(self.k).map(|id| self.nodes[&id].name.clone()).collect()
    }

    /// Names of nodes currently holding a copy of `addr`, live or not.
    pub fn holders(&self, addr: &ContentAddress) -> Vec<String> {
        self.nodes.values().filter(|n| n.holds(addr)).map(|n| n.name.clone()).collect()
    }

    pub fn put(&mut self, data: &[u8]) -> Result<ContentAddress, DhtError> {
        if data.is_empty() {
            return Err(DhtError::EmptyPayload);
        }
        let addr = ContentAddress::of(data);
        let targets: Vec<_> = self.by_distance(&addr).into_iter().take(self.k).collect();
        if targets.is_empty() {
            return Err(DhtError::StorageUnavailable);
        }
        for id in targets {
            self.nodes.get_mut(&id).expect("live node").store.insert(addr, data.to_vec());
        }
        self.known.insert(addr);
        Ok(addr)
    }

    /// Reads `addr` from the nearest live node with an intact copy. Corrupt
    /// copies met on the way are dropped and the address is re-replicated
    /// before returning.
    pub fn get(&mut self, addr: &ContentAddress) -> Result<Vec<u8>, DhtError> {
        let mut corrupt = Vec::new();
        let mut found = None;
        for id in self.by_distance(addr) {
            if let Some(v) = self.nodes[&id].store.get(addr) {
                if ContentAddress::of(v) == *addr {
                    found = Some(v.clone());
                    break;
                }
                corrupt.push(id);
            }
        }
        for id in &corrupt {
            let node = self.nodes.get_mut(id).expect("node exists");
            node.store.remove(addr);
            self.events.push(DhtEvent::Repair { address: *addr, node: node.name.clone() });
        }
        match found {
            Some(v) => {
                if !corrupt.is_empty() {
                    self.replicate(addr, &v, &mut Vec::new());
                }
                Ok(v)
            }
            None if corrupt.is_empty() => Err(DhtError::NotFound(*addr)),
            None => Err(DhtError::IntegrityFailure(*addr)),
        }
    }

    fn replicate(&mut self, addr: &ContentAddress, data: &[u8], copied: &mut Vec<(ContentAddress, String)>) {
        for id in self.by_distance(addr).into_iter().take(self.k) {
            let node = self.nodes.get_mut(&id).expect("live node");
            if !node.holds(addr) {
                node.store.insert(*addr, data.to_vec());
                copied.push((*addr, node.name.clone()));
                self.events.push(DhtEvent::Copied { address: *addr, node: node.name.clone() });
            }
        }
    }

    /// Drops corrupt copies on live nodes and restores `min(k, live)`
    /// replicas of every known address on its nearest live nodes.
    pub fn rebalance(&mut self) -> RepairReport {
        let mut report = RepairReport::default();
        let addrs: Vec<_> = self.known.iter().copied().collect();
        for addr in addrs {
            let mut good = None;
            for node in self.nodes.values_mut().filter(|n| n.alive) {
                if let Some(v) = node.store.get(&addr) {
                    if ContentAddress::of(v) == addr {
                        good.get_or_insert_with(|| v.clone());
                    } else {
                        node.store.remove(&addr);
                        report.dropped_corrupt.push((addr, node.name.clone()));
                    }
                }
            }
            match good {
                Some(v) => self.replicate(&addr, &v, &mut report.copied),
                None => {
                    report.lost.push(addr);
                    self.events.push(DhtEvent::Lost { address: addr });
                }
            }
        }
        report
    }

    /// Entries whose content does not hash to their key, as `(node, address)`.
    pub fn integrity_violations(&self) -> Vec<(String, ContentAddress)> {
        self.nodes
            .values()
            .flat_map(|n| {
                n.store
                    .iter()
                    .filter(|(a, v)| ContentAddress::of(v) != **a)
                    .map(|(a, _)| (n.name.clone(), *a))
            })
            .collect()
    }

    pub fn stats(&self) -> DhtStats {
        let live: Vec<_> = self.nodes.values().filter(|n| n.alive).collect();
        let want = self.k.min(live.len());
        DhtStats {
            k: self.k,
            nodes: self.nodes.len(),
            live_nodes: live.len(),
            addresses: self.known.len(),
            replicas: live.iter().map(|n| n.len()).sum(),
            bytes: live.iter().map(|n| n.bytes()).sum(),
            under_replicated: self
                .known
                .iter()
                .filter(|a| live.iter().filter(|n| n.holds(a)).count() < want)
                .count(),
        }
    }

    /// Writes `manifest.json` plus one `<name>.node` file of length-prefixed
    /// `(address, payload)` records per node.
    pub fn save(&self, dir: &Path) -> Result<(), DhtError> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            k: self.k,
            nodes: self.nodes.values().map(|n| (n.name.clone(), n.alive)).collect(),
            addresses: self.known.iter().copied().collect(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest).expect("manifest"))?;
        for node in self.nodes.values() {
            let mut w = Writer::new();
            for (addr, data) in &node.store {
                w.bytes(&addr.0).bytes(data);
            }
            let mut f = fs::File::create(dir.join(format!("{}.node", node.name)))?;
            f.write_all(&w.finish())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DhtError> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)
            .map_err(|e| DhtError::Persist(e.to_string()))?;
        let mut dht = Self::new(manifest.k);
        dht.known = manifest.addresses.into_iter().collect();
        for (name, alive) in manifest.nodes {
            let id = dht.add_node(&name)?;
            let data = fs::read(dir.join(format!("{name}.node")))?;
            let mut r = Reader::new(&data);
            let node = dht.nodes.get_mut(&id).expect("just added");
            node.alive = alive;
            while r.remaining() > 0 {
                let addr: [u8; 32] = r
                    .bytes()
                    .map_err(|e| DhtError::Persist(e.to_string()))?
                    .try_into()
                    .map_err(|_| DhtError::Persist("address length".into()))?;
                let payload = r.bytes().map_err(|e| DhtError::Persist(e.to_string()))?;
                node.store.insert(ContentAddress(addr), payload.to_vec());
            }
        }
        Ok(dht)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    k: usize,
    nodes: Vec<(String, bool)>,
    addresses: Vec<ContentAddress>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_idempotence() {
        let mut d = Dht::with_nodes(3, 5);
        let a = d.put(b"hello").unwrap();
        assert_eq!(a, d.put(b"hello").unwrap());
        assert_eq!(d.get(&a).unwrap(), b"hello");
        assert_eq!(d.holders(&a).len(), 3);
        let sorted = |mut v: Vec<String>| {
            v.sort();
            v
        };
        assert_eq!(sorted(d.holders(&a)), sorted(d.replica_set(&a)));
        assert!(matches!(d.put(b""), Err(DhtError::EmptyPayload)));
        assert!(matches!(d.get(&ContentAddress::of(b"nope")), Err(DhtError::NotFound(_))));
    }

    #[test]
    fn no_live_nodes() {
        let mut d = Dht::with_nodes(3, 1);
        d.kill("node-0").unwrap();
        assert!(matches!(d.put(b"x"), Err(DhtError::StorageUnavailable)));
    }

    #[test]
    fn survives_replica_loss() {
        let mut d = Dht::with_nodes(3, 5);
        let a = d.put(b"payload").unwrap();
        let holders = d.replica_set(&a);
        d.kill(&holders[0]).unwrap();
        assert_eq!(d.get(&a).unwrap(), b"payload");
        d.kill(&holders[1]).unwrap();
        let report = d.rebalance();
        assert_eq!(report.copied.len(), 2);
        assert_eq!(d.stats().under_replicated, 0);
        assert!(d.rebalance().is_empty());
    }

    #[test]
    fn corrupt_replica_is_skipped_and_repaired() {
        let mut d = Dht::with_nodes(3, 5);
        let a = d.put(b"some bytes").unwrap();
        let nearest = d.replica_set(&a)[0].clone();
        assert!(d.corrupt(&nearest, &a, 3).unwrap());
        assert_eq!(d.get(&a).unwrap(), b"some bytes");
        assert!(matches!(d.events()[0], DhtEvent::Repair { .. }));
        assert!(d.integrity_violations().is_empty());
        assert_eq!(d.holders(&a).len(), 3);

        for n in d.replica_set(&a) {
            d.corrupt(&n, &a, 0).unwrap();
        }
        assert!(matches!(d.get(&a), Err(DhtError::IntegrityFailure(_))));
    }

    #[test]
    fn join_pulls_nearer_addresses() {
        let mut d = Dht::with_nodes(1, 2);
        let addrs: Vec<_> = (0..64u8).map(|i| d.put(&[i, 1]).unwrap()).collect();
        d.join("late").unwrap();
        let report = d.rebalance();
        let newcomer = NodeId::from_name("late");
        let expect: Vec<_> = addrs
            .iter()
            .filter(|a| d.nodes().all(|n| newcomer.distance(a) <= n.id.distance(a)))
            .copied()
            .collect();
        let mut got: Vec<_> = report.copied.iter().map(|(a, _)| *a).collect();
        got.sort();
        let mut expect = expect;
        expect.sort();
        assert_eq!(got, expect);
        assert!(!got.is_empty());
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = Dht::with_nodes(3, 4);
        let a = d.put(b"persist me").unwrap();
        d.kill("node-2").unwrap();
        d.save(dir.path()).unwrap();
        let mut back = Dht::load(dir.path()).unwrap();
        assert_eq!(back.get(&a).unwrap(), b"persist me");
        assert_eq!(back.stats().live_nodes, 3);
        assert_eq!(back.holders(&a), d.holders(&a));
    }
}
