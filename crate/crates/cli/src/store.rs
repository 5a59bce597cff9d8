use std::fs;
use std::path::{Path, PathBuf};

use fdd_core::crypto::{DeviceKeyPair, Group, PublicKey, SecretKey, Secp256k1};
use fdd_core::dht::Dht;
use fdd_core::ledger::{import_chain, verify_chain, Chain, Genesis, GenesisConfig, LedgerRules};
use fdd_core::reputation::{ReputationConfig, ReputationStore};
use serde::{Deserialize, Serialize};

use crate::{invalid, runtime, Failure};

const GENESIS: &str = "genesis.toml";
const CHAIN: &str = "chain.fddc";
const REPUTATION: &str = "reputation.json";
const DHT: &str = "dht";
const KEYS: &str = "keys";

pub const DHT_K: usize = 3;
pub const DHT_NODES: usize = 8;

#[derive(Serialize, Deserialize)]
struct KeyFile {
    id: String,
    public_key: String,
    ps: String,
    x: String,
}

/// Everything the CLI keeps between invocations.
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        fs::create_dir_all(&self.root).map_err(runtime)?;
        fs::write(self.path(name), bytes).map_err(|e| runtime(format!("{}: {e}", self.path(name).display())))
    }

    /// Loads the genesis config, creating one from `seed` on first use.
    pub fn genesis(&self, seed: impl FnOnce() -> u64) -> Result<Genesis, Failure> {
        let path = self.path(GENESIS);
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(runtime)?;
            return Genesis::new(GenesisConfig::from_toml_str(&text)?).map_err(Failure::from);
        }
        let genesis = Genesis::new(GenesisConfig { seed: seed(), ..Default::default() })?;
        self.write(GENESIS, genesis.published_config().to_toml_string().as_bytes())?;
        self.save_chain(&genesis, &Chain::new(genesis.rules.clone()))?;
        Ok(genesis)
    }

    pub fn init_genesis(&self, config: GenesisConfig) -> Result<Genesis, Failure> {
        if self.path(GENESIS).exists() {
            return Err(invalid(format!("{} already exists", self.path(GENESIS).display())));
        }
        let genesis = Genesis::new(config)?;
        self.write(GENESIS, genesis.published_config().to_toml_string().as_bytes())?;
        self.save_chain(&genesis, &Chain::new(genesis.rules.clone()))?;
        Ok(genesis)
    }

    pub fn chain_path(&self) -> PathBuf {
        self.path(CHAIN)
    }

    /// Loads and fully re-verifies the stored chain.
    pub fn chain(&self, genesis: &Genesis) -> Result<Chain, Failure> {
        let path = self.chain_path();
        if !path.exists() {
            return Ok(Chain::new(genesis.rules.clone()));
        }
        load_chain(&path, Some(&genesis.rules))
    }

    pub fn save_chain(&self, genesis: &Genesis, chain: &Chain) -> Result<(), Failure> {
        self.write(CHAIN, &chain.export(&genesis.published_config()))
    }

    pub fn reputation(&self) -> Result<ReputationStore, Failure> {
        let path = self.path(REPUTATION);
        if !path.exists() {
            return Ok(ReputationStore::new(ReputationConfig::default()).expect("default config is valid"));
        }
        let text = fs::read_to_string(&path).map_err(runtime)?;
        ReputationStore::from_json(ReputationConfig::default(), &text).map_err(runtime)
    }

    pub fn save_reputation(&self, store: &ReputationStore) -> Result<(), Failure> {
        self.write(REPUTATION, store.to_json().as_bytes())
    }

    pub fn dht(&self) -> Result<Dht, Failure> {
        let dir = self.path(DHT);
        if dir.join("manifest.json").exists() {
            Dht::load(&dir).map_err(runtime)
        } else {
            Ok(Dht::with_nodes(DHT_K, DHT_NODES))
        }
    }

    pub fn save_dht(&self, dht: &Dht) -> Result<(), Failure> {
        dht.save(&self.path(DHT)).map_err(runtime)
    }

    fn key_path(&self, id: &str) -> Result<PathBuf, Failure> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || id.starts_with('.') {
            return Err(invalid(format!("identity `{id}` must be non-empty ASCII letters, digits, '-', '_' or '.'")));
        }
        Ok(self.path(KEYS).join(format!("{id}.json")))
    }

    pub fn save_key(&self, rules: &LedgerRules, keys: &DeviceKeyPair<Secp256k1>) -> Result<PathBuf, Failure> {
        let g = &rules.params.group;
        let file = KeyFile {
            id: keys.id.clone(),
            public_key: hex::encode(keys.pk.to_bytes(&rules.params)),
            ps: hex::encode(g.encode_scalar(&keys.sk.ps)),
            x: hex::encode(g.encode_scalar(&keys.sk.x)),
        };
        let path = self.key_path(&keys.id)?;
        fs::create_dir_all(path.parent().expect("keys dir")).map_err(runtime)?;
        fs::write(&path, serde_json::to_vec_pretty(&file).expect("key file")).map_err(runtime)?;
        Ok(path)
    }

    pub fn has_key(&self, id: &str) -> Result<bool, Failure> {
        Ok(self.key_path(id)?.exists())
    }

    pub fn load_key(&self, rules: &LedgerRules, id: &str) -> Result<DeviceKeyPair<Secp256k1>, Failure> {
        let path = self.key_path(id)?;
        let text = fs::read(&path).map_err(|_| invalid(format!("no key for `{id}`; run `fdd keys register --id {id}`")))?;
        let file: KeyFile = serde_json::from_slice(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let p = &rules.params;
        let bad = |what: &str| runtime(format!("{}: bad {what}", path.display()));
        let pk = PublicKey::from_bytes(p, &hex::decode(&file.public_key).map_err(|_| bad("public key"))?)
            .map_err(|_| bad("public key"))?;
        let scalar = |s: &str| hex::decode(s).ok().and_then(|b| p.group.decode_scalar(&b));
        let sk = SecretKey { ps: scalar(&file.ps).ok_or_else(|| bad("ps"))?, x: scalar(&file.x).ok_or_else(|| bad("x"))? };
        let combined = pk.combined(p, &rules.kgd, &file.id).map_err(|_| bad("public key"))?;
        if file.id != id || p.group.mul_gen(&p.group.scalar_add(&sk.ps, &sk.x)) != combined {
            return Err(bad("key pair"));
        }
        Ok(DeviceKeyPair { id: file.id, pk, sk, combined })
    }
}

/// Reads a chain export and rebuilds it block by block. Integrity failures
/// carry the first bad height.
pub fn load_chain(path: &Path, expected: Option<&LedgerRules>) -> Result<Chain, Failure> {
    let bytes = fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let (config, blocks) = import_chain(&bytes)?;
    let rules = Genesis::new(config)?.rules;
    if expected.is_some_and(|r| r.digest != rules.digest) {
        return Err(runtime(format!("{} belongs to a different genesis", path.display())));
    }
    let report = verify_chain(&rules, &blocks);
    if let (Some(height), Some(reason)) = (report.first_bad_height, report.reason) {
        return Err(Failure::Integrity { height, reason });
    }
    let mut chain = Chain::new(rules);
    for b in blocks.into_iter().skip(1) {
        chain.append(b)?;
    }
    Ok(chain)
}
