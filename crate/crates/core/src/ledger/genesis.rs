use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{params, Digest, LedgerError, G};
use crate::codec::Writer;
use super::tx::{RegistrationTx, SignedTx, Transaction};
use crate::crypto::{register_device, Cosigner, CosignerKey, DeviceKeyPair, Group, KgdPublic, SystemParams};

/// Consortium parameters. Cosigner keys are derived from `seed`; when
/// `cosigner_publics` is given it must match the derived keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenesisConfig {
    pub seed: u64,
    pub peers: usize,
    pub f: usize,
    /// Cosigners an issuance needs; defaults to all peers.
    pub quorum: Option<usize>,
    pub clock_skew_ms: i64,
    /// Commit when either V1 or V2 holds instead of both.
    pub admit_either: bool,
    pub max_batch: usize,
    pub quarantine_floor: f64,
    pub hysteresis: f64,
    pub genesis_time_ms: i64,
    pub cosigner_publics: Option<Vec<String>>,
}

impl Default for GenesisConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            peers: 4,
            f: 1,
            quorum: None,
            clock_skew_ms: 30_000,
            admit_either: false,
            max_batch: 64,
            quarantine_floor: 0.3,
            hysteresis: 0.05,
            genesis_time_ms: 0,
            cosigner_publics: None,
        }
    }
}

impl GenesisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, LedgerError> {
        toml::from_str(text).map_err(|e| LedgerError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("genesis serializes")
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        let bad = |m: String| Err(LedgerError::Config(m));
        if self.peers < 3 * self.f + 1 {
            return bad(format!("{} peers cannot tolerate f = {}", self.peers, self.f));
        }
        if self.quorum.is_some_and(|q| q == 0 || q > self.peers) {
            return bad("issuance quorum must lie in 1..=peers".into());
        }
        if self.clock_skew_ms <= 0 || self.max_batch == 0 {
            return bad("clock_skew_ms and max_batch must be positive".into());
        }
        if !(self.quarantine_floor > 0.0 && self.quarantine_floor < 1.0 && self.hysteresis >= 0.0) {
            return bad("quarantine floor must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// Votes needed to prepare or commit: `2f + 1`.
    pub fn vote_quorum(&self) -> usize {
        2 * self.f + 1
    }
}

/// Public consensus rules every peer and verifier applies.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRules {
    pub params: SystemParams<G>,
    pub kgd: KgdPublic<G>,
    pub peers: usize,
    pub f: usize,
    pub clock_skew_ms: i64,
    pub admit_either: bool,
    pub max_batch: usize,
    pub quarantine_floor: f64,
    pub hysteresis: f64,
    pub genesis_time_ms: i64,
    /// Binds the genesis block to these rules.
    pub digest: Digest,
}

impl LedgerRules {
    pub fn vote_quorum(&self) -> usize {
        2 * self.f + 1
    }

    pub fn peer_public(&self, i: usize) -> Option<&<G as Group>::Element> {
        self.kgd.publics.get(i)
    }
}

/// Rules plus the cosigner secrets, which only exist inside the simulation.
#[derive(Debug, Clone)]
pub struct Genesis {
    pub config: GenesisConfig,
    pub rules: LedgerRules,
    keys: Vec<CosignerKey<G>>,
}

impl Genesis {
    pub fn new(config: GenesisConfig) -> Result<Self, LedgerError> {
        config.validate()?;
        let p = params();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&Sha256::digest([b"fdd/genesis".as_slice(), &config.seed.to_le_bytes()].concat()));
        let mut rng = ChaCha20Rng::from_seed(seed);
        let keys: Vec<_> = (0..config.peers).map(|i| CosignerKey::generate(&p, i, &mut rng)).collect();
        let publics: Vec<_> = keys.iter().map(|k| k.public).collect();
        if let Some(listed) = &config.cosigner_publics {
            let derived: Vec<String> = publics.iter().map(|e| hex::encode(p.group.encode_element(e))).collect();
            if *listed != derived {
                return Err(LedgerError::Config("cosigner_publics do not match the seed".into()));
            }
        }
        let kgd = KgdPublic::new(publics, config.quorum.unwrap_or(config.peers))
            .map_err(|e| LedgerError::Config(e.to_string()))?;

        let mut w = Writer::new();
        w.str("fdd/genesis")
            .u64(config.peers as u64)
            .u64(config.f as u64)
            .u64(kgd.quorum as u64)
            .i64(config.clock_skew_ms)
            .bool(config.admit_either)
            .u64(config.max_batch as u64)
            .f64(config.quarantine_floor)
            .f64(config.hysteresis)
            .i64(config.genesis_time_ms);
        for e in &kgd.publics {
            w.bytes(&p.group.encode_element(e));
        }
        let digest = Sha256::digest(w.finish()).into();
        let rules = LedgerRules {
            params: p,
            kgd,
            peers: config.peers,
            f: config.f,
            clock_skew_ms: config.clock_skew_ms,
            admit_either: config.admit_either,
            max_batch: config.max_batch,
            quarantine_floor: config.quarantine_floor,
            hysteresis: config.hysteresis,
            genesis_time_ms: config.genesis_time_ms,
            digest,
        };
        Ok(Self { config, rules, keys })
    }

    pub fn keys(&self) -> &[CosignerKey<G>] {
        &self.keys
    }

    pub fn cosigners(&self) -> Vec<Cosigner<G>> {
        self.keys.iter().map(|k| Cosigner::new(self.rules.params.clone(), k.clone())).collect()
    }

    /// Runs KGD issuance for `id` with every cosigner and builds the
    /// registration transaction, signed with the new key.
    pub fn enroll(
        &self,
        id: &str,
        timestamp: i64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<(DeviceKeyPair<G>, SignedTx), LedgerError> {
        let mut cosigners = self.cosigners();
        let (_, partial, keys) = register_device(&self.rules.params, &self.rules.kgd, &mut cosigners, id, rng)?;
        let tx = Transaction::Register(RegistrationTx { id: id.to_string(), timestamp, issuance: partial.signature });
        let stx = SignedTx::sign(tx, &keys, rng);
        Ok((keys, stx))
    }

    /// Config with the derived cosigner publics filled in.
    pub fn published_config(&self) -> GenesisConfig {
        let g = &self.rules.params.group;
        GenesisConfig {
            cosigner_publics: Some(self.rules.kgd.publics.iter().map(|e| hex::encode(g.encode_element(e))).collect()),
            ..self.config.clone()
        }
    }
}
