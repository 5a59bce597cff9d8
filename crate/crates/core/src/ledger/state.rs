use std::collections::BTreeMap;

use serde::Serialize;

use super::tx::{acl_permits, AclEntry, Action, LedgerTransaction, ReputationSnapshot, SignedTx, Transaction};
use super::{Digest, LedgerRules, G};
use crate::codec::Writer;
use crate::crypto::{verify_issuance, verify_with_combined, Group, PublicKey, Verification};
use crate::dht::ContentAddress;
use crate::reputation::{quarantine_check, ReputationRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerificationFlags {
    /// Identity and key belong together.
    pub v1: bool,
    /// Signature is valid and the timestamp is fresh.
    pub v2: bool,
    /// Payload stored; only set once committed.
    pub s: bool,
}

/// Result of validating one transaction against a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TxOutcome {
    #[serde(with = "hex_digest")]
    pub digest: Digest,
    pub flags: VerificationFlags,
    /// Why the transaction cannot commit, if it cannot.
    pub rejection: Option<String>,
}

mod hex_digest {
    pub fn serialize<S: serde::Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }
}

impl TxOutcome {
    pub fn accepted(&self) -> bool {
        self.rejection.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessDecision {
    Permit,
    Deny,
    NotFound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEntry {
    pub pk: PublicKey<G>,
    /// `Q` recomputed at registration.
    pub combined: <G as Group>::Element,
    pub reputation: ReputationSnapshot,
    pub quarantined: bool,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdsEntry {
    pub owner: String,
    pub acl: Vec<AclEntry>,
    #[serde(with = "crate::codec::hex_bytes")]
    pub payload_pointer: Vec<u8>,
    pub version: u32,
    pub height: u64,
    #[serde(with = "hex_digest")]
    pub last_tx: Digest,
    pub accesses: u64,
}

/// State change of an accepted transaction.
enum Effect {
    Register { id: String, pk: PublicKey<G>, combined: <G as Group>::Element },
    Data { tx: LedgerTransaction, quarantine: Option<bool>, stores: bool },
}

/// Materialized view of all committed transactions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldState {
    pub height: u64,
    pub tip: Digest,
    pub devices: BTreeMap<String, DeviceEntry>,
    pub ads: BTreeMap<ContentAddress, AdsEntry>,
}

impl WorldState {
    /// State right after the genesis block `tip`.
    pub fn genesis(tip: Digest) -> Self {
        Self { height: 0, tip, ..Default::default() }
    }

    /// V1 for data transactions: the registry holds `id` with exactly `pk`.
    pub fn verify_identity(&self, id: &str, pk: &PublicKey<G>) -> bool {
        self.devices.get(id).is_some_and(|d| d.pk == *pk)
    }

    /// V2: the signature verifies and the timestamp lies within the skew
    /// window of `now`.
    pub fn verify_tx(&self, rules: &LedgerRules, stx: &SignedTx, now: i64) -> Result<(), &'static str> {
        if (stx.tx.timestamp() - now).abs() > rules.clock_skew_ms {
            return Err("stale");
        }
        let id = stx.tx.id();
        let q = match self.devices.get(id) {
            Some(d) if d.pk == stx.pk => d.combined,
            _ => stx.pk.combined(&rules.params, &rules.kgd, id).map_err(|_| "bad public key")?,
        };
        if verify_with_combined(&rules.params, &stx.pk, &q, id, &stx.tx.signing_bytes(), &stx.signature) {
            Ok(())
        } else {
            Err("bad signature")
        }
    }

    pub fn apply_acl(&self, ads: &ContentAddress, requester: &str) -> AccessDecision {
        match self.ads.get(ads) {
            None => AccessDecision::NotFound,
            Some(e) if e.owner == requester || acl_permits(&e.acl, requester, Action::Access) => {
                AccessDecision::Permit
            }
            Some(_) => AccessDecision::Deny,
        }
    }

    /// Validates `stx` as the next transaction at block time `now` without
    /// changing the state.
    pub fn check(&self, rules: &LedgerRules, stx: &SignedTx, now: i64) -> TxOutcome {
        self.evaluate(rules, stx, now).0
    }

    /// Validates and, if accepted, applies `stx` as part of block `height`.
    pub fn apply(&mut self, rules: &LedgerRules, stx: &SignedTx, now: i64, height: u64) -> TxOutcome {
        let (outcome, effect) = self.evaluate(rules, stx, now);
        if let Some(effect) = effect {
            self.commit(effect, outcome.digest, height);
        }
        outcome
    }

    fn evaluate(&self, rules: &LedgerRules, stx: &SignedTx, now: i64) -> (TxOutcome, Option<Effect>) {
        let digest = stx.digest();
        let v1 = match &stx.tx {
            Transaction::Register(r) => {
                let msg = crate::crypto::IssuanceMessage {
                    id: r.id.clone(),
                    commitment: stx.pk.commitment,
                    r_point: stx.pk.r_point,
                    signers: stx.pk.signers.clone(),
                };
                verify_issuance(&rules.params, &rules.kgd, &msg, &r.issuance) == Verification::Accept
            }
            Transaction::Data(d) => self.verify_identity(&d.id, &stx.pk),
        };
        let v2_result = self.verify_tx(rules, stx, now);
        let v2 = v2_result.is_ok();
        let mut outcome = TxOutcome { digest, flags: VerificationFlags { v1, v2, s: false }, rejection: None };
        let admitted = if rules.admit_either { v1 || v2 } else { v1 && v2 };
        if !admitted {
            let mut why = Vec::new();
            if !v1 {
                why.push("V1 failed: identity not bound to key");
            }
            if let Err(e) = v2_result {
                why.push(e);
            }
            outcome.rejection = Some(why.join("; "));
            return (outcome, None);
        }
        let effect = match &stx.tx {
            Transaction::Register(r) => self.registration_effect(rules, &r.id, &stx.pk),
            Transaction::Data(d) => self.data_effect(rules, d),
        };
        match effect {
            Ok(effect) => {
                outcome.flags.s = matches!(effect, Effect::Data { stores: true, .. });
                (outcome, Some(effect))
            }
            Err(e) => {
                outcome.rejection = Some(e);
                (outcome, None)
            }
        }
    }

    fn registration_effect(&self, rules: &LedgerRules, id: &str, pk: &PublicKey<G>) -> Result<Effect, String> {
        if self.devices.contains_key(id) {
            return Err(format!("`{id}` is already registered"));
        }
        let combined = pk.combined(&rules.params, &rules.kgd, id).map_err(|e| e.to_string())?;
        Ok(Effect::Register { id: id.to_string(), pk: pk.clone(), combined })
    }

    fn data_effect(&self, rules: &LedgerRules, tx: &LedgerTransaction) -> Result<Effect, String> {
        if !(0.0..=1.0).contains(&tx.reputation.level) || !(0.0..=100.0).contains(&tx.reputation.detection_level) {
            return Err("reputation snapshot out of range".into());
        }
        let quarantine = match self.devices.get(&tx.id) {
            Some(d) => {
                let probe = ReputationRecord {
                    id: tx.id.clone(),
                    alpha: 1.0,
                    beta: 1.0,
                    level: tx.reputation.level,
                    last_detection_level: tx.reputation.detection_level,
                    status: tx.reputation.status,
                    updated_at: 0,
                    quarantined: d.quarantined,
                };
                let q = quarantine_check(&probe, rules.quarantine_floor, rules.hysteresis);
                if d.quarantined && q {
                    return Err(format!("`{}` is quarantined", tx.id));
                }
                Some(q)
            }
            None => None,
        };
        match tx.action {
            Action::Store => {
                if tx.ads.0 == [0; 32] {
                    return Err("empty ADS".into());
                }
                if self.ads.contains_key(&tx.ads) {
                    return Err(format!("ADS {} already stored", tx.ads));
                }
            }
            Action::Update => {
                let entry = self.ads.get(&tx.ads).ok_or_else(|| format!("ADS {} not found", tx.ads))?;
                if entry.owner != tx.id && !acl_permits(&entry.acl, &tx.id, Action::Update) {
                    return Err(format!("`{}` may not update {}", tx.id, tx.ads));
                }
            }
            Action::Access => match self.apply_acl(&tx.ads, &tx.id) {
                AccessDecision::Permit => {}
                AccessDecision::Deny => return Err(format!("access to {} denied for `{}`", tx.ads, tx.id)),
                AccessDecision::NotFound => return Err(format!("ADS {} not found", tx.ads)),
            },
        }
        Ok(Effect::Data { tx: tx.clone(), quarantine, stores: tx.action == Action::Store })
    }

    fn commit(&mut self, effect: Effect, digest: Digest, height: u64) {
        match effect {
            Effect::Register { id, pk, combined } => {
                self.devices.insert(
                    id,
                    DeviceEntry {
                        pk,
                        combined,
                        reputation: ReputationSnapshot::default(),
                        quarantined: false,
                        registered_at: height,
                    },
                );
            }
            Effect::Data { tx, quarantine, .. } => {
                match tx.action {
                    Action::Store => {
                        self.ads.insert(
                            tx.ads,
                            AdsEntry {
                                owner: tx.id.clone(),
                                acl: tx.acl.clone(),
                                payload_pointer: tx.payload_pointer.clone(),
                                version: 1,
                                height,
                                last_tx: digest,
                                accesses: 0,
                            },
                        );
                    }
                    Action::Update => {
                        let entry = self.ads.get_mut(&tx.ads).expect("validated");
                        entry.acl = tx.acl.clone();
                        entry.payload_pointer = tx.payload_pointer.clone();
                        entry.version += 1;
                        entry.height = height;
                        entry.last_tx = digest;
                    }
                    Action::Access => {
                        self.ads.get_mut(&tx.ads).expect("validated").accesses += 1;
                    }
                }
                if let (Some(q), Some(dev)) = (quarantine, self.devices.get_mut(&tx.id)) {
                    dev.reputation = tx.reputation;
                    dev.quarantined = q;
                }
            }
        }
    }

    /// Canonical bytes, used to compare states exactly.
    pub fn to_bytes(&self, rules: &LedgerRules) -> Vec<u8> {
        let g = &rules.params.group;
        let mut w = Writer::new();
        w.u64(self.height).raw(&self.tip).u32(self.devices.len() as u32);
        for (id, d) in &self.devices {
            w.str(id).bytes(&d.pk.to_bytes(&rules.params)).bytes(&g.encode_element(&d.combined));
            w.f64(d.reputation.level).f64(d.reputation.detection_level).bool(d.reputation.status);
            w.bool(d.quarantined).u64(d.registered_at);
        }
        w.u32(self.ads.len() as u32);
        for (a, e) in &self.ads {
            w.raw(&a.0).str(&e.owner).u32(e.acl.len() as u32);
            for x in &e.acl {
                w.str(&x.identity).u8(x.permission as u8);
            }
            w.bytes(&e.payload_pointer).u32(e.version).u64(e.height).raw(&e.last_tx).u64(e.accesses);
        }
        w.finish()
    }

    /// JSON view for debugging and the CLI.
    pub fn to_json(&self, rules: &LedgerRules) -> serde_json::Value {
        let devices: BTreeMap<_, _> = self
            .devices
            .iter()
            .map(|(id, d)| {
                (
                    id.clone(),
                    serde_json::json!({
                        "pk": hex::encode(d.pk.to_bytes(&rules.params)),
                        "reputation": d.reputation,
                        "quarantined": d.quarantined,
                        "registered_at": d.registered_at,
                    }),
                )
            })
            .collect();
        let ads: BTreeMap<_, _> = self.ads.iter().map(|(a, e)| (a.to_string(), e)).collect();
        serde_json::json!({
            "height": self.height,
            "tip": hex::encode(self.tip),
            "devices": devices,
            "ads": ads,
        })
    }
}
