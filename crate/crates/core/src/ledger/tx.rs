use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{params, Digest, LedgerError, G};
use crate::codec::{Reader, Writer};
use crate::crypto::{sign_tx, DeviceKeyPair, MultiSignature, PublicKey, Signature};
use crate::dht::ContentAddress;
use crate::reputation::ReputationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Store,
    Update,
    Access,
}

impl Action {
    fn code(self) -> u8 {
        match self {
            Action::Store => 0,
            Action::Update => 1,
            Action::Access => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self, LedgerError> {
        match c {
            0 => Ok(Action::Store),
            1 => Ok(Action::Update),
            2 => Ok(Action::Access),
            _ => Err(LedgerError::Rejected(format!("unknown action code {c}"))),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Store => "store",
            Action::Update => "update",
            Action::Access => "access",
        })
    }
}

impl FromStr for Action {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "store" => Ok(Action::Store),
            "update" => Ok(Action::Update),
            "access" => Ok(Action::Access),
            _ => Err(LedgerError::Rejected(format!("unknown action `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Permission {
    /// May read the payload (ACT = access).
    Read,
    /// May read and replace the ACL and pointer (ACT = update).
    Write,
}

impl Permission {
    pub fn allows(self, action: Action) -> bool {
        match action {
            Action::Access => true,
            Action::Update | Action::Store => self == Permission::Write,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AclEntry {
    pub identity: String,
    pub permission: Permission,
}

impl AclEntry {
    pub fn new(identity: impl Into<String>, permission: Permission) -> Self {
        Self { identity: identity.into(), permission }
    }
}

/// Whether `acl` lets `who` perform `action`.
pub fn acl_permits(acl: &[AclEntry], who: &str, action: Action) -> bool {
    acl.iter().any(|e| e.identity == who && e.permission.allows(action))
}

/// `(R, D, S)` as carried on-chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationSnapshot {
    #[serde(rename = "R")]
    pub level: f64,
    #[serde(rename = "D")]
    pub detection_level: f64,
    #[serde(rename = "S")]
    pub status: bool,
}

impl Default for ReputationSnapshot {
    fn default() -> Self {
        Self { level: 0.5, detection_level: 0.0, status: false }
    }
}

impl From<&ReputationRecord> for ReputationSnapshot {
    fn from(r: &ReputationRecord) -> Self {
        Self { level: r.level, detection_level: r.last_detection_level, status: r.status }
    }
}

/// A data transaction `(ID, T, ACT, ADS, L, pointer, (R, D, S))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerTransaction {
    pub id: String,
    pub timestamp: i64,
    pub action: Action,
    pub ads: ContentAddress,
    pub acl: Vec<AclEntry>,
    #[serde(with = "crate::codec::hex_bytes")]
    pub payload_pointer: Vec<u8>,
    pub reputation: ReputationSnapshot,
}

/// Builds an unsigned data transaction. Store transactions always list the
/// owner with write permission; access transactions require the requester
/// to appear in `acl`.
pub fn create_tx(
    id: &str,
    acl: Vec<AclEntry>,
    action: Action,
    ads: ContentAddress,
    payload_pointer: Vec<u8>,
    reputation: &ReputationRecord,
    timestamp: i64,
) -> Result<LedgerTransaction, LedgerError> {
    if reputation.quarantined {
        return Err(LedgerError::SubmissionRefused(format!("`{id}` is quarantined")));
    }
    if ads.0 == [0; 32] {
        return Err(LedgerError::Rejected("empty ADS".into()));
    }
    let mut acl = acl;
    match action {
        Action::Store if !acl_permits(&acl, id, Action::Update) => acl.insert(0, AclEntry::new(id, Permission::Write)),
        Action::Access if !acl_permits(&acl, id, Action::Access) => {
            return Err(LedgerError::Rejected(format!("`{id}` is not in the ACL")));
        }
        _ => {}
    }
    Ok(LedgerTransaction {
        id: id.to_string(),
        timestamp,
        action,
        ads,
        acl,
        payload_pointer,
        reputation: reputation.into(),
    })
}

/// Registration of a device key issued by the KGD.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationTx {
    pub id: String,
    pub timestamp: i64,
    pub issuance: MultiSignature<G>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transaction {
    Register(RegistrationTx),
    Data(LedgerTransaction),
}

impl Transaction {
    pub fn id(&self) -> &str {
        match self {
            Transaction::Register(r) => &r.id,
            Transaction::Data(d) => &d.id,
        }
    }

    pub fn timestamp(&self) -> i64 {
        match self {
            Transaction::Register(r) => r.timestamp,
            Transaction::Data(d) => d.timestamp,
        }
    }

    pub fn ads(&self) -> Option<ContentAddress> {
        match self {
            Transaction::Data(d) => Some(d.ads),
            Transaction::Register(_) => None,
        }
    }

    fn write(&self, w: &mut Writer) {
        let p = params();
        match self {
            Transaction::Register(r) => {
                w.u8(0).str(&r.id).i64(r.timestamp).bytes(&r.issuance.to_bytes(&p));
            }
            Transaction::Data(d) => {
                w.u8(1).str(&d.id).i64(d.timestamp).u8(d.action.code()).raw(&d.ads.0);
                w.u32(d.acl.len() as u32);
                for e in &d.acl {
                    w.str(&e.identity).u8(matches!(e.permission, Permission::Write) as u8);
                }
                w.bytes(&d.payload_pointer)
                    .f64(d.reputation.level)
                    .f64(d.reputation.detection_level)
                    .bool(d.reputation.status);
            }
        }
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let p = params();
        match r.u8()? {
            0 => {
                let id = r.str()?.to_string();
                let timestamp = r.i64()?;
                let issuance = MultiSignature::from_bytes(&p, r.bytes()?)?;
                Ok(Transaction::Register(RegistrationTx { id, timestamp, issuance }))
            }
            1 => {
                let id = r.str()?.to_string();
                let timestamp = r.i64()?;
                let action = Action::from_code(r.u8()?)?;
                let ads = ContentAddress(r.array()?);
                let n = r.u32()? as usize;
                let mut acl = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let identity = r.str()?.to_string();
                    let permission = match r.u8()? {
                        0 => Permission::Read,
                        1 => Permission::Write,
                        b => return Err(LedgerError::Rejected(format!("permission byte {b}"))),
                    };
                    acl.push(AclEntry { identity, permission });
                }
                let payload_pointer = r.bytes()?.to_vec();
                let reputation =
                    ReputationSnapshot { level: r.f64()?, detection_level: r.f64()?, status: r.bool()? };
                Ok(Transaction::Data(LedgerTransaction {
                    id,
                    timestamp,
                    action,
                    ads,
                    acl,
                    payload_pointer,
                    reputation,
                }))
            }
            k => Err(LedgerError::Rejected(format!("unknown transaction kind {k}"))),
        }
    }

    /// Canonical bytes covered by the device signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("fdd/tx");
        self.write(&mut w);
        w.finish()
    }
}

/// A transaction with the sender's claimed public key and signature.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedTx {
    pub tx: Transaction,
    pub pk: PublicKey<G>,
    pub signature: Signature<G>,
}

impl SignedTx {
    pub fn sign(tx: Transaction, keys: &DeviceKeyPair<G>, rng: &mut dyn RngCore) -> Self {
        let signature = sign_tx(&params(), keys, &tx.signing_bytes(), rng);
        Self { tx, pk: keys.pk.clone(), signature }
    }

    pub fn write(&self, w: &mut Writer) {
        let p = params();
        self.tx.write(w);
        w.bytes(&self.pk.to_bytes(&p)).bytes(&self.signature.to_bytes(&p));
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let p = params();
        let tx = Transaction::read(r)?;
        let pk = PublicKey::from_bytes(&p, r.bytes()?)?;
        let signature = Signature::from_bytes(&p, r.bytes()?)?;
        Ok(Self { tx, pk, signature })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    pub fn digest(&self) -> Digest {
        Sha256::digest(self.to_bytes()).into()
    }
}
