//! Permissioned ledger shared by the roadside units.
//!
//! Devices register with a KGD-issued certificateless key and then submit
//! signed store, update and access transactions. Peers order them with PBFT
//! into hash-linked blocks carrying a quorum certificate; the world state is
//! a pure function of the committed chain.

mod block;
mod chain;
mod genesis;
mod pbft;
mod state;
mod tx;

pub use block::{commit_message, merkle_root, sign_commit, Block, BlockHeader, QuorumCertificate, TxPointer};
pub use chain::{export_chain, import_chain, replay_world_state, verify_chain, Chain, ChainReport};
pub use genesis::{Genesis, GenesisConfig, LedgerRules};
pub use pbft::{
    Behavior, ClientStats, Consortium, ConsortiumConfig, PeerStats, Submission, SubmissionResult,
};
pub use state::{AccessDecision, AdsEntry, DeviceEntry, TxOutcome, VerificationFlags, WorldState};
pub use tx::{
    acl_permits, create_tx, AclEntry, Action, LedgerTransaction, Permission, RegistrationTx,
    ReputationSnapshot, SignedTx, Transaction,
};

use crate::codec::CodecError;
use crate::crypto::{CryptoError, Secp256k1, SystemParams};

pub type G = Secp256k1;
pub type Digest = [u8; 32];

pub fn params() -> SystemParams<G> {
    SystemParams::new(Secp256k1)
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error("submission refused: {0}")]
    SubmissionRefused(String),
    #[error("submission timed out after {attempts} attempts")]
    SubmissionTimeout { attempts: u32 },
    #[error("no progress: {0}")]
    LivenessLoss(String),
    #[error("invalid ledger configuration: {0}")]
    Config(String),
    #[error("integrity violation at height {height}: {reason}")]
    Integrity { height: u64, reason: String },
    #[error("malformed encoding: {0}")]
    Encoding(String),
    #[error(transparent)]
    Crypto(CryptoError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CodecError> for LedgerError {
    fn from(e: CodecError) -> Self {
        LedgerError::Encoding(e.to_string())
    }
}

impl From<CryptoError> for LedgerError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::Encoding(m) => LedgerError::Encoding(m),
            e => LedgerError::Crypto(e),
        }
    }
}
