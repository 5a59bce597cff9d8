//! Certificateless device keys issued by a set of KGD cosigners.
//!
//! The master secret is the sum of the cosigners' shares. A device commits to
//! its own secret `X`, the cosigners jointly issue `PS = r + s*H1(ID ‖ R)` in
//! two rounds and sign the issuance, and the device signs with `X + PS`.
//! Everything is generic over [`Group`]; [`ToyGroup`] backs arithmetic oracle
//! tests and [`Secp256k1`] is the standard instance.

mod group;
mod kgd;
mod keys;
mod pointer;
mod secp;
mod toy;

pub use group::{Group, SecurityLevel, SystemParams, Transcript};
pub use kgd::{
    cosign_issuance, gen_partial_secret, identity_hash, verify_issuance, verify_multisig, Cosigner,
    CosignerKey, IssuanceChallenge, IssuanceCommit, IssuanceMessage, IssuanceResponse, KgdPublic,
    MultiSignature, PartialSecret, RegistrationRequest, SignerSet, Verification,
};
pub use keys::{
    derive_keys, gen_device_secret, schnorr_sign, schnorr_verify, sign_tx, verify_tx_sig,
    verify_with_combined, DeviceKeyPair,
    DeviceSecret, PublicKey, SecretKey, Signature,
};
pub use pointer::{decrypt_pointer, encrypt_pointer};
pub use secp::Secp256k1;
pub use toy::{is_prime, mul_mod, pow_mod, ToyGroup};

use crate::codec::CodecError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported security level: {0}")]
    Unsupported(String),
    #[error("issuance failed: {0}")]
    IssuanceFailed(String),
    #[error("issuance not verified (result {0})")]
    NotVerified(Verification),
    #[error("partial secret issued to `{found}`, expected `{expected}`")]
    IdentityMismatch { expected: String, found: String },
    #[error("malformed encoding: {0}")]
    Encoding(String),
    #[error("authenticated decryption failed")]
    Decryption,
}

impl From<CodecError> for CryptoError {
    fn from(e: CodecError) -> Self {
        CryptoError::Encoding(e.to_string())
    }
}

/// Toy parameters from `seed`.
pub fn setup_toy(seed: u64) -> SystemParams<ToyGroup> {
    SystemParams::new(ToyGroup::generate(seed))
}

pub fn setup_standard() -> SystemParams<Secp256k1> {
    SystemParams::new(Secp256k1)
}

/// Parses a security level name: `toy` or `standard`.
pub fn parse_level(name: &str) -> Result<SecurityLevel, CryptoError> {
    match name {
        "toy" | "64" => Ok(SecurityLevel::Toy),
        "standard" | "256" => Ok(SecurityLevel::Standard),
        other => Err(CryptoError::Unsupported(other.to_string())),
    }
}

/// Runs the full registration for one device against `cosigners`: secret,
/// two-round issuance by every cosigner, verification, key derivation.
pub fn register_device<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    cosigners: &mut [Cosigner<G>],
    id: &str,
    rng: &mut dyn rand::RngCore,
) -> Result<(DeviceSecret<G>, PartialSecret<G>, DeviceKeyPair<G>), CryptoError> {
    let secret = DeviceSecret::generate(params, id, rng);
    let mut participants: Vec<&mut Cosigner<G>> = cosigners.iter_mut().collect();
    let partial = gen_partial_secret(params, kgd, &mut participants, &secret.request(), rng)?;
    let keys = derive_keys(params, kgd, &secret, &partial)?;
    Ok((secret, partial, keys))
}

#[cfg(test)]
mod tests;
