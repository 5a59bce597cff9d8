use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use sha2::{Digest, Sha256};

use super::keys::DeviceKeyPair;
use super::{CryptoError, Group, SystemParams};
use crate::codec::{tagged, untagged};

fn derive_key<G: Group>(
    params: &SystemParams<G>,
    shared: &G::Element,
    ephemeral: &G::Element,
    recipient: &G::Element,
) -> Key {
    let g = &params.group;
    let mut h = Sha256::new();
    h.update(b"fdd/pointer");
    for part in [shared, ephemeral, recipient] {
        h.update(g.encode_element(part));
    }
    Key::from(<[u8; 32]>::from(h.finalize()))
}

/// Encrypts `plaintext` to the holder of combined public key `recipient`.
/// Output: `tag ‖ len ‖ (E ‖ nonce ‖ ciphertext)`.
pub fn encrypt_pointer<G: Group>(
    params: &SystemParams<G>,
    recipient: &G::Element,
    plaintext: &[u8],
    rng: &mut dyn RngCore,
) -> Vec<u8> {
    let g = &params.group;
    let eph = g.random_scalar(rng);
    let ephemeral = g.mul_gen(&eph);
    let key = derive_key(params, &g.mul(recipient, &eph), &ephemeral, recipient);
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let e_bytes = g.encode_element(&ephemeral);
    let ct = ChaCha20Poly1305::new(&key)
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: &e_bytes })
        .expect("in-memory encryption");
    let mut body = e_bytes;
    body.extend_from_slice(&nonce);
    body.extend(ct);
    tagged(G::TAG, &body)
}

pub fn decrypt_pointer<G: Group>(
    params: &SystemParams<G>,
    keys: &DeviceKeyPair<G>,
    pointer: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let g = &params.group;
    let body = untagged(G::TAG, pointer)?;
    let el = g.element_len();
    if body.len() < el + 12 + 16 {
        return Err(CryptoError::Encoding("pointer too short".into()));
    }
    let ephemeral = g.decode_element(&body[..el]).ok_or_else(|| CryptoError::Encoding("ephemeral key".into()))?;
    let sk = g.scalar_add(&keys.sk.ps, &keys.sk.x);
    let key = derive_key(params, &g.mul(&ephemeral, &sk), &ephemeral, &keys.combined);
    ChaCha20Poly1305::new(&key)
        .decrypt(Nonce::from_slice(&body[el..el + 12]), Payload { msg: &body[el + 12..], aad: &body[..el] })
        .map_err(|_| CryptoError::Decryption)
}
