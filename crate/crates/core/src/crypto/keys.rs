use std::fmt;

use rand::RngCore;

use super::kgd::{identity_hash, verify_issuance, KgdPublic, PartialSecret, RegistrationRequest, SignerSet, Verification};
use super::{CryptoError, Group, SystemParams, Transcript};
use crate::codec::{tagged, untagged, Reader, Writer};

/// A device's self-chosen secret `X` and its commitment `U = X*g`.
#[derive(Clone)]
pub struct DeviceSecret<G: Group> {
    pub id: String,
    x: G::Scalar,
    pub commitment: G::Element,
}

impl<G: Group> fmt::Debug for DeviceSecret<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceSecret")
            .field("id", &self.id)
            .field("x", &"<redacted>")
            .field("commitment", &self.commitment)
            .finish()
    }
}

impl<G: Group> DeviceSecret<G> {
    pub fn generate(params: &SystemParams<G>, id: &str, rng: &mut dyn RngCore) -> Self {
        Self::from_scalar(params, id, params.group.random_scalar(rng))
    }

    pub fn from_scalar(params: &SystemParams<G>, id: &str, x: G::Scalar) -> Self {
        Self { id: id.to_string(), x, commitment: params.group.mul_gen(&x) }
    }

    pub fn x(&self) -> &G::Scalar {
        &self.x
    }

    pub fn request(&self) -> RegistrationRequest<G> {
        RegistrationRequest { id: self.id.clone(), commitment: self.commitment }
    }
}

pub fn gen_device_secret<G: Group>(params: &SystemParams<G>, id: &str, rng: &mut dyn RngCore) -> DeviceSecret<G> {
    DeviceSecret::generate(params, id, rng)
}

/// `Pk = (U, R)` plus the cosigner set whose shares back `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicKey<G: Group> {
    pub commitment: G::Element,
    pub r_point: G::Element,
    pub signers: SignerSet,
}

impl<G: Group> PublicKey<G> {
    /// `Q = U + R + H1(ID ‖ R)*P`, the point that verifies signatures by
    /// the holder of `(PS, X)`.
    pub fn combined(
        &self,
        params: &SystemParams<G>,
        kgd: &KgdPublic<G>,
        id: &str,
    ) -> Result<G::Element, CryptoError> {
        let g = &params.group;
        let master = kgd
            .aggregate(params, &self.signers)
            .ok_or_else(|| CryptoError::Encoding("public key names an unknown cosigner".into()))?;
        let h = identity_hash(params, id, &self.r_point);
        Ok(g.add(&g.add(&self.commitment, &self.r_point), &g.mul(&master, &h)))
    }

    pub fn write(&self, params: &SystemParams<G>, w: &mut Writer) {
        let g = &params.group;
        w.bytes(&g.encode_element(&self.commitment))
            .bytes(&g.encode_element(&self.r_point))
            .bytes(self.signers.as_bytes());
    }

    pub fn read(params: &SystemParams<G>, r: &mut Reader<'_>) -> Result<Self, CryptoError> {
        let g = &params.group;
        let commitment = g.decode_element(r.bytes()?).ok_or_else(|| CryptoError::Encoding("U".into()))?;
        let r_point = g.decode_element(r.bytes()?).ok_or_else(|| CryptoError::Encoding("R".into()))?;
        let signers = SignerSet::from_bytes(r.bytes()?.to_vec());
        Ok(Self { commitment, r_point, signers })
    }

    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(params, &mut w);
        tagged(G::TAG, &w.finish())
    }

    pub fn from_bytes(params: &SystemParams<G>, bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(untagged(G::TAG, bytes)?);
        let pk = Self::read(params, &mut r)?;
        r.finish()?;
        Ok(pk)
    }
}

/// `Sk = (PS, X)`.
#[derive(Clone, PartialEq)]
pub struct SecretKey<G: Group> {
    pub ps: G::Scalar,
    pub x: G::Scalar,
}

impl<G: Group> fmt::Debug for SecretKey<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

impl<G: Group> SecretKey<G> {
    fn combined(&self, params: &SystemParams<G>) -> G::Scalar {
        params.group.scalar_add(&self.ps, &self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceKeyPair<G: Group> {
    pub id: String,
    pub pk: PublicKey<G>,
    pub sk: SecretKey<G>,
    /// `Q`, cached.
    pub combined: G::Element,
}

/// Builds the device key pair once the issuance signature checks out and
/// the partial secret matches its public commitment.
pub fn derive_keys<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    secret: &DeviceSecret<G>,
    partial: &PartialSecret<G>,
) -> Result<DeviceKeyPair<G>, CryptoError> {
    if partial.id != secret.id {
        return Err(CryptoError::IdentityMismatch { expected: secret.id.clone(), found: partial.id.clone() });
    }
    match verify_issuance(params, kgd, &partial.message(secret.commitment), &partial.signature) {
        Verification::Accept => {}
        v => return Err(CryptoError::NotVerified(v)),
    }
    let pk = PublicKey {
        commitment: secret.commitment,
        r_point: partial.r_point,
        signers: partial.signature.signers.clone(),
    };
    let g = &params.group;
    let master = kgd.aggregate(params, &pk.signers).expect("issuance verified");
    let h = identity_hash(params, &secret.id, &partial.r_point);
    if g.mul_gen(&partial.ps) != g.add(&partial.r_point, &g.mul(&master, &h)) {
        return Err(CryptoError::IssuanceFailed("partial secret does not match its commitment".into()));
    }
    let combined = pk.combined(params, kgd, &secret.id)?;
    Ok(DeviceKeyPair { id: secret.id.clone(), pk, sk: SecretKey { ps: partial.ps, x: secret.x }, combined })
}

/// Schnorr signature `(K, z)` with `z*g = K + e*Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature<G: Group> {
    pub nonce: G::Element,
    pub response: G::Scalar,
}

impl<G: Group> Signature<G> {
    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let g = &params.group;
        let mut body = g.encode_element(&self.nonce);
        body.extend(g.encode_scalar(&self.response));
        tagged(G::TAG, &body)
    }

    pub fn from_bytes(params: &SystemParams<G>, bytes: &[u8]) -> Result<Self, CryptoError> {
        let g = &params.group;
        let body = untagged(G::TAG, bytes)?;
        if body.len() != g.element_len() + g.scalar_len() {
            return Err(CryptoError::Encoding("signature length".into()));
        }
        let (k, z) = body.split_at(g.element_len());
        Ok(Self {
            nonce: g.decode_element(k).ok_or_else(|| CryptoError::Encoding("signature nonce".into()))?,
            response: g.decode_scalar(z).ok_or_else(|| CryptoError::Encoding("signature response".into()))?,
        })
    }
}

fn signing_challenge<G: Group>(
    params: &SystemParams<G>,
    nonce: &G::Element,
    msg: &[u8],
    id: &str,
    pk: &PublicKey<G>,
) -> G::Scalar {
    let mut w = Writer::new();
    pk.write(params, &mut w);
    Transcript::new("fdd/h2")
        .append(&params.group.encode_element(nonce))
        .append(msg)
        .append(id.as_bytes())
        .append(&w.finish())
        .challenge(&params.group)
}

pub fn sign_tx<G: Group>(
    params: &SystemParams<G>,
    keys: &DeviceKeyPair<G>,
    msg: &[u8],
    rng: &mut dyn RngCore,
) -> Signature<G> {
    let g = &params.group;
    let k = g.random_scalar(rng);
    let nonce = g.mul_gen(&k);
    let e = signing_challenge(params, &nonce, msg, &keys.id, &keys.pk);
    Signature { nonce, response: g.scalar_add(&k, &g.scalar_mul(&e, &keys.sk.combined(params))) }
}

/// Checks `sig` against the public key bound to `id`. `q` is the combined
/// key from [`PublicKey::combined`].
pub fn verify_with_combined<G: Group>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    q: &G::Element,
    id: &str,
    msg: &[u8],
    sig: &Signature<G>,
) -> bool {
    let g = &params.group;
    let e = signing_challenge(params, &sig.nonce, msg, id, pk);
    g.mul_gen(&sig.response) == g.add(&sig.nonce, &g.mul(q, &e))
}

/// Decodes and checks an encoded signature. Malformed encodings are
/// rejected, never a panic.
pub fn verify_tx_sig<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    pk: &PublicKey<G>,
    id: &str,
    msg: &[u8],
    sig: &[u8],
) -> bool {
    let Ok(sig) = Signature::from_bytes(params, sig) else {
        return false;
    };
    let Ok(q) = pk.combined(params, kgd, id) else {
        return false;
    };
    verify_with_combined(params, pk, &q, id, msg, &sig)
}

/// Plain Schnorr signature by the holder of `secret`, with the nonce derived
/// from the secret and message.
pub fn schnorr_sign<G: Group>(params: &SystemParams<G>, secret: &G::Scalar, msg: &[u8]) -> Signature<G> {
    let g = &params.group;
    let public = g.mul_gen(secret);
    let k = Transcript::new("fdd/schnorr-nonce").append(&g.encode_scalar(secret)).append(msg).challenge(g);
    let nonce = g.mul_gen(&k);
    let e = Transcript::new("fdd/schnorr")
        .append(&g.encode_element(&nonce))
        .append(&g.encode_element(&public))
        .append(msg)
        .challenge(g);
    Signature { nonce, response: g.scalar_add(&k, &g.scalar_mul(&e, secret)) }
}

pub fn schnorr_verify<G: Group>(
    params: &SystemParams<G>,
    public: &G::Element,
    msg: &[u8],
    sig: &Signature<G>,
) -> bool {
    let g = &params.group;
    let e = Transcript::new("fdd/schnorr")
        .append(&g.encode_element(&sig.nonce))
        .append(&g.encode_element(public))
        .append(msg)
        .challenge(g);
    g.mul_gen(&sig.response) == g.add(&sig.nonce, &g.mul(public, &e))
}
