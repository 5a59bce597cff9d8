use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{CryptoError, Group, SystemParams, Transcript};
use crate::codec::{Reader, Writer};

/// Outcome of a multisignature check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verification {
    Accept,
    Reject,
    /// The signer bitmap names a cosigner that does not exist.
    Indeterminate,
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verification::Accept => "1",
            Verification::Reject => "0",
            Verification::Indeterminate => "⊥",
        })
    }
}

/// Bitmap of cosigner indices, least significant bit first.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignerSet(#[serde(with = "crate::codec::hex_bytes")] Vec<u8>);

impl SignerSet {
    pub fn empty(n: usize) -> Self {
        Self(vec![0; n.div_ceil(8)])
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn full(n: usize) -> Self {
        Self::from_indices(n, 0..n)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn insert(&mut self, i: usize) {
        if self.0.len() <= i / 8 {
            self.0.resize(i / 8 + 1, 0);
        }
        self.0[i / 8] |= 1 << (i % 8);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.get(i / 8).is_some_and(|b| b & (1 << (i % 8)) != 0)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.0.len() * 8).filter(|&i| self.contains(i)).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Whether every set bit names one of `n` cosigners.
    pub fn within(&self, n: usize) -> bool {
        self.indices().last().is_none_or(|&i| i < n)
    }
}

/// One KGD peer's additive share of the master secret.
#[derive(Clone)]
pub struct CosignerKey<G: Group> {
    pub index: usize,
    secret: G::Scalar,
    pub public: G::Element,
}

impl<G: Group> fmt::Debug for CosignerKey<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CosignerKey")
            .field("index", &self.index)
            .field("secret", &"<redacted>")
            .field("public", &self.public)
            .finish()
    }
}

impl<G: Group> CosignerKey<G> {
    pub fn generate(params: &SystemParams<G>, index: usize, rng: &mut dyn RngCore) -> Self {
        Self::from_secret(params, index, params.group.random_scalar(rng))
    }

    pub fn from_secret(params: &SystemParams<G>, index: usize, secret: G::Scalar) -> Self {
        Self { index, secret, public: params.group.mul_gen(&secret) }
    }

    pub fn secret(&self) -> &G::Scalar {
        &self.secret
    }
}

/// Published KGD configuration: every cosigner's public share and the
/// number of cosigners an issuance needs.
#[derive(Debug, Clone, PartialEq)]
pub struct KgdPublic<G: Group> {
    pub publics: Vec<G::Element>,
    pub quorum: usize,
}

impl<G: Group> KgdPublic<G> {
    pub fn new(publics: Vec<G::Element>, quorum: usize) -> Result<Self, CryptoError> {
        if publics.is_empty() || quorum == 0 || quorum > publics.len() {
            return Err(CryptoError::InvalidParams(format!(
                "quorum {quorum} of {} cosigners",
                publics.len()
            )));
        }
        Ok(Self { publics, quorum })
    }

    /// n-of-n over `keys`.
    pub fn from_keys(keys: &[CosignerKey<G>]) -> Result<Self, CryptoError> {
        Self::new(keys.iter().map(|k| k.public).collect(), keys.len())
    }

    pub fn n(&self) -> usize {
        self.publics.len()
    }

    /// Sum of the public shares named by `signers`, or `None` if the set
    /// names an unknown cosigner.
    pub fn aggregate(&self, params: &SystemParams<G>, signers: &SignerSet) -> Option<G::Element> {
        signers
            .within(self.n())
            .then(|| params.group.sum(signers.indices().into_iter().map(|i| self.publics[i])))
    }
}

/// Aggregated Schnorr signature by the cosigners in `signers`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSignature<G: Group> {
    pub commitment: G::Element,
    pub response: G::Scalar,
    pub signers: SignerSet,
}

impl<G: Group> MultiSignature<G> {
    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let g = &params.group;
        let mut w = Writer::new();
        w.raw(&G::TAG)
            .bytes(&g.encode_element(&self.commitment))
            .bytes(&g.encode_scalar(&self.response))
            .bytes(self.signers.as_bytes());
        w.finish()
    }

    pub fn read(params: &SystemParams<G>, r: &mut Reader<'_>) -> Result<Self, CryptoError> {
        let g = &params.group;
        if r.array::<4>()? != G::TAG {
            return Err(CryptoError::Encoding("multisignature scheme tag".into()));
        }
        let commitment = g.decode_element(r.bytes()?).ok_or_else(|| CryptoError::Encoding("nonce".into()))?;
        let response = g.decode_scalar(r.bytes()?).ok_or_else(|| CryptoError::Encoding("response".into()))?;
        let signers = SignerSet::from_bytes(r.bytes()?.to_vec());
        Ok(Self { commitment, response, signers })
    }

    pub fn from_bytes(params: &SystemParams<G>, bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let sig = Self::read(params, &mut r)?;
        r.finish()?;
        Ok(sig)
    }
}

fn multisig_challenge<G: Group>(
    params: &SystemParams<G>,
    nonce: &G::Element,
    aggregate: &G::Element,
    signers: &SignerSet,
    msg: &[u8],
) -> G::Scalar {
    let g = &params.group;
    Transcript::new("fdd/multisig")
        .append(&g.encode_element(nonce))
        .append(&g.encode_element(aggregate))
        .append(signers.as_bytes())
        .append(msg)
        .challenge(g)
}

/// Checks `sig` over `msg` against the cosigner publics and quorum.
pub fn verify_multisig<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    msg: &[u8],
    sig: &MultiSignature<G>,
) -> Verification {
    let Some(aggregate) = kgd.aggregate(params, &sig.signers) else {
        return Verification::Indeterminate;
    };
    if sig.signers.count() < kgd.quorum {
        return Verification::Reject;
    }
    let g = &params.group;
    let e = multisig_challenge(params, &sig.commitment, &aggregate, &sig.signers, msg);
    let lhs = g.mul_gen(&sig.response);
    let rhs = g.add(&sig.commitment, &g.mul(&aggregate, &e));
    if lhs == rhs {
        Verification::Accept
    } else {
        Verification::Reject
    }
}

/// A device asking the KGD for a partial secret.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRequest<G: Group> {
    pub id: String,
    pub commitment: G::Element,
}

/// Round one: a cosigner's share of the key nonce `R` and of the
/// multisignature nonce.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuanceCommit<G: Group> {
    pub index: usize,
    pub r_share: G::Element,
    pub nonce: G::Element,
}

/// Aggregated round-one result, broadcast back to the participating cosigners.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuanceChallenge<G: Group> {
    pub message: IssuanceMessage<G>,
    pub nonce: G::Element,
}

/// Round two: a cosigner's partial-secret share and signature response.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuanceResponse<G: Group> {
    pub index: usize,
    pub ps_share: G::Scalar,
    pub z_share: G::Scalar,
}

/// What the cosigners sign: the identity, the device commitment, the
/// aggregated key nonce and the signer set. The partial-secret commitment
/// `g^PS = R + h*P` follows from these fields.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuanceMessage<G: Group> {
    pub id: String,
    pub commitment: G::Element,
    pub r_point: G::Element,
    pub signers: SignerSet,
}

impl<G: Group> IssuanceMessage<G> {
    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let g = &params.group;
        let mut w = Writer::new();
        w.str("fdd/issuance")
            .str(&self.id)
            .bytes(&g.encode_element(&self.commitment))
            .bytes(&g.encode_element(&self.r_point))
            .bytes(self.signers.as_bytes());
        w.finish()
    }
}

/// `H1(ID ‖ R)`.
pub fn identity_hash<G: Group>(params: &SystemParams<G>, id: &str, r_point: &G::Element) -> G::Scalar {
    Transcript::new("fdd/h1")
        .append(id.as_bytes())
        .append(&params.group.encode_element(r_point))
        .challenge(&params.group)
}

struct Session<G: Group> {
    request: RegistrationRequest<G>,
    r: G::Scalar,
    k: G::Scalar,
    commit: IssuanceCommit<G>,
}

/// One KGD peer running the two-round issuance protocol. Each pending
/// registration keeps its own nonces until round two consumes them.
pub struct Cosigner<G: Group> {
    params: SystemParams<G>,
    key: CosignerKey<G>,
    sessions: BTreeMap<String, Session<G>>,
}

impl<G: Group> Cosigner<G> {
    pub fn new(params: SystemParams<G>, key: CosignerKey<G>) -> Self {
        Self { params, key, sessions: BTreeMap::new() }
    }

    pub fn key(&self) -> &CosignerKey<G> {
        &self.key
    }

    pub fn round1(&mut self, request: &RegistrationRequest<G>, rng: &mut dyn RngCore) -> IssuanceCommit<G> {
        let g = &self.params.group;
        let r = g.random_scalar(rng);
        let k = g.random_scalar(rng);
        let commit = IssuanceCommit { index: self.key.index, r_share: g.mul_gen(&r), nonce: g.mul_gen(&k) };
        self.sessions.insert(
            request.id.clone(),
            Session { request: request.clone(), r, k, commit: commit.clone() },
        );
        commit
    }

    pub fn round2(
        &mut self,
        kgd: &KgdPublic<G>,
        challenge: &IssuanceChallenge<G>,
    ) -> Result<IssuanceResponse<G>, CryptoError> {
        let msg = &challenge.message;
        let session = self
            .sessions
            .remove(&msg.id)
            .ok_or_else(|| CryptoError::IssuanceFailed(format!("no pending session for `{}`", msg.id)))?;
        if session.request.commitment != msg.commitment || !msg.signers.contains(self.key.index) {
            return Err(CryptoError::IssuanceFailed("challenge does not match round one".into()));
        }
        let g = &self.params.group;
        let aggregate = kgd
            .aggregate(&self.params, &msg.signers)
            .ok_or_else(|| CryptoError::IssuanceFailed("unknown cosigner in signer set".into()))?;
        let h = identity_hash(&self.params, &msg.id, &msg.r_point);
        let e = multisig_challenge(
            &self.params,
            &challenge.nonce,
            &aggregate,
            &msg.signers,
            &msg.to_bytes(&self.params),
        );
        debug_assert!(session.commit.index == self.key.index);
        Ok(IssuanceResponse {
            index: self.key.index,
            ps_share: g.scalar_add(&session.r, &g.scalar_mul(&self.key.secret, &h)),
            z_share: g.scalar_add(&session.k, &g.scalar_mul(&self.key.secret, &e)),
        })
    }
}

/// Issued partial secret with the cosigners' signature over the issuance
/// message.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSecret<G: Group> {
    pub id: String,
    pub ps: G::Scalar,
    pub r_point: G::Element,
    pub signature: MultiSignature<G>,
}

impl<G: Group> PartialSecret<G> {
    pub fn message(&self, commitment: G::Element) -> IssuanceMessage<G> {
        IssuanceMessage {
            id: self.id.clone(),
            commitment,
            r_point: self.r_point,
            signers: self.signature.signers.clone(),
        }
    }
}

/// Runs both rounds among `participants` without checking the quorum, then
/// checks every returned share. Used directly by tests that need a
/// sub-quorum signature.
pub fn cosign_issuance<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    participants: &mut [&mut Cosigner<G>],
    request: &RegistrationRequest<G>,
    rng: &mut dyn RngCore,
) -> Result<PartialSecret<G>, CryptoError> {
    let g = &params.group;
    if participants.is_empty() {
        return Err(CryptoError::IssuanceFailed("no cosigners available".into()));
    }
    let commits: Vec<_> = participants.iter_mut().map(|c| c.round1(request, rng)).collect();
    let signers = SignerSet::from_indices(kgd.n(), commits.iter().map(|c| c.index));
    let message = IssuanceMessage {
        id: request.id.clone(),
        commitment: request.commitment,
        r_point: g.sum(commits.iter().map(|c| c.r_share)),
        signers,
    };
    let challenge = IssuanceChallenge { nonce: g.sum(commits.iter().map(|c| c.nonce)), message };
    let responses = participants
        .iter_mut()
        .map(|c| c.round2(kgd, &challenge))
        .collect::<Result<Vec<_>, _>>()?;

    let h = identity_hash(params, &request.id, &challenge.message.r_point);
    for (resp, commit) in responses.iter().zip(&commits) {
        let public = kgd
            .publics
            .get(resp.index)
            .ok_or_else(|| CryptoError::IssuanceFailed(format!("unknown cosigner {}", resp.index)))?;
        if g.mul_gen(&resp.ps_share) != g.add(&commit.r_share, &g.mul(public, &h)) {
            return Err(CryptoError::IssuanceFailed(format!("cosigner {} sent a bad share", resp.index)));
        }
    }
    Ok(PartialSecret {
        id: request.id.clone(),
        ps: g.scalar_sum(responses.iter().map(|r| r.ps_share)),
        r_point: challenge.message.r_point,
        signature: MultiSignature {
            commitment: challenge.nonce,
            response: g.scalar_sum(responses.iter().map(|r| r.z_share)),
            signers: challenge.message.signers,
        },
    })
}

/// Issues a partial secret for `request`, failing when fewer than the quorum
/// of cosigners take part.
pub fn gen_partial_secret<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    participants: &mut [&mut Cosigner<G>],
    request: &RegistrationRequest<G>,
    rng: &mut dyn RngCore,
) -> Result<PartialSecret<G>, CryptoError> {
    if participants.len() < kgd.quorum {
        return Err(CryptoError::IssuanceFailed(format!(
            "{} of {} required cosigners available",
            participants.len(),
            kgd.quorum
        )));
    }
    let partial = cosign_issuance(params, kgd, participants, request, rng)?;
    match verify_issuance(params, kgd, &partial.message(request.commitment), &partial.signature) {
        Verification::Accept => Ok(partial),
        v => Err(CryptoError::IssuanceFailed(format!("issuance signature check returned {v}"))),
    }
}

pub fn verify_issuance<G: Group>(
    params: &SystemParams<G>,
    kgd: &KgdPublic<G>,
    msg: &IssuanceMessage<G>,
    sig: &MultiSignature<G>,
) -> Verification {
    if msg.signers != sig.signers {
        return if sig.signers.within(kgd.n()) { Verification::Reject } else { Verification::Indeterminate };
    }
    verify_multisig(params, kgd, &msg.to_bytes(params), sig)
}
