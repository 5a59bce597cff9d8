use std::fmt::Debug;

use rand::RngCore;
use sha2::{Digest, Sha256};

/// Prime-order cyclic group written additively: `add` is the group
/// operation and `mul` is repeated application.
pub trait Group: Clone + Debug + PartialEq + Send + Sync + 'static {
    type Scalar: Copy + Debug + PartialEq + Eq + Send + Sync;
    type Element: Copy + Debug + PartialEq + Eq + Send + Sync;

    /// Four-byte scheme tag written in front of every encoding.
    const TAG: [u8; 4];

    fn name(&self) -> String;
    fn order_bits(&self) -> u32;
    fn scalar_len(&self) -> usize;
    fn element_len(&self) -> usize;

    fn generator(&self) -> Self::Element;
    fn identity(&self) -> Self::Element;
    fn add(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn mul(&self, e: &Self::Element, k: &Self::Scalar) -> Self::Element;
    fn mul_gen(&self, k: &Self::Scalar) -> Self::Element {
        self.mul(&self.generator(), k)
    }

    fn scalar_zero(&self) -> Self::Scalar;
    fn scalar_add(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_mul(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    /// Reduces a 64-byte uniform string into a scalar.
    fn scalar_from_wide(&self, bytes: &[u8; 64]) -> Self::Scalar;

    fn encode_scalar(&self, s: &Self::Scalar) -> Vec<u8>;
    /// Rejects non-canonical encodings.
    fn decode_scalar(&self, bytes: &[u8]) -> Option<Self::Scalar>;
    fn encode_element(&self, e: &Self::Element) -> Vec<u8>;
    /// Rejects non-canonical encodings, the identity and non-members.
    fn decode_element(&self, bytes: &[u8]) -> Option<Self::Element>;

    /// Uniform non-zero scalar.
    fn random_scalar(&self, rng: &mut dyn RngCore) -> Self::Scalar {
        loop {
            let mut wide = [0u8; 64];
            rng.fill_bytes(&mut wide);
            let s = self.scalar_from_wide(&wide);
            if s != self.scalar_zero() {
                return s;
            }
        }
    }

    fn sum(&self, items: impl IntoIterator<Item = Self::Element>) -> Self::Element {
        items.into_iter().fold(self.identity(), |acc, e| self.add(&acc, &e))
    }

    fn scalar_sum(&self, items: impl IntoIterator<Item = Self::Scalar>) -> Self::Scalar {
        items.into_iter().fold(self.scalar_zero(), |acc, s| self.scalar_add(&acc, &s))
    }
}

/// Domain-separated hash of length-prefixed parts onto the scalar field.
#[derive(Clone)]
pub struct Transcript {
    hasher: Sha256,
}

impl Transcript {
    pub fn new(domain: &str) -> Self {
        let mut t = Self { hasher: Sha256::new() };
        t.append(domain.as_bytes());
        t
    }

    pub fn append(&mut self, part: &[u8]) -> &mut Self {
        self.hasher.update((part.len() as u32).to_le_bytes());
        self.hasher.update(part);
        self
    }

    pub fn digest(&self) -> [u8; 32] {
        self.hasher.clone().finalize().into()
    }

    pub fn challenge<G: Group>(&self, group: &G) -> G::Scalar {
        let mut wide = [0u8; 64];
        for (i, half) in wide.chunks_mut(32).enumerate() {
            let mut h = self.hasher.clone();
            h.update([i as u8]);
            half.copy_from_slice(&h.finalize());
        }
        group.scalar_from_wide(&wide)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecurityLevel {
    /// 64-bit safe-prime group, for oracle-checkable tests only.
    Toy,
    /// secp256k1.
    Standard,
}

/// Published group parameters shared by every participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams<G: Group> {
    pub group: G,
    pub hash: &'static str,
    pub lambda: u32,
}

impl<G: Group> SystemParams<G> {
    pub fn new(group: G) -> Self {
        let lambda = group.order_bits();
        Self { group, hash: "SHA-256", lambda }
    }
}
