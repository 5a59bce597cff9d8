use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{CryptoError, Group};

/// Order-`q` subgroup of `Z_p^*` with 64-bit modulus. Not secure; it exists
/// so every operation can be checked against plain modular arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyGroup {
    p: u64,
    q: u64,
    g: u64,
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

impl ToyGroup {
    /// Explicit parameters; `g` must generate the order-`q` subgroup.
    pub fn new(p: u64, q: u64, g: u64) -> Result<Self, CryptoError> {
        let bad = |why: &str| Err(CryptoError::InvalidParams(why.to_string()));
        if !is_prime(p) || !is_prime(q) {
            return bad("p and q must be prime");
        }
        if (p - 1) % q != 0 {
            return bad("q must divide p - 1");
        }
        if g <= 1 || g >= p || pow_mod(g, q, p) != 1 {
            return bad("g must have order q");
        }
        Ok(Self { p, q, g })
    }

    /// Seeded safe-prime group `p = 2q + 1` with a 62-bit `q`.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (p, q) = loop {
            let q = rng.gen_range(1u64 << 61..1u64 << 62) | 1;
            if is_prime(q) && is_prime(2 * q + 1) {
                break (2 * q + 1, q);
            }
        };
        let g = loop {
            let h = rng.gen_range(2..p - 1);
            let g = mul_mod(h, h, p);
            if g != 1 {
                break g;
            }
        };
        Self { p, q, g }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn g(&self) -> u64 {
        self.g
    }

    pub fn scalar(&self, v: u64) -> u64 {
        v % self.q
    }
}

impl Group for ToyGroup {
    type Scalar = u64;
    type Element = u64;

    const TAG: [u8; 4] = *b"TOY1";

    fn name(&self) -> String {
        format!("toy(p={}, q={}, g={})", self.p, self.q, self.g)
    }

    fn order_bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    fn scalar_len(&self) -> usize {
        8
    }

    fn element_len(&self) -> usize {
        8
    }

    fn generator(&self) -> u64 {
        self.g
    }

    fn identity(&self) -> u64 {
        1
    }

    fn add(&self, a: &u64, b: &u64) -> u64 {
        mul_mod(*a, *b, self.p)
    }

    fn mul(&self, e: &u64, k: &u64) -> u64 {
        pow_mod(*e, *k, self.p)
    }

    fn scalar_zero(&self) -> u64 {
        0
    }

    fn scalar_add(&self, a: &u64, b: &u64) -> u64 {
        ((*a as u128 + *b as u128) % self.q as u128) as u64
    }

    fn scalar_mul(&self, a: &u64, b: &u64) -> u64 {
        mul_mod(*a, *b, self.q)
    }

    fn scalar_from_wide(&self, bytes: &[u8; 64]) -> u64 {
        bytes.iter().fold(0u64, |acc, &b| ((acc as u128 * 256 + b as u128) % self.q as u128) as u64)
    }

    fn encode_scalar(&self, s: &u64) -> Vec<u8> {
        s.to_be_bytes().to_vec()
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Option<u64> {
        let v = u64::from_be_bytes(bytes.try_into().ok()?);
        (v < self.q).then_some(v)
    }

    fn encode_element(&self, e: &u64) -> Vec<u8> {
        e.to_be_bytes().to_vec()
    }

    fn decode_element(&self, bytes: &[u8]) -> Option<u64> {
        let v = u64::from_be_bytes(bytes.try_into().ok()?);
        (v > 1 && v < self.p && pow_mod(v, self.q, self.p) == 1).then_some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_group() {
        let g = ToyGroup::new(23, 11, 4).unwrap();
        assert_eq!(g.mul(&4, &11), 1);
        assert_eq!(g.mul_gen(&7), 8);
        assert!(ToyGroup::new(23, 11, 5).is_err(), "5 has order 22");
        assert!(ToyGroup::new(23, 7, 4).is_err());
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = ToyGroup::generate(42);
        assert_eq!(a, ToyGroup::generate(42));
        assert_ne!(a, ToyGroup::generate(43));
        assert_eq!(a.p(), 2 * a.q() + 1);
        assert!(is_prime(a.p()) && is_prime(a.q()));
        assert_eq!(pow_mod(a.g(), a.q(), a.p()), 1);
        assert_eq!(a.order_bits(), 62);
    }

    #[test]
    fn primality() {
        let primes = [2u64, 3, 5, 61, 7919, 2_147_483_647, 18_446_744_073_709_551_557];
        for p in primes {
            assert!(is_prime(p), "{p}");
        }
        for c in [0u64, 1, 4, 561, 3_215_031_751, 18_446_744_073_709_551_615] {
            assert!(!is_prime(c), "{c}");
        }
    }

    #[test]
    fn decoding_rejects_non_members() {
        let g = ToyGroup::new(23, 11, 4).unwrap();
        assert_eq!(g.decode_element(&8u64.to_be_bytes()), Some(8));
        assert_eq!(g.decode_element(&5u64.to_be_bytes()), None);
        assert_eq!(g.decode_element(&1u64.to_be_bytes()), None);
        assert_eq!(g.decode_scalar(&11u64.to_be_bytes()), None);
        assert_eq!(g.decode_scalar(&[0; 7]), None);
    }
}
