//! Multiplicatively homomorphic ElGamal over the quadratic residues of a
//! safe prime.
//!
//! Parameters: p = 2q + 1 with q prime, generator g of the order-q residue
//! subgroup, secret x in [1, q), public h = g^x. A ciphertext is the pair
//! (g^y, m * h^y) and componentwise products multiply plaintexts, which is
//! the one homomorphic operation the entrywise gain*state controller needs.
//!
//! Caveat on the message space: indistinguishability holds only for
//! messages inside the residue subgroup, because the Legendre symbol of
//! m * h^y leaks that of m. The API still accepts any nonzero residue (the
//! controllers pre-map their operands), it just does not promise semantic
//! security for non-residues. A zero message is rejected outright: 0 is not
//! a group element and would decrypt to 0 under every key, silently
//! destroying the product structure.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::modmath::{is_probable_prime, mod_inv, mod_pow, Rng, MILLER_RABIN_ROUNDS};
use crate::paillier::key_fingerprint;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ElGamalError {
    #[error("message {0} is not in [1, p)")]
    MessageOutOfRange(BigUint),
    #[error("ciphertext belongs to key {found:016x}, expected {expected:016x}")]
    KeyMismatch { expected: u64, found: u64 },
    #[error("invalid parameters: {0}")]
    InvalidKey(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElGamalPublicKey {
    prime: BigUint,
    subgroup_order: BigUint,
    generator: BigUint,
    h: BigUint,
    key_id: u64,
}

#[derive(Debug, Clone)]
pub struct ElGamalKeypair {
    public: ElGamalPublicKey,
    x: BigUint,
}

/// Pair (c1, c2) in Z_p* x Z_p*, tagged with key and fixed-point scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElGamalCiphertext {
    pub c1: BigUint,
    pub c2: BigUint,
    pub key_id: u64,
    pub scale: u32,
}

impl ElGamalPublicKey {
    pub fn prime(&self) -> &BigUint {
        &self.prime
    }

    pub fn subgroup_order(&self) -> &BigUint {
        &self.subgroup_order
    }

    pub fn generator(&self) -> &BigUint {
        &self.generator
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    /// Bytes per serialized group element.
    pub fn element_byte_len(&self) -> usize {
        self.prime.bits().div_ceil(8) as usize
    }

    pub fn eg_enc(&self, m: &BigUint, rng: &mut Rng) -> Result<ElGamalCiphertext, ElGamalError> {
        self.eg_enc_at_scale(m, 1, rng)
    }

    pub fn eg_enc_at_scale(
        &self,
        m: &BigUint,
        scale: u32,
        rng: &mut Rng,
    ) -> Result<ElGamalCiphertext, ElGamalError> {
        if m.is_zero() || m >= &self.prime {
            return Err(ElGamalError::MessageOutOfRange(m.clone()));
        }
        let y = rng.range(&BigUint::one(), &self.subgroup_order);
        Ok(ElGamalCiphertext {
            c1: mod_pow(&self.generator, &y, &self.prime),
            c2: (m * mod_pow(&self.h, &y, &self.prime)) % &self.prime,
            key_id: self.key_id,
            scale,
        })
    }

    fn check_key(&self, c: &ElGamalCiphertext) -> Result<(), ElGamalError> {
        if c.key_id != self.key_id {
            return Err(ElGamalError::KeyMismatch {
                expected: self.key_id,
                found: c.key_id,
            });
        }
        Ok(())
    }

    /// Homomorphic multiplication: componentwise product. Scales add, one
    /// scale per fixed-point factor in the plaintext product.
    pub fn eg_mul(
        &self,
        a: &ElGamalCiphertext,
        b: &ElGamalCiphertext,
    ) -> Result<ElGamalCiphertext, ElGamalError> {
        self.check_key(a)?;
        self.check_key(b)?;
        Ok(ElGamalCiphertext {
            c1: (&a.c1 * &b.c1) % &self.prime,
            c2: (&a.c2 * &b.c2) % &self.prime,
            key_id: self.key_id,
            scale: a.scale + b.scale,
        })
    }

    /// key_id (8) || scale (2) || c1 || c2, big-endian, each element padded
    /// to ceil(bits(p)/8) bytes.
    pub fn serialize(&self, c: &ElGamalCiphertext) -> Result<Vec<u8>, ElGamalError> {
        self.check_key(c)?;
        if c.scale > u16::MAX as u32 {
            return Err(ElGamalError::Serialization(format!(
                "scale {} exceeds the 2-byte wire field",
                c.scale
            )));
        }
        let width = self.element_byte_len();
        let mut out = Vec::with_capacity(10 + 2 * width);
        out.extend_from_slice(&c.key_id.to_be_bytes());
        out.extend_from_slice(&(c.scale as u16).to_be_bytes());
        for part in [&c.c1, &c.c2] {
            let raw = part.to_bytes_be();
            if raw.len() > width {
                return Err(ElGamalError::Serialization("element overflows field".into()));
            }
            out.resize(out.len() + width - raw.len(), 0);
            out.extend_from_slice(&raw);
        }
        Ok(out)
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<ElGamalCiphertext, ElGamalError> {
        let width = self.element_byte_len();
        if bytes.len() != 10 + 2 * width {
            return Err(ElGamalError::Serialization(format!(
                "expected {} bytes, got {}",
                10 + 2 * width,
                bytes.len()
            )));
        }
        let key_id = u64::from_be_bytes(bytes[..8].try_into().expect("sliced 8"));
        if key_id != self.key_id {
            return Err(ElGamalError::KeyMismatch {
                expected: self.key_id,
                found: key_id,
            });
        }
        let scale = u16::from_be_bytes(bytes[8..10].try_into().expect("sliced 2")) as u32;
        let c1 = BigUint::from_bytes_be(&bytes[10..10 + width]);
        let c2 = BigUint::from_bytes_be(&bytes[10 + width..]);
        for part in [&c1, &c2] {
            if part.is_zero() || part >= &self.prime {
                return Err(ElGamalError::Serialization("element outside Z_p*".into()));
            }
        }
        Ok(ElGamalCiphertext {
            c1,
            c2,
            key_id,
            scale,
        })
    }
}

impl ElGamalKeypair {
    /// Generate over a fresh `bits`-bit safe prime. The generator is h^2 for
    /// a uniform h outside {1, p-1}, which always lands on a generator of
    /// the residue subgroup: the subgroup has prime order, so every element
    /// except 1 generates it.
    pub fn eg_keygen(bits: u64, rng: &mut Rng) -> ElGamalKeypair {
        assert!(bits >= 5, "need at least a 5-bit safe prime");
        let (p, q) = crate::modmath::gen_safe_prime(bits, rng);
        let pm1 = &p - 1u32;
        let generator = loop {
            let h = rng.range(&BigUint::from(2u32), &pm1);
            let g = (&h * &h) % &p;
            if !g.is_one() {
                break g;
            }
        };
        let x = rng.range(&BigUint::one(), &q);
        ElGamalKeypair::from_parameters(&p, &generator, &x)
            .expect("freshly sampled parameters are always valid")
    }

    /// Assemble from explicit parameters, validating that p is a safe
    /// prime, g generates the residue subgroup, and x is a valid exponent.
    pub fn from_parameters(
        p: &BigUint,
        g: &BigUint,
        x: &BigUint,
    ) -> Result<ElGamalKeypair, ElGamalError> {
        let mut check_rng = Rng::from_seed(0x656c676d); // fixed: validation only
        if !is_probable_prime(p, MILLER_RABIN_ROUNDS, &mut check_rng) {
            return Err(ElGamalError::InvalidKey(format!("{p} is not prime")));
        }
        let q: BigUint = (p - 1u32) >> 1;
        if !is_probable_prime(&q, MILLER_RABIN_ROUNDS, &mut check_rng) {
            return Err(ElGamalError::InvalidKey(format!(
                "{p} is not a safe prime: (p-1)/2 is composite"
            )));
        }
        if g <= &BigUint::one() || g >= p || !mod_pow(g, &q, p).is_one() {
            return Err(ElGamalError::InvalidKey(format!(
                "{g} does not generate the order-{q} residue subgroup"
            )));
        }
        if x.is_zero() || x >= &q {
            return Err(ElGamalError::InvalidKey("secret exponent out of range".into()));
        }
        let h = mod_pow(g, x, p);
        let key_id = key_fingerprint(p);
        Ok(ElGamalKeypair {
            public: ElGamalPublicKey {
                prime: p.clone(),
                subgroup_order: q,
                generator: g.clone(),
                h,
                key_id,
            },
            x: x.clone(),
        })
    }

    pub fn public(&self) -> &ElGamalPublicKey {
        &self.public
    }

    pub fn prime(&self) -> &BigUint {
        &self.public.prime
    }

    pub fn eg_dec(&self, c: &ElGamalCiphertext) -> Result<BigUint, ElGamalError> {
        self.public.check_key(c)?;
        let mask = mod_pow(&c.c1, &self.x, &self.public.prime);
        let mask_inv = mod_inv(&mask, &self.public.prime)
            .expect("powers of group elements are invertible mod a prime");
        Ok((&c.c2 * mask_inv) % &self.public.prime)
    }
}
