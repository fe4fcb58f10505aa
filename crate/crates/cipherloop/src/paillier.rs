//! Additively homomorphic Paillier cryptosystem.
//!
//! Public key P = p*q for equal-length primes; secret key S = (p-1)(q-1)
//! with mu = S^-1 mod P. Encryption of z in [0, P) with nonce r in Z_{P^2}*
//! is c = (P+1)^z * r^P mod P^2. Ciphertext products add plaintexts,
//! ciphertext powers multiply a plaintext by a constant, which is all the
//! homomorphism the controllers need.
//!
//! Fixed-point plumbing: every ciphertext carries a public `scale`, the
//! number of beta^delta factors applied to the underlying real value. On
//! Paillier paths the fixedpoint message space is phi = P, so modular wrap
//! and centered-lift decoding line up.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fixedpoint::{Encoded, FixedPointCode};
use crate::modmath::{is_probable_prime, mod_inv, mod_pow, signed_mod, Rng};
use crate::modmath::MILLER_RABIN_ROUNDS;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PaillierError {
    #[error("message {0} is not a residue mod {1}")]
    MessageOutOfRange(BigUint, BigUint),
    #[error("ciphertext belongs to key {found:016x}, expected {expected:016x}")]
    KeyMismatch { expected: u64, found: u64 },
    #[error("scales differ: {0} vs {1}")]
    ScaleMismatch(u32, u32),
    #[error("decryption L-function division is inexact: not a valid ciphertext")]
    MalformedCiphertext,
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

/// Fingerprint of a public modulus: the first 8 bytes of SHA-256 over its
/// big-endian encoding. Collisions are irrelevant at simulator scale.
pub fn key_fingerprint(modulus: &BigUint) -> u64 {
    let digest = Sha256::digest(modulus.to_bytes_be());
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Public half: enough to encrypt and to evaluate homomorphic operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    modulus: BigUint,
    modulus_squared: BigUint,
    key_id: u64,
}

/// Full keypair. Holds the factorization; only `dec` uses it.
#[derive(Debug, Clone)]
pub struct PaillierKeypair {
    public: PaillierPublicKey,
    s: BigUint,
    mu: BigUint,
}

/// An element of Z_{P^2}* tagged with the owning key and a fixed-point scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub value: BigUint,
    pub key_id: u64,
    pub scale: u32,
}

impl PaillierPublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.modulus_squared
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    /// Number of bytes the serialized value field occupies.
    pub fn value_byte_len(&self) -> usize {
        (2 * self.modulus.bits()).div_ceil(8) as usize
    }

    /// Encrypt z at scale 1 with a fresh nonce.
    pub fn enc(&self, z: &BigUint, rng: &mut Rng) -> Result<Ciphertext, PaillierError> {
        let r = rng.unit(&self.modulus_squared);
        self.enc_with_nonce(z, &r, 1)
    }

    /// Encrypt an already-encoded fixed-point value, carrying its scale.
    pub fn enc_encoded(&self, e: &Encoded, rng: &mut Rng) -> Result<Ciphertext, PaillierError> {
        let r = rng.unit(&self.modulus_squared);
        self.enc_with_nonce(&e.residue, &r, e.scale)
    }

    /// Encrypt with an explicit nonce. (P+1)^z mod P^2 expands to 1 + zP by
    /// the binomial theorem, so only the nonce costs a modular power.
    pub fn enc_with_nonce(
        &self,
        z: &BigUint,
        r: &BigUint,
        scale: u32,
    ) -> Result<Ciphertext, PaillierError> {
        if z >= &self.modulus {
            return Err(PaillierError::MessageOutOfRange(
                z.clone(),
                self.modulus.clone(),
            ));
        }
        let gz = (BigUint::one() + z * &self.modulus) % &self.modulus_squared;
        let rp = mod_pow(r, &self.modulus, &self.modulus_squared);
        Ok(Ciphertext {
            value: (gz * rp) % &self.modulus_squared,
            key_id: self.key_id,
            scale,
        })
    }

    fn check_key(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key_id != self.key_id {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id,
                found: c.key_id,
            });
        }
        Ok(())
    }

    /// Homomorphic addition: ciphertext product. Requires equal scales.
    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check_key(c1)?;
        self.check_key(c2)?;
        if c1.scale != c2.scale {
            return Err(PaillierError::ScaleMismatch(c1.scale, c2.scale));
        }
        Ok(Ciphertext {
            value: (&c1.value * &c2.value) % &self.modulus_squared,
            key_id: self.key_id,
            scale: c1.scale,
        })
    }

    /// Add a plaintext constant (same scale as the ciphertext): multiply by
    /// the deterministic encryption (P+1)^k = 1 + kP.
    pub fn add_const(&self, c: &Ciphertext, k: &BigInt) -> Result<Ciphertext, PaillierError> {
        self.check_key(c)?;
        let kr = signed_mod(k, &self.modulus);
        let gk = (BigUint::one() + kr * &self.modulus) % &self.modulus_squared;
        Ok(Ciphertext {
            value: (&c.value * gk) % &self.modulus_squared,
            key_id: self.key_id,
            scale: c.scale,
        })
    }

    /// Multiply the plaintext by an integer constant: ciphertext power.
    /// Negative constants are reduced mod P first.
    pub fn mul_const(&self, c: &Ciphertext, k: &BigInt) -> Result<Ciphertext, PaillierError> {
        self.check_key(c)?;
        let kr = signed_mod(k, &self.modulus);
        Ok(Ciphertext {
            value: mod_pow(&c.value, &kr, &self.modulus_squared),
            key_id: self.key_id,
            scale: c.scale,
        })
    }

    /// Multiply by an encoded fixed-point gain: the scales add.
    pub fn mul_encoded(&self, c: &Ciphertext, gain: &Encoded) -> Result<Ciphertext, PaillierError> {
        self.check_key(c)?;
        Ok(Ciphertext {
            value: mod_pow(&c.value, &gain.residue, &self.modulus_squared),
            key_id: self.key_id,
            scale: c.scale + gain.scale,
        })
    }

    /// Lift a ciphertext `levels` scales deeper without changing the value
    /// it denotes: multiply the plaintext by beta^(delta*levels).
    pub fn upscale(
        &self,
        c: &Ciphertext,
        code: &FixedPointCode,
        levels: u32,
    ) -> Result<Ciphertext, PaillierError> {
        self.check_key(c)?;
        let factor = BigUint::from(code.beta()).pow(code.delta() * levels);
        Ok(Ciphertext {
            value: mod_pow(&c.value, &factor, &self.modulus_squared),
            key_id: self.key_id,
            scale: c.scale + levels,
        })
    }

    /// Fresh encryption of the same plaintext: multiply by an encryption of
    /// zero. Scale is untouched.
    pub fn rerandomize(&self, c: &Ciphertext, rng: &mut Rng) -> Result<Ciphertext, PaillierError> {
        self.check_key(c)?;
        let r = rng.unit(&self.modulus_squared);
        let rp = mod_pow(&r, &self.modulus, &self.modulus_squared);
        Ok(Ciphertext {
            value: (&c.value * rp) % &self.modulus_squared,
            key_id: self.key_id,
            scale: c.scale,
        })
    }

    /// key_id (8 bytes) || scale (2 bytes) || value, big-endian, fixed width
    /// ceil(2*bits(P)/8). The value field alone spans 2x the key bit length.
    pub fn serialize(&self, c: &Ciphertext) -> Result<Vec<u8>, PaillierError> {
        self.check_key(c)?;
        if c.scale > u16::MAX as u32 {
            return Err(PaillierError::Serialization(format!(
                "scale {} exceeds the 2-byte wire field",
                c.scale
            )));
        }
        let width = self.value_byte_len();
        let raw = c.value.to_bytes_be();
        if raw.len() > width {
            return Err(PaillierError::Serialization(format!(
                "value needs {} bytes, field width is {width}",
                raw.len()
            )));
        }
        let mut out = Vec::with_capacity(10 + width);
        out.extend_from_slice(&c.key_id.to_be_bytes());
        out.extend_from_slice(&(c.scale as u16).to_be_bytes());
        out.resize(10 + width - raw.len(), 0);
        out.extend_from_slice(&raw);
        Ok(out)
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<Ciphertext, PaillierError> {
        let width = self.value_byte_len();
        if bytes.len() != 10 + width {
            return Err(PaillierError::Serialization(format!(
                "expected {} bytes, got {}",
                10 + width,
                bytes.len()
            )));
        }
        let key_id = u64::from_be_bytes(bytes[..8].try_into().expect("sliced 8"));
        if key_id != self.key_id {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id,
                found: key_id,
            });
        }
        let scale = u16::from_be_bytes(bytes[8..10].try_into().expect("sliced 2")) as u32;
        let value = BigUint::from_bytes_be(&bytes[10..]);
        if value >= self.modulus_squared || value.is_zero() {
            return Err(PaillierError::Serialization(
                "value outside Z_{P^2}".into(),
            ));
        }
        Ok(Ciphertext {
            value,
            key_id,
            scale,
        })
    }
}

impl PaillierKeypair {
    /// Generate a keypair with two fresh primes of `bits_per_prime` bits.
    pub fn keygen(bits_per_prime: u64, rng: &mut Rng) -> PaillierKeypair {
        assert!(bits_per_prime >= 4, "need at least 4-bit primes");
        let p = crate::modmath::gen_prime(bits_per_prime, rng);
        let q = loop {
            let q = crate::modmath::gen_prime(bits_per_prime, rng);
            if q != p {
                break q;
            }
        };
        PaillierKeypair::from_primes(&p, &q).expect("fresh equal-length primes are always valid")
    }

    /// Build a keypair from explicit primes. Validates primality, p != q,
    /// and the gcd(P, S) = 1 requirement that makes mu exist.
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<PaillierKeypair, PaillierError> {
        let mut check_rng = Rng::from_seed(0x70726d63); // fixed: validation only
        if p == q {
            return Err(PaillierError::InvalidKey("p and q must differ".into()));
        }
        for n in [p, q] {
            if !is_probable_prime(n, MILLER_RABIN_ROUNDS, &mut check_rng) {
                return Err(PaillierError::InvalidKey(format!("{n} is not prime")));
            }
        }
        let modulus = p * q;
        let s = (p - 1u32) * (q - 1u32);
        let mu = mod_inv(&s, &modulus)
            .map_err(|_| PaillierError::InvalidKey("gcd(P, S) != 1".into()))?;
        let modulus_squared = &modulus * &modulus;
        let key_id = key_fingerprint(&modulus);
        Ok(PaillierKeypair {
            public: PaillierPublicKey {
                modulus,
                modulus_squared,
                key_id,
            },
            s,
            mu,
        })
    }

    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }

    pub fn modulus(&self) -> &BigUint {
        &self.public.modulus
    }

    /// Decrypt: z = L(c^S mod P^2) * mu mod P with L(u) = (u-1)/P. The
    /// division must be exact; an inexact division marks a value that was
    /// never a ciphertext under this key.
    pub fn dec(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.public.check_key(c)?;
        let p2 = &self.public.modulus_squared;
        let u = mod_pow(&c.value, &self.s, p2);
        let (quot, rem) = (u - BigUint::one()).div_rem(&self.public.modulus);
        if !rem.is_zero() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok((quot * &self.mu) % &self.public.modulus)
    }

    /// Decrypt into an Encoded carrying the ciphertext's scale, ready for
    /// fixed-point decoding with phi = P.
    pub fn dec_encoded(&self, c: &Ciphertext) -> Result<Encoded, PaillierError> {
        Ok(Encoded {
            residue: self.dec(c)?,
            scale: c.scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Rng;

    fn tiny() -> PaillierKeypair {
        PaillierKeypair::from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).unwrap()
    }

    #[test]
    fn tiny_key_material_matches_hand_computation() {
        let kp = tiny();
        assert_eq!(kp.modulus(), &BigUint::from(35u32));
        assert_eq!(kp.s, BigUint::from(24u32));
        assert_eq!(kp.mu, BigUint::from(19u32)); // 24*19 = 456 = 13*35 + 1
    }

    #[test]
    fn roundtrip_exhaustive_over_z35() {
        let kp = tiny();
        let mut rng = Rng::from_seed(11);
        for z in 0u32..35 {
            for _ in 0..5 {
                let c = kp.public().enc(&BigUint::from(z), &mut rng).unwrap();
                assert_eq!(kp.dec(&c).unwrap(), BigUint::from(z), "z = {z}");
            }
        }
    }

    #[test]
    fn enc_zero_is_nonce_power() {
        let kp = tiny();
        let r = BigUint::from(2u32);
        let c = kp
            .public()
            .enc_with_nonce(&BigUint::zero(), &r, 1)
            .unwrap();
        assert_eq!(c.value, mod_pow(&r, &BigUint::from(35u32), &BigUint::from(1225u32)));
        assert_eq!(kp.dec(&c).unwrap(), BigUint::zero());
    }

    #[test]
    fn encryption_is_probabilistic() {
        let kp = tiny();
        let mut rng = Rng::from_seed(13);
        let a = kp.public().enc(&BigUint::from(9u32), &mut rng).unwrap();
        let b = kp.public().enc(&BigUint::from(9u32), &mut rng).unwrap();
        assert_ne!(a.value, b.value);
        assert_eq!(kp.dec(&a).unwrap(), kp.dec(&b).unwrap());
    }

    #[test]
    fn enc_injective_in_z_for_fixed_nonce() {
        let kp = tiny();
        let r = BigUint::from(3u32);
        let mut seen = std::collections::HashSet::new();
        for z in 0u32..35 {
            let c = kp
                .public()
                .enc_with_nonce(&BigUint::from(z), &r, 1)
                .unwrap();
            assert!(seen.insert(c.value.clone()), "collision at z = {z}");
        }
    }

    #[test]
    fn add_homomorphism_exhaustive_z35() {
        let kp = tiny();
        let mut rng = Rng::from_seed(17);
        for a in 0u32..35 {
            for b in 0u32..35 {
                let ca = kp.public().enc(&BigUint::from(a), &mut rng).unwrap();
                let cb = kp.public().enc(&BigUint::from(b), &mut rng).unwrap();
                let sum = kp.public().add(&ca, &cb).unwrap();
                assert_eq!(
                    kp.dec(&sum).unwrap(),
                    BigUint::from((a + b) % 35),
                    "{a} + {b}"
                );
            }
        }
    }

    #[test]
    fn mul_const_homomorphism_exhaustive_z35() {
        let kp = tiny();
        let mut rng = Rng::from_seed(19);
        for a in 0u32..35 {
            let ca = kp.public().enc(&BigUint::from(a), &mut rng).unwrap();
            for k in 0u32..35 {
                let ck = kp.public().mul_const(&ca, &BigInt::from(k)).unwrap();
                assert_eq!(
                    kp.dec(&ck).unwrap(),
                    BigUint::from((a * k) % 35),
                    "{a} * {k}"
                );
            }
        }
    }

    #[test]
    fn mul_const_negative_wraps() {
        let kp = tiny();
        let mut rng = Rng::from_seed(23);
        let c = kp.public().enc(&BigUint::from(3u32), &mut rng).unwrap();
        let neg = kp.public().mul_const(&c, &BigInt::from(-1)).unwrap();
        assert_eq!(kp.dec(&neg).unwrap(), BigUint::from(32u32)); // -3 mod 35
    }

    #[test]
    fn add_const_matches_add_of_encryption() {
        let kp = tiny();
        let mut rng = Rng::from_seed(29);
        let c = kp.public().enc(&BigUint::from(20u32), &mut rng).unwrap();
        let shifted = kp.public().add_const(&c, &BigInt::from(20)).unwrap();
        assert_eq!(kp.dec(&shifted).unwrap(), BigUint::from(5u32)); // 40 mod 35
        let minus = kp.public().add_const(&c, &BigInt::from(-25)).unwrap();
        assert_eq!(kp.dec(&minus).unwrap(), BigUint::from(30u32)); // -5 mod 35
    }

    #[test]
    fn rerandomize_preserves_plaintext_and_scale() {
        let kp = tiny();
        let mut rng = Rng::from_seed(31);
        let c = kp.public().enc(&BigUint::from(9u32), &mut rng).unwrap();
        // at P = 35 the nonce mask r^P takes only S = 24 values, so count
        // distinct outputs rather than demanding all-fresh
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            let r = kp.public().rerandomize(&c, &mut rng).unwrap();
            assert_eq!(kp.dec(&r).unwrap(), BigUint::from(9u32));
            assert_eq!(r.scale, c.scale);
            seen.insert(r.value);
        }
        assert!(seen.len() >= 15, "only {} distinct rerandomizations", seen.len());
    }

    #[test]
    fn wrong_key_is_rejected() {
        let kp1 = tiny();
        let kp2 = PaillierKeypair::from_primes(&BigUint::from(11u32), &BigUint::from(13u32))
            .unwrap();
        let mut rng = Rng::from_seed(37);
        let c = kp1.public().enc(&BigUint::from(1u32), &mut rng).unwrap();
        assert!(matches!(
            kp2.dec(&c),
            Err(PaillierError::KeyMismatch { .. })
        ));
    }

    #[test]
    fn scale_mismatch_rejected_on_add() {
        let kp = tiny();
        let mut rng = Rng::from_seed(41);
        let a = kp.public().enc(&BigUint::from(1u32), &mut rng).unwrap();
        let mut b = kp.public().enc(&BigUint::from(2u32), &mut rng).unwrap();
        b.scale = 2;
        assert!(matches!(
            kp.public().add(&a, &b),
            Err(PaillierError::ScaleMismatch(1, 2))
        ));
    }

    #[test]
    fn message_out_of_range_rejected() {
        let kp = tiny();
        let mut rng = Rng::from_seed(43);
        assert!(matches!(
            kp.public().enc(&BigUint::from(35u32), &mut rng),
            Err(PaillierError::MessageOutOfRange(_, _))
        ));
    }

    #[test]
    fn malformed_ciphertext_detected() {
        let kp = tiny();
        // 5 divides P=35, so 5^S mod P^2 is a multiple of 25 and the
        // L-function division cannot be exact
        let fake = Ciphertext {
            value: BigUint::from(5u32),
            key_id: kp.public().key_id(),
            scale: 1,
        };
        assert_eq!(kp.dec(&fake), Err(PaillierError::MalformedCiphertext));
    }

    #[test]
    fn keygen_bit_lengths_and_seed_separation() {
        let mut rng = Rng::from_seed(47);
        let kp = PaillierKeypair::keygen(16, &mut rng);
        let bits = kp.modulus().bits();
        assert!(bits == 31 || bits == 32, "P has {bits} bits");

        let mut rng_a = Rng::from_seed(1);
        let mut rng_b = Rng::from_seed(2);
        let a = PaillierKeypair::keygen(16, &mut rng_a);
        let b = PaillierKeypair::keygen(16, &mut rng_b);
        assert_ne!(a.modulus(), b.modulus());

        let mut rng_c = Rng::from_seed(1);
        let c = PaillierKeypair::keygen(16, &mut rng_c);
        assert_eq!(a.modulus(), c.modulus());
    }

    #[test]
    fn serialization_roundtrip_and_width() {
        let kp = tiny();
        let mut rng = Rng::from_seed(53);
        let c = kp.public().enc(&BigUint::from(12u32), &mut rng).unwrap();
        let bytes = kp.public().serialize(&c).unwrap();
        // P = 35 has 6 bits; value field = ceil(12/8) = 2 bytes
        assert_eq!(bytes.len(), 8 + 2 + 2);
        let back = kp.public().deserialize(&bytes).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn deserialize_rejects_garbage() {
        let kp = tiny();
        assert!(kp.public().deserialize(&[0u8; 3]).is_err());
        let mut rng = Rng::from_seed(59);
        let c = kp.public().enc(&BigUint::from(1u32), &mut rng).unwrap();
        let mut bytes = kp.public().serialize(&c).unwrap();
        bytes[0] ^= 0xff; // break the key id
        assert!(matches!(
            kp.public().deserialize(&bytes),
            Err(PaillierError::KeyMismatch { .. })
        ));
    }

    proptest! {
        /// Homomorphisms at a generated 16-bit-prime key.
        #[test]
        fn prop_homomorphisms_medium_key(a in 0u64..30_000, b in 0u64..30_000, k in 0i64..1000) {
            let mut rng = Rng::from_seed(61);
            let kp = PaillierKeypair::keygen(16, &mut rng);
            let m = kp.modulus().clone();
            let ca = kp.public().enc(&BigUint::from(a), &mut rng).unwrap();
            let cb = kp.public().enc(&BigUint::from(b), &mut rng).unwrap();
            let sum = kp.public().add(&ca, &cb).unwrap();
            prop_assert_eq!(kp.dec(&sum).unwrap(), BigUint::from(a + b) % &m);
            let prod = kp.public().mul_const(&ca, &BigInt::from(k)).unwrap();
            prop_assert_eq!(kp.dec(&prod).unwrap(), (BigUint::from(a) * BigUint::from(k as u64)) % &m);
        }
    }
}
