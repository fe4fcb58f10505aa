//! Arbitrary-precision modular arithmetic, probable-prime generation, and
//! seeded randomness. Everything above (cryptosystems, masking, protocols)
//! draws its numbers from here.
//!
//! Randomness is deterministic by construction: an [`Rng`] is seeded with a
//! 64-bit value and two runs with the same seed produce identical streams.
//! That is a simulator feature, not a security property.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Number of Miller-Rabin rounds. 40 rounds give a 2^-80 error bound on
/// composites slipping through.
pub const MILLER_RABIN_ROUNDS: u32 = 40;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModMathError {
    #[error("value {0} has no inverse modulo {1}")]
    NotInvertible(BigUint, BigUint),
    #[error("modulus must be at least 2, got {0}")]
    BadModulus(BigUint),
}

/// Deterministic random stream. Same seed, same stream; `substream`
/// derives independent per-party streams from one master seed.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha12Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `id` under the same master seed. Streams with
    /// distinct ids never overlap.
    pub fn substream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Rng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from [0, bound) by rejection sampling: draw `bits(bound)`
    /// random bits and retry until the value lands below the bound, which
    /// avoids the modulo bias a reduction would introduce.
    pub fn below(&mut self, bound: &BigUint) -> BigUint {
        assert!(!bound.is_zero(), "rand_below needs bound >= 1");
        if bound.is_one() {
            return BigUint::zero();
        }
        let bits = bound.bits();
        loop {
            let candidate = self.bits(bits);
            if &candidate < bound {
                return candidate;
            }
        }
    }

    /// Uniform integer with at most `bits` bits.
    pub fn bits(&mut self, bits: u64) -> BigUint {
        let n_words = bits.div_ceil(64);
        let mut words = Vec::with_capacity(n_words as usize);
        for _ in 0..n_words {
            words.push(self.inner.next_u64());
        }
        // chop the top word down to the requested width
        let excess = n_words * 64 - bits;
        if excess > 0 {
            let last = words.last_mut().unwrap();
            *last >>= excess;
        }
        BigUint::from_slice(
            &words
                .iter()
                .flat_map(|w| [*w as u32, (*w >> 32) as u32])
                .collect::<Vec<_>>(),
        )
    }

    /// Uniform draw from [low, high).
    pub fn range(&mut self, low: &BigUint, high: &BigUint) -> BigUint {
        assert!(low < high);
        low + self.below(&(high - low))
    }

    /// Uniform element of the multiplicative group Z_m^* (coprime to m).
    pub fn unit(&mut self, modulus: &BigUint) -> BigUint {
        loop {
            let candidate = self.below(modulus);
            if !candidate.is_zero() && candidate.gcd(modulus).is_one() {
                return candidate;
            }
        }
    }
}

/// A residue bound to its modulus. Arithmetic stays inside the ring and
/// panics on modulus mismatch, which would always be a programming error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigResidue {
    value: BigUint,
    modulus: BigUint,
}

impl BigResidue {
    pub fn new(value: BigUint, modulus: BigUint) -> Result<Self, ModMathError> {
        if modulus < BigUint::from(2u32) {
            return Err(ModMathError::BadModulus(modulus));
        }
        Ok(BigResidue {
            value: value % &modulus,
            modulus,
        })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn add(&self, other: &BigResidue) -> BigResidue {
        assert_eq!(self.modulus, other.modulus, "modulus mismatch");
        BigResidue {
            value: (&self.value + &other.value) % &self.modulus,
            modulus: self.modulus.clone(),
        }
    }

    pub fn sub(&self, other: &BigResidue) -> BigResidue {
        assert_eq!(self.modulus, other.modulus, "modulus mismatch");
        BigResidue {
            value: (&self.value + &self.modulus - &other.value) % &self.modulus,
            modulus: self.modulus.clone(),
        }
    }

    pub fn mul(&self, other: &BigResidue) -> BigResidue {
        assert_eq!(self.modulus, other.modulus, "modulus mismatch");
        BigResidue {
            value: (&self.value * &other.value) % &self.modulus,
            modulus: self.modulus.clone(),
        }
    }

    pub fn pow(&self, exp: &BigUint) -> BigResidue {
        BigResidue {
            value: mod_pow(&self.value, exp, &self.modulus),
            modulus: self.modulus.clone(),
        }
    }

    pub fn inv(&self) -> Result<BigResidue, ModMathError> {
        Ok(BigResidue {
            value: mod_inv(&self.value, &self.modulus)?,
            modulus: self.modulus.clone(),
        })
    }
}

/// base^exp mod modulus. Runtime is logarithmic in the exponent's bit length.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    assert!(
        modulus >= &BigUint::from(2u32),
        "mod_pow needs modulus >= 2"
    );
    base.modpow(exp, modulus)
}

/// Multiplicative inverse of a mod modulus via the extended Euclidean
/// algorithm. Errors when gcd(a, modulus) != 1.
pub fn mod_inv(a: &BigUint, modulus: &BigUint) -> Result<BigUint, ModMathError> {
    if modulus < &BigUint::from(2u32) {
        return Err(ModMathError::BadModulus(modulus.clone()));
    }
    let a_int = BigInt::from(a % modulus);
    let m_int = BigInt::from(modulus.clone());
    let ext = a_int.extended_gcd(&m_int);
    if !ext.gcd.is_one() {
        return Err(ModMathError::NotInvertible(a.clone(), modulus.clone()));
    }
    let mut x = ext.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    Ok(x.to_biguint().expect("normalized to non-negative"))
}

/// Signed value reduced into [0, modulus).
pub fn signed_mod(value: &BigInt, modulus: &BigUint) -> BigUint {
    let m = BigInt::from(modulus.clone());
    let mut r = value % &m;
    if r.is_negative() {
        r += &m;
    }
    r.to_biguint().expect("normalized to non-negative")
}

/// Centered lift: the representative of `value` in (-modulus/2, modulus/2].
pub fn centered_lift(value: &BigUint, modulus: &BigUint) -> BigInt {
    let half = modulus >> 1;
    if value > &half {
        BigInt::from(value.clone()) - BigInt::from(modulus.clone())
    } else {
        BigInt::from(value.clone())
    }
}

const SMALL_PRIMES: [u32; 46] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211,
];

/// Miller-Rabin probable-prime test with `rounds` random bases.
pub fn is_probable_prime(n: &BigUint, rounds: u32, rng: &mut Rng) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    if n == &two {
        return true;
    }
    if n.is_even() {
        return false;
    }
    for p in SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // write n-1 = d * 2^s with d odd
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().expect("n-1 > 0");
    let d = &n_minus_1 >> s;
    let n_minus_2 = n - 2u32;
    'witness: for _ in 0..rounds {
        let a = rng.range(&two, &n_minus_2);
        let mut x = mod_pow(&a, &d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Probable prime drawn uniformly from [2^(bits-1), 2^bits).
pub fn gen_prime(bits: u64, rng: &mut Rng) -> BigUint {
    assert!(bits >= 4, "gen_prime needs bits >= 4");
    let low = BigUint::one() << (bits - 1);
    let high = BigUint::one() << bits;
    loop {
        let mut candidate = rng.range(&low, &high);
        candidate |= BigUint::one(); // force odd
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

/// Safe prime p = 2q + 1 with q prime, p in [2^(bits-1), 2^bits).
pub fn gen_safe_prime(bits: u64, rng: &mut Rng) -> (BigUint, BigUint) {
    assert!(bits >= 5, "gen_safe_prime needs bits >= 5");
    loop {
        let q = gen_prime(bits - 1, rng);
        let p: BigUint = (&q << 1u32) + 1u32;
        if p.bits() == bits && is_probable_prime(&p, MILLER_RABIN_ROUNDS, rng) {
            return (p, q);
        }
    }
}
