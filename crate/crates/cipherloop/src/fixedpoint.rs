//! Fixed-point quantization: maps real-valued states and gains onto the
//! integer message space of a cryptosystem and back.
//!
//! A code is parameterized by a basis `beta`, a magnitude `gamma`, a
//! resolution `delta`, and the message-space size `phi`. Reals in
//! [-beta^gamma, beta^gamma] are rounded onto the grid
//! Q = {-beta^gamma, ..., beta^gamma - beta^-delta}, scaled by beta^delta
//! into integers, and reduced mod phi. Negative values live in the upper
//! half of [0, phi); decoding applies the centered lift and divides the
//! scale back out.
//!
//! Every encoded value carries a public `scale`: the power of beta^delta
//! applied so far. Products add scales; sums require equal scales. The
//! scale is metadata, never secret.

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::modmath::{centered_lift, signed_mod};

#[derive(Debug, Error, PartialEq)]
pub enum FixedPointError {
    #[error("|{0}| exceeds the representable magnitude beta^gamma = {1}")]
    OutOfRange(f64, f64),
    #[error("phi = {phi} leaves no room for one centered product (needs phi > {needed})")]
    PhiTooSmall { phi: BigUint, needed: BigUint },
}

/// Quantization parameters plus the message-space size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointCode {
    beta: u32,
    gamma: u32,
    delta: u32,
    phi: BigUint,
}

/// An integer message: residue in [0, phi) at a known scale. The encoded
/// real is centered_lift(residue) / beta^(scale * delta).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub residue: BigUint,
    pub scale: u32,
}

impl FixedPointCode {
    /// phi must exceed 2 * beta^(gamma + delta) so a single centered value
    /// cannot wrap. Deeper products are the caller's budget via `max_scale`.
    pub fn new(beta: u32, gamma: u32, delta: u32, phi: BigUint) -> Result<Self, FixedPointError> {
        assert!(beta >= 2, "basis must be at least 2");
        assert!(gamma >= 1, "magnitude must be at least 1");
        let needed = BigUint::from(2u32) * BigUint::from(beta).pow(gamma + delta);
        if phi <= needed {
            return Err(FixedPointError::PhiTooSmall { phi, needed });
        }
        Ok(FixedPointCode {
            beta,
            gamma,
            delta,
            phi,
        })
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn phi(&self) -> &BigUint {
        &self.phi
    }

    /// Same quantizer over a different message space.
    pub fn with_phi(&self, phi: BigUint) -> Result<Self, FixedPointError> {
        FixedPointCode::new(self.beta, self.gamma, self.delta, phi)
    }

    /// beta^gamma as a real: the representable magnitude.
    pub fn magnitude(&self) -> f64 {
        (self.beta as f64).powi(self.gamma as i32)
    }

    /// beta^delta: the scaling factor applied per scale level.
    pub fn scale_factor(&self) -> i64 {
        (self.beta as i64).pow(self.delta)
    }

    /// Resolution beta^-delta: the quantization error bound.
    pub fn resolution(&self) -> f64 {
        (self.beta as f64).powi(-(self.delta as i32))
    }

    /// Round x half-away-from-zero onto the grid
    /// Q = {-beta^gamma, ..., beta^gamma - beta^-delta}. The grid is
    /// asymmetric: +beta^gamma itself rounds down one step, which still
    /// respects the beta^-delta error bound.
    pub fn quantize(&self, x: f64) -> Result<f64, FixedPointError> {
        let mag = self.magnitude();
        if !(x.is_finite() && x.abs() <= mag) {
            return Err(FixedPointError::OutOfRange(x, mag));
        }
        let f = self.scale_factor() as f64;
        let top = (mag * f).round() as i64 - 1; // beta^(gamma+delta) - 1
        let bottom = -(mag * f).round() as i64; // -beta^(gamma+delta)
        let mut level = round_half_away(x * f);
        if level > top {
            level = top;
        }
        if level < bottom {
            level = bottom;
        }
        Ok(level as f64 / f)
    }

    /// The integer grid index beta^delta * g(x): what `encode` reduces mod
    /// phi. Integer pipelines and oracles work on levels directly.
    pub fn level(&self, x: f64) -> Result<i64, FixedPointError> {
        let q = self.quantize(x)?;
        Ok(round_half_away(q * self.scale_factor() as f64))
    }

    /// Quantize then map to the residue (beta^delta * g(x)) mod phi, scale 1.
    pub fn encode(&self, x: f64) -> Result<Encoded, FixedPointError> {
        let level = self.level(x)?;
        Ok(Encoded {
            residue: signed_mod(&BigInt::from(level), &self.phi),
            scale: 1,
        })
    }

    /// Quantize then scale by beta^(scale * delta) in one go. Used when a
    /// value must enter a computation already matched to a deeper scale.
    pub fn encode_at_scale(&self, x: f64, scale: u32) -> Result<Encoded, FixedPointError> {
        let q = self.quantize(x)?;
        let level = BigInt::from(round_half_away(q * self.scale_factor() as f64));
        let extra = BigInt::from(self.beta).pow(self.delta * (scale - 1));
        Ok(Encoded {
            residue: signed_mod(&(level * extra), &self.phi),
            scale,
        })
    }

    /// Residue of an already-quantized integer level at scale 1. The level
    /// is beta^delta * g(x) for some grid point g(x).
    pub fn encode_level(&self, level: &BigInt) -> Encoded {
        Encoded {
            residue: signed_mod(level, &self.phi),
            scale: 1,
        }
    }

    /// Centered lift then divide out beta^(scale * delta). Caller guarantees
    /// the signed value has magnitude below phi/2; decode itself is total.
    pub fn decode(&self, e: &Encoded) -> f64 {
        let lifted = centered_lift(&e.residue, &self.phi);
        self.decode_lift(&lifted, e.scale)
    }

    /// Decode a signed integer lift at a given scale.
    pub fn decode_lift(&self, lifted: &BigInt, scale: u32) -> f64 {
        let divisor = BigInt::from(self.beta).pow(self.delta * scale);
        // exact integer division where possible keeps decoded values on the
        // fixed-point grid; otherwise fall back to the float quotient
        let (q, r) = num_integer::Integer::div_rem(lifted, &divisor);
        if r.is_zero() {
            q.to_f64().expect("desk-scale value fits f64")
        } else {
            lifted.to_f64().expect("fits") / divisor.to_f64().expect("fits")
        }
    }

    /// Signed integer lift of an encoded value.
    pub fn lift(&self, e: &Encoded) -> BigInt {
        centered_lift(&e.residue, &self.phi)
    }

    /// Largest s with 2 * magnitude_bound * beta^(s*delta) < phi; 0 means no
    /// product fits. Comparison is done in integers (bound scaled by 2^53) so
    /// giant phi values cannot overflow the float path.
    pub fn max_scale(&self, magnitude_bound: f64) -> u32 {
        assert!(
            magnitude_bound > 0.0 && magnitude_bound.is_finite(),
            "bound must be positive"
        );
        // 2 * bound * beta^(s*delta) < phi  <=>  2 * round(bound * 2^53) * beta^(s*delta) < phi * 2^53
        // (rounding the bound at f64 precision; exact for desk-scale bounds)
        let scaled_bound = BigUint::from((magnitude_bound * (1u64 << 53) as f64).round() as u64);
        let rhs = &self.phi << 53;
        let step = BigUint::from(self.beta).pow(self.delta);
        if step == BigUint::from(1u32) {
            // delta = 0: scaling never grows values, so either every depth
            // fits or none does
            return if BigUint::from(2u32) * scaled_bound < rhs {
                u32::MAX
            } else {
                0
            };
        }
        let mut lhs = BigUint::from(2u32) * scaled_bound * &step; // s = 1 term
        let mut s = 0u32;
        while lhs < rhs {
            s += 1;
            lhs *= &step;
        }
        s
    }

    /// Multiply an encoded value's residue by beta^(delta*levels), lifting it
    /// to a deeper scale without changing the value it denotes.
    pub fn upscale(&self, e: &Encoded, levels: u32) -> Encoded {
        let factor = BigUint::from(self.beta).pow(self.delta * levels);
        Encoded {
            residue: (&e.residue * factor) % &self.phi,
            scale: e.scale + levels,
        }
    }
}

/// Round half away from zero to the nearest integer.
pub fn round_half_away(x: f64) -> i64 {
    // f64::round already rounds half away from zero
    x.round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use proptest::prelude::*;

    fn code(beta: u32, gamma: u32, delta: u32, phi: u64) -> FixedPointCode {
        FixedPointCode::new(beta, gamma, delta, BigUint::from(phi)).unwrap()
    }

    #[test]
    fn grid_matches_definition_for_beta10_gamma1_delta1() {
        let c = code(10, 1, 1, 1000);
        // Q = {-10, -9.9, ..., 9.8, 9.9}
        assert_eq!(c.quantize(-10.0).unwrap(), -10.0);
        assert_eq!(c.quantize(9.9).unwrap(), 9.9);
        assert_eq!(c.quantize(10.0).unwrap(), 9.9); // top clamps one step down
        assert_eq!(c.quantize(0.0).unwrap(), 0.0);
        assert!((c.quantize(10.0).unwrap() - 10.0).abs() <= c.resolution() + 1e-12);
    }

    #[test]
    fn quantize_nearest_multiple() {
        let c = code(10, 1, 1, 1000);
        assert_eq!(c.quantize(1.23).unwrap(), 1.2);
        assert_eq!(c.quantize(1.25).unwrap(), 1.3); // half away from zero
        assert_eq!(c.quantize(-1.25).unwrap(), -1.3);
        assert!(c.quantize(10.3).is_err());
        assert!(c.quantize(f64::NAN).is_err());
    }

    #[test]
    fn encode_known_residues() {
        let c = code(10, 1, 1, 1000);
        assert_eq!(c.encode(1.23).unwrap().residue, BigUint::from(12u32));
        assert_eq!(c.encode(-0.5).unwrap().residue, BigUint::from(995u32));
        assert_eq!(c.encode(0.0).unwrap().residue, BigUint::from(0u32));
        assert_eq!(c.encode(1.23).unwrap().scale, 1);
    }

    #[test]
    fn decode_known_values() {
        let c = code(10, 1, 1, 1000);
        let e = Encoded {
            residue: BigUint::from(995u32),
            scale: 1,
        };
        assert_eq!(c.decode(&e), -0.5);
        let z = Encoded {
            residue: BigUint::from(0u32),
            scale: 1,
        };
        assert_eq!(c.decode(&z), 0.0);
    }

    #[test]
    fn max_scale_examples() {
        let c = code(10, 1, 1, 1_000_000);
        assert_eq!(c.max_scale(10.0), 4); // 2*10*10^4 < 10^6 <= 2*10*10^5
        let delta0 = FixedPointCode::new(10, 1, 0, BigUint::from(21u32)).unwrap();
        // delta = 0: products never grow, any depth fits once one does
        assert_eq!(delta0.max_scale(1.0), u32::MAX);
    }

    #[test]
    fn max_scale_zero_signals_no_product() {
        // phi=20, beta=10, delta=1, bound=1: 2*1*10 = 20 is not < 20 -> s=0.
        // The constructor would reject this phi, so probe the raw struct.
        let c2 = FixedPointCode {
            beta: 10,
            gamma: 1,
            delta: 1,
            phi: BigUint::from(20u32),
        };
        assert_eq!(c2.max_scale(1.0), 0);
    }

    #[test]
    fn max_scale_monotone_in_phi() {
        for phi in [1000u64, 2000, 4000, 8000, 1 << 40] {
            let c = code(10, 1, 1, phi);
            let c2 = code(10, 1, 1, phi * 2);
            assert!(c2.max_scale(10.0) >= c.max_scale(10.0));
        }
    }

    #[test]
    fn upscale_preserves_value() {
        let c = code(10, 1, 1, 1_000_000);
        let e = c.encode(-3.7).unwrap();
        let up = c.upscale(&e, 2);
        assert_eq!(up.scale, 3);
        assert_eq!(c.decode(&up), c.decode(&e));
    }

    #[test]
    fn phi_too_small_rejected() {
        let needed = BigUint::from(2u32) * BigUint::from(10u32).pow(2);
        let err = FixedPointCode::new(10, 1, 1, needed).unwrap_err();
        assert!(matches!(err, FixedPointError::PhiTooSmall { .. }));
    }

    proptest! {
        /// |decode(encode(x)) - x| <= beta^-delta over the full range.
        #[test]
        fn prop_roundtrip_error_bound(x in -10.0f64..10.0) {
            let c = code(10, 1, 1, 1000);
            let e = c.encode(x).unwrap();
            let back = c.decode(&e);
            prop_assert!((back - x).abs() <= c.resolution() + 1e-12);
        }

        /// Additive structure: residues add mod phi like quantized values add.
        #[test]
        fn prop_additive_structure(x in -4.9f64..4.9, y in -4.9f64..4.9) {
            let c = code(10, 1, 1, 1000);
            let ex = c.encode(x).unwrap();
            let ey = c.encode(y).unwrap();
            let sum = Encoded {
                residue: (&ex.residue + &ey.residue) % c.phi(),
                scale: 1,
            };
            let expect = c.quantize(x).unwrap() + c.quantize(y).unwrap();
            prop_assert!((c.decode(&sum) - expect).abs() < 1e-9);
        }

        /// Multiplicative structure: residue product decodes at scale 2 to the
        /// product of the quantized values.
        #[test]
        fn prop_multiplicative_structure(x in -9.9f64..9.9, y in -9.9f64..9.9) {
            let c = code(10, 1, 1, 1_000_000); // room for scale-2 products
            let ex = c.encode(x).unwrap();
            let ey = c.encode(y).unwrap();
            let prod = Encoded {
                residue: (&ex.residue * &ey.residue) % c.phi(),
                scale: 2,
            };
            let expect = c.quantize(x).unwrap() * c.quantize(y).unwrap();
            prop_assert!((c.decode(&prod) - expect).abs() < 1e-9);
        }

        /// encode_at_scale(x, s) equals upscale(encode(x), s-1).
        #[test]
        fn prop_encode_at_scale_consistent(x in -9.9f64..9.9, s in 1u32..4) {
            let c = code(10, 1, 1, 1u64 << 50);
            let direct = c.encode_at_scale(x, s).unwrap();
            let lifted = c.upscale(&c.encode(x).unwrap(), s - 1);
            prop_assert_eq!(direct, lifted);
        }
    }

    #[test]
    fn max_scale_huge_phi_does_not_overflow() {
        let phi = BigUint::one() << 2048;
        let c = FixedPointCode::new(10, 1, 1, phi).unwrap();
        let s = c.max_scale(10.0);
        // 2*10*10^s < 2^2048 -> s ~ (2048*log10(2) - log10(20)) ~ 615
        assert!(s > 600 && s < 620, "s = {s}");
    }
}
