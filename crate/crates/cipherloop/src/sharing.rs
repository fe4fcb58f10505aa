//! One-time-pad additive secret sharing over Z_phi.
//!
//! Two flavours are used by the controllers: (2,2) splitting (the two-cloud
//! linear scheme holds `c = z + r mod phi` on one cloud and `r` on the
//! other) and M-party shares of zero (the cooperative masks that cancel in
//! aggregation). Each share in isolation is uniform and carries no
//! information about the secret.

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

use crate::modmath::Rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SharingError {
    #[error("secret {0} is not a residue mod {1}")]
    MessageOutOfRange(BigUint, BigUint),
    #[error("share moduli differ: {0} vs {1}")]
    ModulusMismatch(BigUint, BigUint),
}

/// A single additive share: a residue tagged with its modulus and the index
/// of the party holding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub residue: BigUint,
    pub phi: BigUint,
    pub index: usize,
}

/// Split z into (c, r) with c = z + r mod phi and r uniform. Either share
/// alone is uniform on [0, phi).
pub fn split2(z: &BigUint, phi: &BigUint, rng: &mut Rng) -> Result<(Share, Share), SharingError> {
    if z >= phi {
        return Err(SharingError::MessageOutOfRange(z.clone(), phi.clone()));
    }
    let r = rng.below(phi);
    let c = (z + &r) % phi;
    Ok((
        Share {
            residue: c,
            phi: phi.clone(),
            index: 0,
        },
        Share {
            residue: r,
            phi: phi.clone(),
            index: 1,
        },
    ))
}

/// Recover z = c - r mod phi.
pub fn reconstruct(c: &Share, r: &Share) -> Result<BigUint, SharingError> {
    if c.phi != r.phi {
        return Err(SharingError::ModulusMismatch(c.phi.clone(), r.phi.clone()));
    }
    Ok((&c.residue + &c.phi - &r.residue) % &c.phi)
}

/// `count` residues, each marginally uniform, summing to 0 mod phi: the
/// first count-1 are independent uniform draws and the last is the negated
/// sum. Any strict subset is jointly uniform.
pub fn shares_of_zero(count: usize, phi: &BigUint, rng: &mut Rng) -> Vec<Share> {
    assert!(count >= 2, "shares_of_zero needs at least two parties");
    let mut shares = Vec::with_capacity(count);
    let mut sum = BigUint::zero();
    for index in 0..count - 1 {
        let r = rng.below(phi);
        sum = (&sum + &r) % phi;
        shares.push(Share {
            residue: r,
            phi: phi.clone(),
            index,
        });
    }
    let last = (phi - &sum) % phi;
    shares.push(Share {
        residue: last,
        phi: phi.clone(),
        index: count - 1,
    });
    shares
}
