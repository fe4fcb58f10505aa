//! Two-party subprotocols over Paillier: oblivious transfer, private
//! comparison, encrypted max/min, and key switching. These are the building
//! blocks the two-cloud optimization pipeline composes.
//!
//! Each protocol is written as a sequential orchestration of both parties.
//! Party-local state stays in party-local variables; everything that
//! crosses between them goes through a [`Wire`] as serialized bytes, so a
//! transcript records exactly what each party could observe. Party 1 is
//! always the evaluating cloud (no secret key), party 2 the keyholder.
//!
//! Honest-but-curious model throughout: parties follow the protocol and
//! the privacy claims are statistical statements about their transcripts,
//! checked by uniformity tests at small moduli.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use thiserror::Error;

use crate::modmath::{centered_lift, Rng};
use crate::paillier::{Ciphertext, PaillierError, PaillierKeypair, PaillierPublicKey};

#[derive(Debug, Error)]
pub enum SmpcError {
    #[error("protocol abort: {0}")]
    ProtocolAbort(String),
    #[error("precision overflow: {0}")]
    PrecisionOverflow(String),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}

/// One recorded protocol message.
#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub from_p1: bool,
    pub label: &'static str,
    pub bytes: Vec<u8>,
    pub round: u32,
}

/// Every cross-party message of one or more protocol runs, in order.
/// Round indices are strictly increasing: the protocols here are strictly
/// sequential ping-pong, so one message is one communication round.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    next_round: u32,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn rounds(&self) -> u32 {
        self.next_round
    }
}

/// Message channel between the two parties. Implementations must deliver
/// reliably and in order; the return value is the message's round index.
pub trait Wire {
    fn send(&mut self, from_p1: bool, label: &'static str, payload: &[u8]) -> u32;
}

impl Wire for Transcript {
    fn send(&mut self, from_p1: bool, label: &'static str, payload: &[u8]) -> u32 {
        let round = self.next_round;
        self.entries.push(TranscriptEntry {
            from_p1,
            label,
            bytes: payload.to_vec(),
            round,
        });
        self.next_round += 1;
        round
    }
}

/// Fixed-width big-endian encoding for masked residues mod P.
fn residue_bytes(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= width, "residue wider than its field");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

fn modulus_width(pk: &PaillierPublicKey) -> usize {
    pk.modulus().bits().div_ceil(8) as usize
}

/// 1-of-2 oblivious transfer. The sender (party 1) holds z0, z1 in [0, P);
/// the receiver (party 2) holds a choice bit and the Paillier keypair. The
/// receiver ends with z_tau and must learn nothing about the other value;
/// the sender must not learn tau.
///
/// Wire sequence: two one-time-pad masked values sender -> receiver, then
/// encryptions of the chosen masked value and of the bit back to the
/// sender, who assembles c = Enc(m_tau) + (tau - 1) * r0 - tau * r1
/// homomorphically, rerandomizes, and returns it for decryption. The
/// rerandomization is load-bearing: without it the receiver could divide
/// nonces out of c and recover r0 - r1, hence the unchosen value.
pub fn oblivious_transfer(
    z0: &BigUint,
    z1: &BigUint,
    tau: bool,
    receiver_key: &PaillierKeypair,
    rng_sender: &mut Rng,
    rng_receiver: &mut Rng,
    wire: &mut dyn Wire,
) -> Result<BigUint, SmpcError> {
    let pk = receiver_key.public();
    let modulus = pk.modulus();
    if z0 >= modulus || z1 >= modulus {
        return Err(SmpcError::ProtocolAbort(
            "transfer values must be residues mod P".into(),
        ));
    }
    let width = modulus_width(pk);

    // party 1: mask both values with fresh pads
    let r0 = rng_sender.below(modulus);
    let r1 = rng_sender.below(modulus);
    let m0 = (z0 + &r0) % modulus;
    let m1 = (z1 + &r1) % modulus;
    wire.send(true, "ot/masked0", &residue_bytes(&m0, width));
    wire.send(true, "ot/masked1", &residue_bytes(&m1, width));

    // party 2: encrypt the chosen masked value and the bit
    let chosen = if tau { &m1 } else { &m0 };
    let enc_chosen = pk.enc(chosen, rng_receiver)?;
    let enc_tau = pk.enc(&BigUint::from(tau as u32), rng_receiver)?;
    wire.send(false, "ot/enc-chosen", &pk.serialize(&enc_chosen)?);
    wire.send(false, "ot/enc-bit", &pk.serialize(&enc_tau)?);

    // party 1: c = m_tau + (tau - 1) r0 - tau r1, which unmasks to z_tau
    let tau_minus_one = pk.add_const(&enc_tau, &BigInt::from(-1))?;
    let t0 = pk.mul_const(&tau_minus_one, &BigInt::from_biguint(num_bigint::Sign::Plus, r0))?;
    let t1 = pk.mul_const(&enc_tau, &-BigInt::from_biguint(num_bigint::Sign::Plus, r1))?;
    let c = pk.add(&pk.add(&enc_chosen, &t0)?, &t1)?;
    let c = pk.rerandomize(&c, rng_sender)?;
    wire.send(true, "ot/result", &pk.serialize(&c)?);

    // party 2: decrypt
    Ok(receiver_key.dec(&c)?)
}

/// Parameters of the comparison domain: operands are `bit_len`-bit
/// non-negative integers, blinded with `kappa` extra statistical bits.
#[derive(Debug, Clone, Copy)]
pub struct CompareParams {
    pub bit_len: u32,
    pub kappa: u32,
}

impl CompareParams {
    /// The blinded difference 2^l + b - a + r must stay below P as an
    /// integer, which 2^(l+kappa+1) < P guarantees.
    pub fn check_headroom(&self, modulus: &BigUint) -> Result<(), SmpcError> {
        let needed = BigUint::one() << (self.bit_len + self.kappa + 1);
        if needed >= *modulus {
            return Err(SmpcError::PrecisionOverflow(format!(
                "comparison needs 2^{} < P, modulus has only {} bits",
                self.bit_len + self.kappa + 1,
                modulus.bits()
            )));
        }
        Ok(())
    }
}

/// Outcome of a private comparison: the order bit ends up at party 2, the
/// blinding offset stays at party 1. Neither party holds both.
#[derive(Debug)]
pub struct ComparisonOutcome {
    /// Party 2's output: true iff a <= b.
    pub tau: bool,
    /// Party 1's retained blinding value r (never sent in full).
    pub p1_blind: BigUint,
}

/// Private comparison of two encrypted l-bit values. Party 1 holds [[a]]
/// and [[b]] under party 2's key; party 2 ends up with tau = (a <= b) and
/// party 1 with nothing new.
///
/// Derivation: let D = b - a + 2^l, an (l+1)-bit positive integer whose
/// top bit is exactly the answer. Party 1 blinds it additively, [[D + r]],
/// with r uniform below 2^(l+kappa); party 2 decrypts z = D + r over the
/// integers (headroom precondition). Splitting both at bit l,
///     tau = (z div 2^l) - (r div 2^l) - carry,
/// where carry = [z mod 2^l < r mod 2^l] is resolved by the bitwise
/// subprotocol below; party 1 then discloses r div 2^l, which reveals
/// nothing about r mod 2^l, and party 2 assembles tau.
///
/// Carry subprotocol on the private l-bit residues x = r mod 2^l (party 1)
/// and y = z mod 2^l (party 2): party 2 sends bit encryptions [[y_i]];
/// party 1 homomorphically forms, per bit,
///     c_i = y_i - x_i + 1 + 3 * sum_{j>i} (x_j XOR y_j),
/// which is zero iff i is the highest bit where x = 1, y = 0; multiplying
/// each by a fresh nonzero blind and shuffling lets party 2 learn only
/// whether some c_i is zero, i.e. the bit [x > y] = carry.
///
/// Every message is one round, so rounds grow as 2l + 2: linear in l.
pub fn private_compare(
    a: &Ciphertext,
    b: &Ciphertext,
    keypair: &PaillierKeypair,
    params: &CompareParams,
    rng1: &mut Rng,
    rng2: &mut Rng,
    wire: &mut dyn Wire,
) -> Result<ComparisonOutcome, SmpcError> {
    let pk = keypair.public();
    let modulus = pk.modulus();
    params.check_headroom(modulus)?;
    let l = params.bit_len;
    let width = modulus_width(pk);

    // party 1: blind the shifted difference
    let r = rng1.bits((l + params.kappa) as u64);
    let shift = BigUint::one() << l;
    let minus_a = pk.mul_const(a, &BigInt::from(-1))?;
    let d = pk.add(b, &minus_a)?;
    let d = pk.add_const(&d, &BigInt::from_biguint(num_bigint::Sign::Plus, &shift + &r))?;
    let d = pk.rerandomize(&d, rng1)?;
    wire.send(true, "cmp/blinded-diff", &pk.serialize(&d)?);

    // party 2: decrypt z = D + r and expose z's low bits, encrypted
    let z = keypair.dec(&d)?;
    let z_low = &z % &shift;
    let z_high: BigUint = &z >> l;
    let mut enc_bits = Vec::with_capacity(l as usize);
    for i in 0..l {
        let bit = (&z_low >> i) & BigUint::one();
        let c = pk.enc(&bit, rng2)?;
        wire.send(false, "cmp/bit", &pk.serialize(&c)?);
        enc_bits.push(c);
    }

    // party 1: per-bit DGK values on x = r mod 2^l vs y = z mod 2^l
    let r_low = &r % &shift;
    let r_high: BigUint = &r >> l;
    let x_bit = |i: u32| -> bool { ((&r_low >> i) & BigUint::one()).is_one() };

    let mut blinded = Vec::with_capacity(l as usize);
    for i in 0..l {
        // c_i = y_i - x_i + 1 + 3 * sum_{j>i} (x_j XOR y_j); zero exactly
        // when i is the highest bit position with x_i = 1, y_i = 0
        let mut ci = pk.add_const(&enc_bits[i as usize], &BigInt::from(1 - x_bit(i) as i64))?;
        let mut xor_sum: Option<Ciphertext> = None;
        for j in (i + 1)..l {
            // x_j XOR y_j: equals y_j when x_j = 0, 1 - y_j when x_j = 1
            let xj = x_bit(j);
            let term = if xj {
                let neg = pk.mul_const(&enc_bits[j as usize], &BigInt::from(-1))?;
                pk.add_const(&neg, &BigInt::from(1))?
            } else {
                enc_bits[j as usize].clone()
            };
            xor_sum = Some(match xor_sum {
                None => term,
                Some(s) => pk.add(&s, &term)?,
            });
        }
        if let Some(s) = xor_sum {
            let tripled = pk.mul_const(&s, &BigInt::from(3))?;
            ci = pk.add(&ci, &tripled)?;
        }
        let rho = rng1.unit(modulus);
        let masked = pk.mul_const(&ci, &BigInt::from_biguint(num_bigint::Sign::Plus, rho))?;
        blinded.push(pk.rerandomize(&masked, rng1)?);
    }
    // shuffle so the zero's position reveals nothing about the bit index
    for i in (1..blinded.len()).rev() {
        let j = rng1
            .below(&BigUint::from(i as u64 + 1))
            .try_into()
            .map(|v: u64| v as usize)
            .expect("index fits");
        blinded.swap(i, j);
    }
    for c in &blinded {
        wire.send(true, "cmp/dgk", &pk.serialize(c)?);
    }
    wire.send(true, "cmp/blind-high", &residue_bytes(&r_high, width));

    // party 2: carry = [z_low < r_low] = [some DGK value is zero]
    let mut carry = false;
    for c in &blinded {
        if keypair.dec(c)?.is_zero() {
            carry = true;
        }
    }
    let tau_val = BigInt::from_biguint(num_bigint::Sign::Plus, z_high)
        - BigInt::from_biguint(num_bigint::Sign::Plus, r_high.clone())
        - BigInt::from(carry as i64);
    let tau = if tau_val.is_one() {
        true
    } else if tau_val.is_zero() {
        false
    } else {
        return Err(SmpcError::ProtocolAbort(format!(
            "comparison assembled {tau_val}, expected a bit: operands exceeded {l} bits"
        )));
    };
    Ok(ComparisonOutcome {
        tau,
        p1_blind: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Extreme {
    Max,
    Min,
}

/// Element-wise encrypted max against a bound vector; see [`encrypted_max`].
fn encrypted_extreme(
    which: Extreme,
    values: &[Ciphertext],
    bounds: &[Ciphertext],
    keypair: &PaillierKeypair,
    params: &CompareParams,
    rng1: &mut Rng,
    rng2: &mut Rng,
    wire: &mut dyn Wire,
) -> Result<Vec<Ciphertext>, SmpcError> {
    if values.len() != bounds.len() {
        return Err(SmpcError::ProtocolAbort(
            "operand vectors differ in length".into(),
        ));
    }
    let pk = keypair.public();
    params.check_headroom(pk.modulus())?;
    let half = BigInt::one() << (params.bit_len - 1);
    let mut out = Vec::with_capacity(values.len());

    for (v, bound) in values.iter().zip(bounds) {
        if v.scale != bound.scale {
            return Err(PaillierError::ScaleMismatch(v.scale, bound.scale).into());
        }
        // party 1: recenter the signed operands into [0, 2^l)
        let v_pos = pk.add_const(v, &half)?;
        let b_pos = pk.add_const(bound, &half)?;
        // random order swap: the comparison bit party 2 sees is independent
        // of which operand is the iterate and which the bound
        let swap = rng1.next_u64() & 1 == 1;
        let (first, second) = if swap { (&b_pos, &v_pos) } else { (&v_pos, &b_pos) };

        let cmp = private_compare(first, second, keypair, params, rng1, rng2, wire)?;

        // party 1: mask both candidates with fresh pads
        let r = rng1.below(pk.modulus());
        let s = rng1.below(pk.modulus());
        let first_masked =
            pk.add_const(first, &BigInt::from_biguint(num_bigint::Sign::Plus, r.clone()))?;
        let second_masked =
            pk.add_const(second, &BigInt::from_biguint(num_bigint::Sign::Plus, s.clone()))?;
        wire.send(true, "sel/masked-a", &pk.serialize(&first_masked)?);
        wire.send(true, "sel/masked-b", &pk.serialize(&second_masked)?);

        // party 2: tau = (first <= second); pick the requested extreme and
        // return it freshly encrypted together with the encrypted bit
        let pick_second = match which {
            Extreme::Max => cmp.tau,
            Extreme::Min => !cmp.tau,
        };
        let chosen = if pick_second {
            keypair.dec(&second_masked)?
        } else {
            keypair.dec(&first_masked)?
        };
        let enc_chosen = pk.enc_with_nonce(&chosen, &rng2.unit(pk.modulus_squared()), v.scale)?;
        let enc_tau = pk.enc_with_nonce(
            &BigUint::from(cmp.tau as u32),
            &rng2.unit(pk.modulus_squared()),
            v.scale,
        )?;
        wire.send(false, "sel/choice", &pk.serialize(&enc_chosen)?);
        wire.send(false, "sel/bit", &pk.serialize(&enc_tau)?);

        // party 1: strip whichever mask the choice carried, using only the
        // encrypted bit. For max the chosen value is (second + s) when
        // tau = 1 and (first + r) when tau = 0:
        //   result = chosen + r (tau - 1) - s tau
        // and for min the selector is inverted:
        //   result = chosen - r tau + s (tau - 1)
        let r_int = BigInt::from_biguint(num_bigint::Sign::Plus, r);
        let s_int = BigInt::from_biguint(num_bigint::Sign::Plus, s);
        let tau_minus_one = pk.add_const(&enc_tau, &BigInt::from(-1))?;
        let unmasked = match which {
            Extreme::Max => {
                let t0 = pk.mul_const(&tau_minus_one, &r_int)?;
                let t1 = pk.mul_const(&enc_tau, &-s_int)?;
                pk.add(&pk.add(&enc_chosen, &t0)?, &t1)?
            }
            Extreme::Min => {
                let t0 = pk.mul_const(&enc_tau, &-r_int)?;
                let t1 = pk.mul_const(&tau_minus_one, &s_int)?;
                pk.add(&pk.add(&enc_chosen, &t0)?, &t1)?
            }
        };
        // undo the recentering shift
        out.push(pk.add_const(&unmasked, &(-&half))?);
    }
    Ok(out)
}

/// Element-wise max(values, floor) computed under party 2's key without
/// either party seeing the operands. Operands encode signed values via the
/// centered lift at a shared scale; their magnitudes must fit below
/// 2^(bit_len - 1). Party 1 ends with fresh encryptions of the maxima;
/// party 2 observes only order bits of randomly swapped operand pairs and
/// uniformly masked residues.
pub fn encrypted_max(
    values: &[Ciphertext],
    floor: &[Ciphertext],
    keypair: &PaillierKeypair,
    params: &CompareParams,
    rng1: &mut Rng,
    rng2: &mut Rng,
    wire: &mut dyn Wire,
) -> Result<Vec<Ciphertext>, SmpcError> {
    encrypted_extreme(Extreme::Max, values, floor, keypair, params, rng1, rng2, wire)
}

/// Element-wise min(values, ceiling); the mirror image of [`encrypted_max`].
pub fn encrypted_min(
    values: &[Ciphertext],
    ceiling: &[Ciphertext],
    keypair: &PaillierKeypair,
    params: &CompareParams,
    rng1: &mut Rng,
    rng2: &mut Rng,
    wire: &mut dyn Wire,
) -> Result<Vec<Ciphertext>, SmpcError> {
    encrypted_extreme(Extreme::Min, values, ceiling, keypair, params, rng1, rng2, wire)
}

/// Move a ciphertext from party 2's key to a third key. Party 1 masks
/// additively, party 2 decrypts the masked value (uniform, so it learns
/// nothing) and re-encrypts it under the target key, party 1 subtracts the
/// mask there.
///
/// The masked value wraps mod the source modulus at most once, so the
/// plaintext under the target key is u - w * P_src for w in {0, 1}. The
/// target modulus must exceed twice the source modulus so that
/// [`switched_residue`] (centered lift, then reduction mod the source
/// modulus) recovers u unambiguously after decryption.
pub fn key_switch(
    c: &Ciphertext,
    holder: &PaillierKeypair,
    target: &PaillierPublicKey,
    rng1: &mut Rng,
    rng2: &mut Rng,
    wire: &mut dyn Wire,
) -> Result<Ciphertext, SmpcError> {
    let src = holder.public();
    if *target.modulus() <= src.modulus() * 2u32 {
        return Err(SmpcError::ProtocolAbort(format!(
            "target modulus ({} bits) must exceed twice the source modulus ({} bits)",
            target.modulus().bits(),
            src.modulus().bits()
        )));
    }

    // party 1: one-time-pad the plaintext
    let t = rng1.below(src.modulus());
    let masked = src.add_const(c, &BigInt::from_biguint(num_bigint::Sign::Plus, t.clone()))?;
    let masked = src.rerandomize(&masked, rng1)?;
    wire.send(true, "switch/masked", &src.serialize(&masked)?);

    // party 2: decrypt (sees only u + t mod P_src) and re-encrypt
    let m = holder.dec(&masked)?;
    let under_target = target.enc_with_nonce(&m, &rng2.unit(target.modulus_squared()), c.scale)?;
    wire.send(false, "switch/reenc", &target.serialize(&under_target)?);

    // party 1: subtract the mask under the target key
    let result =
        target.add_const(&under_target, &-BigInt::from_biguint(num_bigint::Sign::Plus, t))?;
    Ok(target.rerandomize(&result, rng1)?)
}

/// Recover the original residue mod `source_modulus` from a decryption
/// under the key-switch target key: lift to a signed integer centered at
/// zero, then reduce. Valid whenever target modulus > 2 * source modulus.
pub fn switched_residue(
    decrypted: &BigUint,
    target_modulus: &BigUint,
    source_modulus: &BigUint,
) -> BigUint {
    let lifted = centered_lift(decrypted, target_modulus);
    crate::modmath::signed_mod(&lifted, source_modulus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FixedPointCode;
    use crate::modmath::Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn tiny_key() -> PaillierKeypair {
        PaillierKeypair::from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).unwrap()
    }

    // P = 241 * 251 = 60491 > 2^(4+8+1): enough headroom for l=4, kappa=8
    fn small_key() -> PaillierKeypair {
        PaillierKeypair::from_primes(&BigUint::from(241u32), &BigUint::from(251u32)).unwrap()
    }

    fn medium_key() -> PaillierKeypair {
        let mut rng = Rng::from_seed(0xaa);
        PaillierKeypair::keygen(24, &mut rng) // P has ~48 bits
    }

    #[test]
    fn ot_matches_direct_selection_exhaustively() {
        let kp = tiny_key();
        let mut rng1 = Rng::from_seed(1);
        let mut rng2 = Rng::from_seed(2);
        for z0 in 0u32..10 {
            for z1 in 0u32..10 {
                for tau in [false, true] {
                    let mut wire = Transcript::new();
                    let got = oblivious_transfer(
                        &BigUint::from(z0),
                        &BigUint::from(z1),
                        tau,
                        &kp,
                        &mut rng1,
                        &mut rng2,
                        &mut wire,
                    )
                    .unwrap();
                    let want = if tau { z1 } else { z0 };
                    assert_eq!(got, BigUint::from(want), "z0={z0} z1={z1} tau={tau}");
                    assert_eq!(wire.entries().len(), 5);
                }
            }
        }
    }

    #[test]
    fn ot_known_case_and_equal_values() {
        let kp = tiny_key();
        let mut rng1 = Rng::from_seed(3);
        let mut rng2 = Rng::from_seed(4);
        let mut wire = Transcript::new();
        let got = oblivious_transfer(
            &BigUint::from(4u32),
            &BigUint::from(9u32),
            true,
            &kp,
            &mut rng1,
            &mut rng2,
            &mut wire,
        )
        .unwrap();
        assert_eq!(got, BigUint::from(9u32));

        for tau in [false, true] {
            let mut wire = Transcript::new();
            let got = oblivious_transfer(
                &BigUint::from(6u32),
                &BigUint::from(6u32),
                tau,
                &kp,
                &mut rng1,
                &mut rng2,
                &mut wire,
            )
            .unwrap();
            assert_eq!(got, BigUint::from(6u32));
        }
    }

    #[test]
    fn ot_sender_view_is_uniformly_masked() {
        // the receiver-visible masked values are one-time-padded: for fixed
        // inputs their distribution over runs is uniform mod P
        let kp = tiny_key();
        let mut rng1 = Rng::from_seed(5);
        let mut rng2 = Rng::from_seed(6);
        let mut counts = vec![0u64; 35];
        let runs = 21_000;
        for _ in 0..runs {
            let mut wire = Transcript::new();
            oblivious_transfer(
                &BigUint::from(13u32),
                &BigUint::from(27u32),
                false,
                &kp,
                &mut rng1,
                &mut rng2,
                &mut wire,
            )
            .unwrap();
            let m0 = BigUint::from_bytes_be(&wire.entries()[0].bytes);
            counts[u64::try_from(m0).unwrap() as usize] += 1;
        }
        let expected = runs as f64 / 35.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let crit = ChiSquared::new(34.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 = {stat:.1}, critical = {crit:.1}");
    }

    #[test]
    fn ot_rejects_out_of_range_values() {
        let kp = tiny_key();
        let mut rng1 = Rng::from_seed(7);
        let mut rng2 = Rng::from_seed(8);
        let mut wire = Transcript::new();
        assert!(matches!(
            oblivious_transfer(
                &BigUint::from(35u32),
                &BigUint::from(0u32),
                false,
                &kp,
                &mut rng1,
                &mut rng2,
                &mut wire,
            ),
            Err(SmpcError::ProtocolAbort(_))
        ));
    }

    #[test]
    fn compare_exhaustive_four_bit_domain() {
        let kp = small_key();
        let params = CompareParams {
            bit_len: 4,
            kappa: 8,
        };
        let mut rng1 = Rng::from_seed(9);
        let mut rng2 = Rng::from_seed(10);
        for a in 0u32..16 {
            for b in 0u32..16 {
                let mut wire = Transcript::new();
                let ca = kp.public().enc(&BigUint::from(a), &mut rng1).unwrap();
                let cb = kp.public().enc(&BigUint::from(b), &mut rng1).unwrap();
                let out =
                    private_compare(&ca, &cb, &kp, &params, &mut rng1, &mut rng2, &mut wire)
                        .unwrap();
                assert_eq!(out.tau, a <= b, "a={a} b={b}");
                assert_eq!(wire.entries().len() as u32, 2 * params.bit_len + 2);
            }
        }
    }

    #[test]
    fn compare_rounds_grow_linearly_in_bit_length() {
        let kp = medium_key();
        let mut rng1 = Rng::from_seed(11);
        let mut rng2 = Rng::from_seed(12);
        let mut rounds = Vec::new();
        for l in [4u32, 8, 16] {
            let params = CompareParams {
                bit_len: l,
                kappa: 8,
            };
            let mut wire = Transcript::new();
            let a = (BigUint::one() << l) - 2u32;
            let b = (BigUint::one() << l) - 1u32;
            let ca = kp.public().enc(&a, &mut rng1).unwrap();
            let cb = kp.public().enc(&b, &mut rng1).unwrap();
            let out =
                private_compare(&ca, &cb, &kp, &params, &mut rng1, &mut rng2, &mut wire).unwrap();
            assert!(out.tau);
            rounds.push(wire.rounds());
        }
        assert_eq!(rounds, vec![10, 18, 34]); // 2l + 2
        assert_eq!(rounds[2] - rounds[1], 2 * (rounds[1] - rounds[0]));
    }

    #[test]
    fn compare_headroom_violation_detected() {
        let kp = tiny_key();
        let params = CompareParams {
            bit_len: 4,
            kappa: 8,
        };
        let mut rng1 = Rng::from_seed(13);
        let mut rng2 = Rng::from_seed(14);
        let mut wire = Transcript::new();
        let ca = kp.public().enc(&BigUint::from(3u32), &mut rng1).unwrap();
        let cb = kp.public().enc(&BigUint::from(5u32), &mut rng1).unwrap();
        assert!(matches!(
            private_compare(&ca, &cb, &kp, &params, &mut rng1, &mut rng2, &mut wire),
            Err(SmpcError::PrecisionOverflow(_))
        ));
    }

    #[test]
    fn compare_blinded_diff_is_fresh_looking() {
        // party 2's first observation z = D + r: its low l bits are exactly
        // uniform because r's low bits are an independent one-time pad
        let kp = small_key();
        let params = CompareParams {
            bit_len: 4,
            kappa: 8,
        };
        let mut rng1 = Rng::from_seed(15);
        let mut rng2 = Rng::from_seed(16);
        let mut counts = vec![0u64; 16];
        let runs = 16_000;
        for _ in 0..runs {
            let mut wire = Transcript::new();
            let ca = kp.public().enc(&BigUint::from(11u32), &mut rng1).unwrap();
            let cb = kp.public().enc(&BigUint::from(6u32), &mut rng1).unwrap();
            private_compare(&ca, &cb, &kp, &params, &mut rng1, &mut rng2, &mut wire).unwrap();
            let d = kp
                .public()
                .deserialize(&wire.entries()[0].bytes)
                .unwrap();
            let z = kp.dec(&d).unwrap();
            counts[u64::try_from(z % 16u32).unwrap() as usize] += 1;
        }
        let expected = runs as f64 / 16.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let crit = ChiSquared::new(15.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 = {stat:.1}, critical = {crit:.1}");
    }

    fn enc_signed(
        kp: &PaillierKeypair,
        code: &FixedPointCode,
        v: f64,
        scale: u32,
        rng: &mut Rng,
    ) -> Ciphertext {
        let e = code.encode_at_scale(v, scale).unwrap();
        kp.public()
            .enc_with_nonce(&e.residue, &rng.unit(kp.public().modulus_squared()), scale)
            .unwrap()
    }

    #[test]
    fn max_and_min_against_plaintext_oracle() {
        let kp = medium_key();
        let code = FixedPointCode::new(10, 1, 1, kp.modulus().clone()).unwrap();
        let params = CompareParams {
            bit_len: 12, // residues at scale 1 stay below 100 < 2^11
            kappa: 8,
        };
        let mut rng1 = Rng::from_seed(17);
        let mut rng2 = Rng::from_seed(18);
        let mut trial_rng = Rng::from_seed(19);
        for _ in 0..150 {
            let raw = |r: &mut Rng| (r.next_u64() % 199) as f64 / 10.0 - 9.9;
            let v = raw(&mut trial_rng);
            let f = raw(&mut trial_rng);
            let cv = enc_signed(&kp, &code, v, 1, &mut rng2);
            let cf = enc_signed(&kp, &code, f, 1, &mut rng2);
            let mut wire = Transcript::new();
            let maxed = encrypted_max(
                &[cv.clone()],
                &[cf.clone()],
                &kp,
                &params,
                &mut rng1,
                &mut rng2,
                &mut wire,
            )
            .unwrap();
            let got = code.decode(&kp.dec_encoded(&maxed[0]).unwrap());
            let want = code.quantize(v).unwrap().max(code.quantize(f).unwrap());
            assert!((got - want).abs() < 1e-12, "max({v}, {f}): {got} vs {want}");

            let mined = encrypted_min(
                &[cv],
                &[cf],
                &kp,
                &params,
                &mut rng1,
                &mut rng2,
                &mut wire,
            )
            .unwrap();
            let got = code.decode(&kp.dec_encoded(&mined[0]).unwrap());
            let want = code.quantize(v).unwrap().min(code.quantize(f).unwrap());
            assert!((got - want).abs() < 1e-12, "min({v}, {f}): {got} vs {want}");
        }
    }

    #[test]
    fn max_saturation_and_interior_cases() {
        let kp = medium_key();
        let code = FixedPointCode::new(10, 1, 1, kp.modulus().clone()).unwrap();
        let params = CompareParams {
            bit_len: 12,
            kappa: 8,
        };
        let mut rng1 = Rng::from_seed(20);
        let mut rng2 = Rng::from_seed(21);
        let mut wire = Transcript::new();

        // value below the floor: saturation engages
        let cv = enc_signed(&kp, &code, -2.0, 1, &mut rng2);
        let cf = enc_signed(&kp, &code, 0.0, 1, &mut rng2);
        let r = encrypted_max(&[cv], &[cf], &kp, &params, &mut rng1, &mut rng2, &mut wire)
            .unwrap();
        assert_eq!(code.decode(&kp.dec_encoded(&r[0]).unwrap()), 0.0);

        // interior point: passes through
        let cv = enc_signed(&kp, &code, 0.5, 1, &mut rng2);
        let cf = enc_signed(&kp, &code, -1.0, 1, &mut rng2);
        let r = encrypted_max(&[cv], &[cf], &kp, &params, &mut rng1, &mut rng2, &mut wire)
            .unwrap();
        assert_eq!(code.decode(&kp.dec_encoded(&r[0]).unwrap()), 0.5);
    }

    #[test]
    fn max_works_at_scale_two() {
        let kp = medium_key();
        let code = FixedPointCode::new(10, 1, 1, kp.modulus().clone()).unwrap();
        let params = CompareParams {
            bit_len: 16, // scale-2 residues stay below 10^4
            kappa: 8,
        };
        let mut rng1 = Rng::from_seed(22);
        let mut rng2 = Rng::from_seed(23);
        let mut wire = Transcript::new();
        let cv = enc_signed(&kp, &code, -3.7, 2, &mut rng2);
        let cf = enc_signed(&kp, &code, -1.2, 2, &mut rng2);
        let r = encrypted_max(&[cv], &[cf], &kp, &params, &mut rng1, &mut rng2, &mut wire)
            .unwrap();
        let dec = kp.dec_encoded(&r[0]).unwrap();
        assert_eq!(dec.scale, 2);
        assert!((code.decode(&dec) + 1.2).abs() < 1e-12);
    }

    #[test]
    fn key_switch_end_to_end() {
        let src = tiny_key();
        let dst = PaillierKeypair::from_primes(&BigUint::from(11u32), &BigUint::from(13u32))
            .unwrap(); // 143 > 2 * 35
        let mut rng1 = Rng::from_seed(24);
        let mut rng2 = Rng::from_seed(25);
        for u in [12u32, 0, 34] {
            let mut wire = Transcript::new();
            let c = src.public().enc(&BigUint::from(u), &mut rng1).unwrap();
            let switched =
                key_switch(&c, &src, dst.public(), &mut rng1, &mut rng2, &mut wire).unwrap();
            let dec = dst.dec(&switched).unwrap();
            let recovered = switched_residue(&dec, dst.modulus(), src.modulus());
            assert_eq!(recovered, BigUint::from(u), "u = {u}");
        }
    }

    #[test]
    fn key_switch_preserves_scale() {
        let src = small_key();
        let mut rng = Rng::from_seed(26);
        let dst = PaillierKeypair::keygen(16, &mut rng);
        let mut rng1 = Rng::from_seed(27);
        let mut rng2 = Rng::from_seed(28);
        let mut wire = Transcript::new();
        let c = src
            .public()
            .enc_with_nonce(
                &BigUint::from(100u32),
                &rng1.unit(src.public().modulus_squared()),
                3,
            )
            .unwrap();
        let switched = key_switch(&c, &src, dst.public(), &mut rng1, &mut rng2, &mut wire).unwrap();
        assert_eq!(switched.scale, 3);
    }

    #[test]
    fn key_switch_requires_modulus_headroom() {
        let src = PaillierKeypair::from_primes(&BigUint::from(11u32), &BigUint::from(13u32))
            .unwrap();
        let dst = tiny_key(); // 35 < 2 * 143
        let mut rng1 = Rng::from_seed(29);
        let mut rng2 = Rng::from_seed(30);
        let mut wire = Transcript::new();
        let c = src.public().enc(&BigUint::from(5u32), &mut rng1).unwrap();
        assert!(matches!(
            key_switch(&c, &src, dst.public(), &mut rng1, &mut rng2, &mut wire),
            Err(SmpcError::ProtocolAbort(_))
        ));
    }

    #[test]
    fn key_switch_holder_view_is_uniform() {
        let src = tiny_key();
        let dst = PaillierKeypair::from_primes(&BigUint::from(11u32), &BigUint::from(13u32))
            .unwrap();
        let mut rng1 = Rng::from_seed(31);
        let mut rng2 = Rng::from_seed(32);
        let mut counts = vec![0u64; 35];
        let runs = 21_000;
        for _ in 0..runs {
            let mut wire = Transcript::new();
            let c = src.public().enc(&BigUint::from(12u32), &mut rng1).unwrap();
            key_switch(&c, &src, dst.public(), &mut rng1, &mut rng2, &mut wire).unwrap();
            let seen = src
                .dec(&src.public().deserialize(&wire.entries()[0].bytes).unwrap())
                .unwrap();
            counts[u64::try_from(seen).unwrap() as usize] += 1;
        }
        let expected = runs as f64 / 35.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let crit = ChiSquared::new(34.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 = {stat:.1}, critical = {crit:.1}");
    }
}
