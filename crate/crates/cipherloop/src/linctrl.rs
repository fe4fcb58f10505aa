//! Encrypted linear state feedback u = Kx, three ways: gains encrypted
//! multiplicatively (ElGamal) with decryption at the actuator, states
//! encrypted additively (Paillier) with plaintext gains at the cloud, and
//! additive secret sharing across two non-colluding clouds with no
//! encryption at all. A plaintext variant serves as the baseline and as
//! the positive control for the leakage audit.
//!
//! All variants quantize identically and run their integer arithmetic in
//! the same order, so each one must reproduce the fixed-point oracle
//! [`fixed_linear_step`] bit-exactly; the closed-loop plant itself always
//! integrates in double precision.

use nalgebra::{DMatrix, DVector};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::elgamal::{ElGamalCiphertext, ElGamalError, ElGamalKeypair};
use crate::fixedpoint::{Encoded, FixedPointCode, FixedPointError};
use crate::modmath::{centered_lift, signed_mod, Rng};
use crate::paillier::{PaillierError, PaillierKeypair};
use crate::sharing::split2;
use crate::simnet::{
    levels_payload, parse_levels, parse_residues, parse_wide_levels, residues_payload,
    wide_levels_payload, Bus, PartyId,
};

#[derive(Debug, Error)]
pub enum LinctrlError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state {value} at coordinate {coord} left the quantizer range at step {step}")]
    RangeViolation { step: u64, coord: usize, value: f64 },
    #[error("quantized zero cannot enter the multiplicative scheme without offset encoding")]
    ZeroEncoding,
    #[error("precision overflow: {0}")]
    PrecisionOverflow(String),
    #[error("product decode hit an impossible residue {0}")]
    MalformedProduct(BigInt),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    ElGamal(#[from] ElGamalError),
    #[error("trace parse: {0}")]
    TraceParse(String),
}

/// Homomorphic-operation counters. `hom_mul` is the ciphertext-ciphertext
/// product, `hom_mul_const` the plaintext-constant power, `hom_add` the
/// ciphertext addition.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCount {
    pub enc: u64,
    pub dec: u64,
    pub hom_mul: u64,
    pub hom_add: u64,
    pub hom_mul_const: u64,
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        self.enc += rhs.enc;
        self.dec += rhs.dec;
        self.hom_mul += rhs.hom_mul;
        self.hom_add += rhs.hom_add;
        self.hom_mul_const += rhs.hom_mul_const;
    }
}

/// Discrete-time plant x(k+1) = A x(k) + B u(k).
#[derive(Debug, Clone)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, x0: DVector<f64>) -> Result<Self, LinctrlError> {
        if a.nrows() != a.ncols() {
            return Err(LinctrlError::DimensionMismatch(format!(
                "A is {}x{}, must be square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(LinctrlError::DimensionMismatch(format!(
                "B has {} rows, A has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if x0.len() != a.nrows() {
            return Err(LinctrlError::DimensionMismatch(format!(
                "x0 has {} entries, A has {} rows",
                x0.len(),
                a.nrows()
            )));
        }
        Ok(LinearPlant { a, b, x0 })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Static feedback gain, m x n.
#[derive(Debug, Clone)]
pub struct GainMatrix {
    pub k: DMatrix<f64>,
}

impl GainMatrix {
    pub fn new(k: DMatrix<f64>) -> Self {
        GainMatrix { k }
    }

    /// Every entry must sit inside the quantizer range.
    pub fn check_range(&self, code: &FixedPointCode) -> Result<(), LinctrlError> {
        let mag = code.magnitude();
        for v in self.k.iter() {
            if v.abs() > mag {
                return Err(LinctrlError::PrecisionOverflow(format!(
                    "gain entry {v} exceeds the quantizer magnitude {mag}"
                )));
            }
        }
        Ok(())
    }

    /// Integer grid levels of all entries, row-major m x n.
    pub fn levels(&self, code: &FixedPointCode) -> Result<Vec<Vec<i64>>, LinctrlError> {
        (0..self.k.nrows())
            .map(|i| {
                (0..self.k.ncols())
                    .map(|j| code.level(self.k[(i, j)]).map_err(LinctrlError::from))
                    .collect()
            })
            .collect()
    }
}

/// Exact real-arithmetic feedback u = Kx: the reference all encrypted
/// variants are measured against (after quantization).
pub fn plain_linear_step(
    k: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>, LinctrlError> {
    if k.ncols() != x.len() {
        return Err(LinctrlError::DimensionMismatch(format!(
            "gain has {} columns, state has {} entries",
            k.ncols(),
            x.len()
        )));
    }
    Ok(k * x)
}

/// Fixed-point oracle: scale-2 integer levels of u = K x from scale-1
/// levels of gain and state, accumulated left to right. Every encrypted
/// path must reproduce these integers exactly.
pub fn fixed_linear_step(gain_levels: &[Vec<i64>], x_levels: &[i64]) -> Vec<i128> {
    gain_levels
        .iter()
        .map(|row| {
            assert_eq!(row.len(), x_levels.len(), "gain/state width mismatch");
            row.iter()
                .zip(x_levels)
                .map(|(&k, &x)| k as i128 * x as i128)
                .sum()
        })
        .collect()
}

/// Zero-safe multiplicative encoding. A quantized level g with |g| <= V
/// maps to its residue mod p when nonzero and to the public sentinel
/// Omega = V^2 + 1 when zero. Products then land in provably disjoint
/// ranges: |w| <= V^2 means both factors were nonzero (value w), w a
/// nonzero multiple of Omega up to Omega*V means one factor was zero, and
/// w = Omega^2 means both were. Requires p > 2 Omega^2.
#[derive(Debug, Clone)]
pub struct ZeroOffsetCode {
    v: i64,
    omega: BigInt,
    prime: BigUint,
    /// None disables the sentinel: zero becomes a hard error.
    enabled: bool,
}

impl ZeroOffsetCode {
    pub fn new(code: &FixedPointCode, prime: &BigUint, enabled: bool) -> Result<Self, LinctrlError> {
        let v = (code.beta() as i64)
            .checked_pow(code.gamma() + code.delta())
            .ok_or_else(|| LinctrlError::PrecisionOverflow("beta^(gamma+delta) overflows".into()))?;
        let omega = BigInt::from(v) * BigInt::from(v) + 1;
        let needed = if enabled {
            BigUint::from(2u32) * (&omega * &omega).to_biguint().expect("positive")
        } else {
            BigUint::from(2u32) * BigUint::from((v * v) as u64)
        };
        if *prime <= needed {
            return Err(LinctrlError::PrecisionOverflow(format!(
                "prime has {} bits, zero-safe products need more than {} bits",
                prime.bits(),
                needed.bits()
            )));
        }
        Ok(ZeroOffsetCode {
            v,
            omega,
            prime: prime.clone(),
            enabled,
        })
    }

    pub fn encode_level(&self, level: i64) -> Result<BigUint, LinctrlError> {
        assert!(level.abs() <= self.v, "level outside the quantizer grid");
        if level == 0 {
            if !self.enabled {
                return Err(LinctrlError::ZeroEncoding);
            }
            return Ok(self.omega.to_biguint().expect("positive"));
        }
        Ok(signed_mod(&BigInt::from(level), &self.prime))
    }

    /// Decode a product residue to the scale-2 integer level.
    pub fn decode_product(&self, w: &BigUint) -> Result<i128, LinctrlError> {
        let lifted = centered_lift(w, &self.prime);
        let v2 = BigInt::from(self.v) * BigInt::from(self.v);
        if lifted.abs() <= v2 {
            return Ok(lifted.to_i128().expect("fits by range check"));
        }
        if self.enabled {
            let (q, r) = lifted.div_rem(&self.omega);
            if r.is_zero() && !q.is_zero() && q.abs() <= BigInt::from(self.v) {
                return Ok(0); // exactly one zero factor
            }
            if lifted == &self.omega * &self.omega {
                return Ok(0); // both factors zero
            }
        }
        Err(LinctrlError::MalformedProduct(lifted))
    }
}

/// One closed-loop step as recorded in a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub x: Vec<f64>,
    pub u_enc: Vec<f64>,
    pub u_oracle: Vec<f64>,
    pub ops: OpCount,
    pub bytes: u64,
}

/// Closed-loop record: one row per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn ops_total(&self) -> OpCount {
        let mut total = OpCount::default();
        for row in &self.rows {
            total += row.ops;
        }
        total
    }

    /// Versioned CSV export. Float formatting uses Rust's shortest
    /// round-trip representation, so parse(to_csv()) is lossless.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# cipherloop-trace v1\n");
        if let Some(first) = self.rows.first() {
            out.push_str("step");
            for i in 0..first.x.len() {
                out.push_str(&format!(",x{i}"));
            }
            for i in 0..first.u_enc.len() {
                out.push_str(&format!(",u_enc{i}"));
            }
            for i in 0..first.u_oracle.len() {
                out.push_str(&format!(",u_oracle{i}"));
            }
            out.push_str(",enc,dec,hom_mul,hom_add,hom_mul_const,bytes\n");
        }
        for row in &self.rows {
            out.push_str(&row.step.to_string());
            for v in row.x.iter().chain(&row.u_enc).chain(&row.u_oracle) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push_str(&format!(
                ",{},{},{},{},{},{}\n",
                row.ops.enc,
                row.ops.dec,
                row.ops.hom_mul,
                row.ops.hom_add,
                row.ops.hom_mul_const,
                row.bytes
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Trace, LinctrlError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == "# cipherloop-trace v1" => {}
            other => {
                return Err(LinctrlError::TraceParse(format!(
                    "missing version header, found {other:?}"
                )))
            }
        }
        let header = lines
            .next()
            .ok_or_else(|| LinctrlError::TraceParse("missing column header".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let n = cols.iter().filter(|c| c.starts_with('x')).count();
        let m = cols.iter().filter(|c| c.starts_with("u_enc")).count();
        let expected = 1 + n + 2 * m + 6;
        if cols.len() != expected {
            return Err(LinctrlError::TraceParse(format!(
                "header has {} columns, expected {expected}",
                cols.len()
            )));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected {
                return Err(LinctrlError::TraceParse(format!(
                    "line {} has {} fields, expected {expected}",
                    lineno + 3,
                    fields.len()
                )));
            }
            let fe = |s: &str| -> Result<f64, LinctrlError> {
                s.parse()
                    .map_err(|e| LinctrlError::TraceParse(format!("bad float {s:?}: {e}")))
            };
            let ie = |s: &str| -> Result<u64, LinctrlError> {
                s.parse()
                    .map_err(|e| LinctrlError::TraceParse(format!("bad count {s:?}: {e}")))
            };
            let mut it = fields.iter();
            let step = ie(it.next().expect("checked width"))?;
            let x = it.by_ref().take(n).map(|s| fe(s)).collect::<Result<_, _>>()?;
            let u_enc = it.by_ref().take(m).map(|s| fe(s)).collect::<Result<_, _>>()?;
            let u_oracle = it.by_ref().take(m).map(|s| fe(s)).collect::<Result<_, _>>()?;
            let ops = OpCount {
                enc: ie(it.next().expect("width"))?,
                dec: ie(it.next().expect("width"))?,
                hom_mul: ie(it.next().expect("width"))?,
                hom_add: ie(it.next().expect("width"))?,
                hom_mul_const: ie(it.next().expect("width"))?,
            };
            let bytes = ie(it.next().expect("width"))?;
            rows.push(TraceRow {
                step,
                x,
                u_enc,
                u_oracle,
                ops,
                bytes,
            });
        }
        Ok(Trace { rows })
    }
}

/// Which pipeline computes the feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearScheme {
    /// Unencrypted baseline; also the leakage-audit positive control.
    Plain,
    /// Gains encrypted entrywise under the actuator's multiplicative key;
    /// the cloud multiplies, the actuator decrypts mn products.
    ElGamalLinear,
    /// States encrypted under the actuator's additive key; the cloud
    /// evaluates the full affine map, the actuator decrypts m values.
    PaillierLinear,
    /// States additively shared across two clouds that never talk to each
    /// other; the actuator subtracts the two result shares.
    TwoCloudLinear,
}

/// Everything a linear closed-loop run needs.
#[derive(Debug, Clone)]
pub struct LinearLoopConfig {
    pub scheme: LinearScheme,
    pub plant: LinearPlant,
    pub gain: GainMatrix,
    pub beta: u32,
    pub gamma: u32,
    pub delta: u32,
    /// Paillier: bits per prime. ElGamal: safe-prime bits. Two-cloud: the
    /// share modulus is 2^key_bits. Ignored for Plain.
    pub key_bits: u64,
    pub steps: u64,
    pub seed: u64,
    /// Multiplicative zero handling; disabling it makes a quantized zero a
    /// hard error (ElGamal scheme only).
    pub eg_zero_offset: bool,
    pub retain_payloads: bool,
}

impl LinearLoopConfig {
    pub fn new(scheme: LinearScheme, plant: LinearPlant, gain: GainMatrix) -> Self {
        LinearLoopConfig {
            scheme,
            plant,
            gain,
            beta: 10,
            gamma: 1,
            delta: 1,
            key_bits: 32,
            steps: 10,
            seed: 1,
            eg_zero_offset: true,
            retain_payloads: true,
        }
    }
}

enum Material {
    Plain,
    ElGamal {
        key: ElGamalKeypair,
        enc_gain: Vec<Vec<ElGamalCiphertext>>,
        zero_code: ZeroOffsetCode,
    },
    Paillier {
        key: PaillierKeypair,
        gain_enc: Vec<Vec<Encoded>>,
    },
    TwoCloud {
        phi: BigUint,
        width: usize,
        gain_res: Vec<Vec<BigUint>>,
    },
}

/// A running closed loop: plant state, crypto material, message bus.
pub struct LinearLoop {
    cfg: LinearLoopConfig,
    code: FixedPointCode,
    gain_levels: Vec<Vec<i64>>,
    material: Material,
    bus: Bus,
    x: DVector<f64>,
    sensor_rng: Rng,
    cloud_rng: Rng,
    step_index: u64,
}

impl LinearLoop {
    pub fn new(cfg: LinearLoopConfig) -> Result<Self, LinctrlError> {
        let n = cfg.plant.n();
        let m = cfg.plant.m();
        if cfg.gain.k.nrows() != m || cfg.gain.k.ncols() != n {
            return Err(LinctrlError::DimensionMismatch(format!(
                "gain is {}x{}, plant wants {m}x{n}",
                cfg.gain.k.nrows(),
                cfg.gain.k.ncols()
            )));
        }

        let mut bus = if cfg.retain_payloads {
            Bus::new()
        } else {
            Bus::without_payload_log()
        };
        let sensor_rng = Rng::substream(cfg.seed, PartyId::Sensor.substream());
        let cloud_rng = Rng::substream(cfg.seed, PartyId::Cloud(0).substream());
        let mut actuator_rng = Rng::substream(cfg.seed, PartyId::Actuator.substream());
        let mut trusted_rng = Rng::substream(cfg.seed, PartyId::TrustedEntity.substream());

        // the code's phi is fixed by the scheme's message space
        let (code, material) = match cfg.scheme {
            LinearScheme::Plain => {
                // phi is irrelevant; any comfortably large modulus works
                let code =
                    FixedPointCode::new(cfg.beta, cfg.gamma, cfg.delta, BigUint::one() << 64)?;
                (code, Material::Plain)
            }
            LinearScheme::ElGamalLinear => {
                let key = ElGamalKeypair::eg_keygen(cfg.key_bits, &mut actuator_rng);
                let code =
                    FixedPointCode::new(cfg.beta, cfg.gamma, cfg.delta, key.prime().clone())?;
                let zero_code = ZeroOffsetCode::new(&code, key.prime(), cfg.eg_zero_offset)?;
                let gain_levels = cfg.gain.levels(&code)?;
                // the trusted entity, not the actuator, provisions the
                // cloud with entrywise encrypted gains
                let mut enc_gain = Vec::with_capacity(m);
                for row in &gain_levels {
                    let mut enc_row = Vec::with_capacity(n);
                    for &g in row {
                        let msg = zero_code.encode_level(g)?;
                        let c = key.public().eg_enc(&msg, &mut trusted_rng)?;
                        bus.send(
                            PartyId::TrustedEntity,
                            PartyId::Cloud(0),
                            "setup/gain",
                            key.public().serialize(&c)?,
                        );
                        bus.recv(PartyId::TrustedEntity, PartyId::Cloud(0));
                        enc_row.push(c);
                    }
                    enc_gain.push(enc_row);
                }
                (
                    code,
                    Material::ElGamal {
                        key,
                        enc_gain,
                        zero_code,
                    },
                )
            }
            LinearScheme::PaillierLinear => {
                let key = PaillierKeypair::keygen(cfg.key_bits, &mut actuator_rng);
                let code =
                    FixedPointCode::new(cfg.beta, cfg.gamma, cfg.delta, key.modulus().clone())?;
                // one gain-state product per term, n summands: headroom for
                // scale 2 at magnitude n * beta^gamma
                if code.max_scale(n as f64 * code.magnitude()) < 2 {
                    return Err(LinctrlError::PrecisionOverflow(
                        "modulus too small for scale-2 feedback sums".into(),
                    ));
                }
                let gain_levels = cfg.gain.levels(&code)?;
                let gain_enc = gain_levels
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|&g| code.encode_level(&BigInt::from(g)))
                            .collect()
                    })
                    .collect();
                (code, Material::Paillier { key, gain_enc })
            }
            LinearScheme::TwoCloudLinear => {
                let phi = BigUint::one() << cfg.key_bits;
                let code = FixedPointCode::new(cfg.beta, cfg.gamma, cfg.delta, phi.clone())?;
                let v = code.scale_factor() * code.magnitude() as i64;
                let bound = BigUint::from(2u64 * n as u64) * BigUint::from((v * v) as u64);
                if phi <= bound {
                    return Err(LinctrlError::PrecisionOverflow(format!(
                        "share modulus 2^{} too small for {n}-term scale-2 sums",
                        cfg.key_bits
                    )));
                }
                let width = phi.bits().div_ceil(8) as usize;
                let gain_levels = cfg.gain.levels(&code)?;
                let gain_res: Vec<Vec<BigUint>> = gain_levels
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|&g| signed_mod(&BigInt::from(g), &phi))
                            .collect()
                    })
                    .collect();
                // both clouds receive the quantized gain
                for cloud in [PartyId::Cloud(0), PartyId::Cloud(1)] {
                    for row in &gain_res {
                        bus.send(
                            PartyId::TrustedEntity,
                            cloud,
                            "setup/gain",
                            residues_payload(row, width),
                        );
                        bus.recv(PartyId::TrustedEntity, cloud);
                    }
                }
                (
                    code,
                    Material::TwoCloud {
                        phi,
                        width,
                        gain_res,
                    },
                )
            }
        };

        cfg.gain.check_range(&code)?;
        let gain_levels = cfg.gain.levels(&code)?;
        let x = cfg.plant.x0.clone();
        Ok(LinearLoop {
            cfg,
            code,
            gain_levels,
            material,
            bus,
            x,
            sensor_rng,
            cloud_rng,
            step_index: 0,
        })
    }

    pub fn code(&self) -> &FixedPointCode {
        &self.code
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn into_bus(self) -> Bus {
        self.bus
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    /// Advance one step: quantize, run the scheme's pipeline over the bus,
    /// apply the decoded input to the plant. Returns the trace row.
    pub fn step(&mut self) -> Result<TraceRow, LinctrlError> {
        let k = self.step_index;
        self.bus.set_step(k);
        let mag = self.code.magnitude();
        for (coord, v) in self.x.iter().enumerate() {
            if v.abs() > mag {
                return Err(LinctrlError::RangeViolation {
                    step: k,
                    coord,
                    value: *v,
                });
            }
        }
        let x_levels: Vec<i64> = self
            .x
            .iter()
            .map(|&v| self.code.level(v))
            .collect::<Result<_, _>>()?;

        let bytes_before = self.bus.ledger().total_bytes();
        let mut ops = OpCount::default();
        let u_enc = match self.cfg.scheme {
            LinearScheme::Plain => self.plain_step(&x_levels),
            LinearScheme::ElGamalLinear => self.elgamal_linear_step(&x_levels, &mut ops)?,
            LinearScheme::PaillierLinear => self.paillier_linear_step(&x_levels, &mut ops)?,
            LinearScheme::TwoCloudLinear => self.two_cloud_linear_step(&x_levels)?,
        };
        let bytes = self.bus.ledger().total_bytes() - bytes_before;

        let u_oracle: Vec<f64> = fixed_linear_step(&self.gain_levels, &x_levels)
            .iter()
            .map(|&lvl| self.code.decode_lift(&BigInt::from(lvl), 2))
            .collect();

        let row = TraceRow {
            step: k,
            x: self.x.iter().copied().collect(),
            u_enc: u_enc.clone(),
            u_oracle,
            ops,
            bytes,
        };

        let u = DVector::from_vec(u_enc);
        self.x = &self.cfg.plant.a * &self.x + &self.cfg.plant.b * u;
        self.step_index += 1;
        Ok(row)
    }

    /// Plaintext pipeline: levels in the clear, sensor -> cloud -> actuator.
    fn plain_step(&mut self, x_levels: &[i64]) -> Vec<f64> {
        self.bus.send(
            PartyId::Sensor,
            PartyId::Cloud(0),
            "state",
            levels_payload(x_levels),
        );
        let seen = parse_levels(
            &self
                .bus
                .recv(PartyId::Sensor, PartyId::Cloud(0))
                .expect("just sent")
                .payload,
        );
        let u_levels = fixed_linear_step(&self.gain_levels, &seen);
        self.bus.send(
            PartyId::Cloud(0),
            PartyId::Actuator,
            "input",
            wide_levels_payload(&u_levels),
        );
        let got = parse_wide_levels(
            &self
                .bus
                .recv(PartyId::Cloud(0), PartyId::Actuator)
                .expect("just sent")
                .payload,
        );
        got.iter()
            .map(|&lvl| self.code.decode_lift(&BigInt::from(lvl), 2))
            .collect()
    }

    /// Multiplicative pipeline: n encryptions at the sensor, mn ciphertext
    /// products at the cloud, mn decryptions at the actuator, which sums
    /// the decoded products row by row.
    fn elgamal_linear_step(
        &mut self,
        x_levels: &[i64],
        ops: &mut OpCount,
    ) -> Result<Vec<f64>, LinctrlError> {
        let Material::ElGamal {
            key,
            enc_gain,
            zero_code,
        } = &self.material
        else {
            unreachable!("dispatched on material")
        };
        let pk = key.public();
        let m = enc_gain.len();
        let n = x_levels.len();

        // sensor: encrypt the state entrywise under the actuator's key
        let mut x_cts = Vec::with_capacity(n);
        for &lvl in x_levels {
            let msg = zero_code.encode_level(lvl)?;
            let c = pk.eg_enc(&msg, &mut self.sensor_rng)?;
            ops.enc += 1;
            self.bus.ops_mut(PartyId::Sensor).enc += 1;
            self.bus.send(
                PartyId::Sensor,
                PartyId::Cloud(0),
                "state-enc",
                pk.serialize(&c)?,
            );
            x_cts.push(
                pk.deserialize(
                    &self
                        .bus
                        .recv(PartyId::Sensor, PartyId::Cloud(0))
                        .expect("just sent")
                        .payload,
                )?,
            );
        }

        // cloud: entrywise products, still encrypted
        let mut product_cts = Vec::with_capacity(m * n);
        for row in enc_gain {
            for (j, gc) in row.iter().enumerate() {
                let prod = pk.eg_mul(gc, &x_cts[j])?;
                ops.hom_mul += 1;
                self.bus.ops_mut(PartyId::Cloud(0)).hom_mul += 1;
                self.bus.send(
                    PartyId::Cloud(0),
                    PartyId::Actuator,
                    "product",
                    pk.serialize(&prod)?,
                );
                product_cts.push(
                    pk.deserialize(
                        &self
                            .bus
                            .recv(PartyId::Cloud(0), PartyId::Actuator)
                            .expect("just sent")
                            .payload,
                    )?,
                );
            }
        }

        // actuator: decrypt every product, undo the zero sentinel, sum rows
        let mut u = Vec::with_capacity(m);
        for i in 0..m {
            let mut acc: i128 = 0;
            for j in 0..n {
                let w = key.eg_dec(&product_cts[i * n + j])?;
                ops.dec += 1;
                self.bus.ops_mut(PartyId::Actuator).dec += 1;
                acc += zero_code.decode_product(&w)?;
            }
            u.push(self.code.decode_lift(&BigInt::from(acc), 2));
        }
        Ok(u)
    }

    /// Additive pipeline: n encryptions at the sensor, the whole affine map
    /// at the cloud (mn constant products, m(n-1) additions), m
    /// decryptions at the actuator.
    fn paillier_linear_step(
        &mut self,
        x_levels: &[i64],
        ops: &mut OpCount,
    ) -> Result<Vec<f64>, LinctrlError> {
        let Material::Paillier { key, gain_enc } = &self.material else {
            unreachable!("dispatched on material")
        };
        let pk = key.public();

        let mut x_cts = Vec::with_capacity(x_levels.len());
        for &lvl in x_levels {
            let e = self.code.encode_level(&BigInt::from(lvl));
            let c = pk.enc_encoded(&e, &mut self.sensor_rng)?;
            ops.enc += 1;
            self.bus.ops_mut(PartyId::Sensor).enc += 1;
            self.bus.send(
                PartyId::Sensor,
                PartyId::Cloud(0),
                "state-enc",
                pk.serialize(&c)?,
            );
            x_cts.push(
                pk.deserialize(
                    &self
                        .bus
                        .recv(PartyId::Sensor, PartyId::Cloud(0))
                        .expect("just sent")
                        .payload,
                )?,
            );
        }

        let mut u = Vec::with_capacity(gain_enc.len());
        for row in gain_enc {
            // left-to-right accumulation in ascending state index keeps
            // ciphertext traces bit-reproducible
            let mut acc = pk.mul_encoded(&x_cts[0], &row[0])?;
            ops.hom_mul_const += 1;
            self.bus.ops_mut(PartyId::Cloud(0)).hom_mul_const += 1;
            for (j, g) in row.iter().enumerate().skip(1) {
                let term = pk.mul_encoded(&x_cts[j], g)?;
                ops.hom_mul_const += 1;
                self.bus.ops_mut(PartyId::Cloud(0)).hom_mul_const += 1;
                acc = pk.add(&acc, &term)?;
                ops.hom_add += 1;
                self.bus.ops_mut(PartyId::Cloud(0)).hom_add += 1;
            }
            self.bus.send(
                PartyId::Cloud(0),
                PartyId::Actuator,
                "input-enc",
                pk.serialize(&acc)?,
            );
            let received = pk.deserialize(
                &self
                    .bus
                    .recv(PartyId::Cloud(0), PartyId::Actuator)
                    .expect("just sent")
                    .payload,
            )?;
            let dec = key.dec_encoded(&received)?;
            ops.dec += 1;
            self.bus.ops_mut(PartyId::Actuator).dec += 1;
            u.push(self.code.decode(&dec));
        }
        Ok(u)
    }

    /// Secret-sharing pipeline: the sensor one-time-pads the state into two
    /// additive shares, each cloud applies the integer gain to its share,
    /// the actuator subtracts. No homomorphic operations at all, and no
    /// cloud-to-cloud traffic.
    fn two_cloud_linear_step(&mut self, x_levels: &[i64]) -> Result<Vec<f64>, LinctrlError> {
        let Material::TwoCloud {
            phi,
            width,
            gain_res,
        } = &self.material
        else {
            unreachable!("dispatched on material")
        };
        let phi = phi.clone();
        let width = *width;

        // sensor: fresh pads every step
        let mut share1 = Vec::with_capacity(x_levels.len());
        let mut share2 = Vec::with_capacity(x_levels.len());
        for &lvl in x_levels {
            let residue = signed_mod(&BigInt::from(lvl), &phi);
            let (padded, pad) =
                split2(&residue, &phi, &mut self.sensor_rng).expect("residue < phi");
            share1.push(padded.residue);
            share2.push(pad.residue);
        }
        self.bus.send(
            PartyId::Sensor,
            PartyId::Cloud(0),
            "state-share",
            residues_payload(&share1, width),
        );
        self.bus.send(
            PartyId::Sensor,
            PartyId::Cloud(1),
            "state-share",
            residues_payload(&share2, width),
        );

        // each cloud: integer matrix-vector product mod phi on its share
        let mut results = Vec::new();
        for (idx, cloud) in [PartyId::Cloud(0), PartyId::Cloud(1)].into_iter().enumerate() {
            let share = parse_residues(
                &self
                    .bus
                    .recv(PartyId::Sensor, cloud)
                    .expect("just sent")
                    .payload,
                width,
            );
            let v: Vec<BigUint> = gain_res
                .iter()
                .map(|row| {
                    let mut acc = BigUint::zero();
                    for (g, s) in row.iter().zip(&share) {
                        acc = (acc + g * s) % &phi;
                    }
                    acc
                })
                .collect();
            self.bus.send(
                cloud,
                PartyId::Actuator,
                "input-share",
                residues_payload(&v, width),
            );
            results.push(parse_residues(
                &self
                    .bus
                    .recv(cloud, PartyId::Actuator)
                    .expect("just sent")
                    .payload,
                width,
            ));
            let _ = idx;
        }

        // actuator: u = v1 - v2 mod phi, centered
        let u = results[0]
            .iter()
            .zip(&results[1])
            .map(|(v1, v2)| {
                let diff = (v1 + &phi - v2) % &phi;
                self.code.decode_lift(&centered_lift(&diff, &phi), 2)
            })
            .collect();
        Ok(u)
    }

    /// Run the configured number of steps.
    pub fn run(&mut self) -> Result<Trace, LinctrlError> {
        let mut trace = Trace::default();
        for _ in 0..self.cfg.steps {
            trace.rows.push(self.step()?);
        }
        Ok(trace)
    }
}

/// Build and run a closed loop in one call.
pub fn closed_loop(cfg: LinearLoopConfig) -> Result<(Trace, LinearLoop), LinctrlError> {
    let mut lp = LinearLoop::new(cfg)?;
    let trace = lp.run()?;
    Ok((trace, lp))
}
