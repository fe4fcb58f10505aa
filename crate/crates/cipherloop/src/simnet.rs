//! Deterministic multi-party message simulator.
//!
//! Every control scheme in this crate runs as a cast of parties (sensor,
//! actuator, clouds, agents, a trusted provisioning entity) exchanging
//! byte payloads over a [`Bus`]. The bus is single-threaded and ordered:
//! per-pair FIFO queues, a global send log, and a cost ledger make runs
//! byte-reproducible from (config, seed) and give the audits something
//! concrete to inspect.
//!
//! Scenario runners live at the bottom of the module; they wire the
//! controller pipelines from `linctrl`, `mpc`, and `coop` to named parties
//! and produce a trace plus the ledger.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::linctrl::OpCount;

/// A participant role. Clouds and agents are numbered from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    Sensor,
    Actuator,
    Cloud(u8),
    Agent(u8),
    TrustedEntity,
}

impl PartyId {
    /// Stable per-party randomness substream index.
    pub fn substream(&self) -> u64 {
        match self {
            PartyId::Sensor => 0,
            PartyId::Actuator => 1,
            PartyId::TrustedEntity => 2,
            PartyId::Cloud(i) => 10 + *i as u64,
            PartyId::Agent(i) => 100 + *i as u64,
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Sensor => write!(f, "sensor"),
            PartyId::Actuator => write!(f, "actuator"),
            PartyId::Cloud(i) => write!(f, "cloud{i}"),
            PartyId::Agent(i) => write!(f, "agent{i}"),
            PartyId::TrustedEntity => write!(f, "trusted"),
        }
    }
}

/// One delivered message. `round` is a global monotone sequence number,
/// `step` the control step during which the message was sent.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub from: PartyId,
    pub to: PartyId,
    pub label: String,
    pub payload: Vec<u8>,
    pub round: u64,
    pub step: u64,
}

/// Aggregate costs of a run: homomorphic-operation counts per party,
/// message and byte counts per directed edge, and protocol round counts.
#[derive(Debug, Default, Clone)]
pub struct CostLedger {
    pub ops: BTreeMap<PartyId, OpCount>,
    pub edge_messages: BTreeMap<(PartyId, PartyId), u64>,
    pub edge_bytes: BTreeMap<(PartyId, PartyId), u64>,
    pub protocol_rounds: BTreeMap<String, u64>,
}

impl CostLedger {
    pub fn ops_total(&self) -> OpCount {
        let mut total = OpCount::default();
        for c in self.ops.values() {
            total.enc += c.enc;
            total.dec += c.dec;
            total.hom_mul += c.hom_mul;
            total.hom_add += c.hom_add;
            total.hom_mul_const += c.hom_mul_const;
        }
        total
    }

    pub fn messages_between(&self, a: PartyId, b: PartyId) -> u64 {
        self.edge_messages.get(&(a, b)).copied().unwrap_or(0)
            + self.edge_messages.get(&(b, a)).copied().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.edge_bytes.values().sum()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("party            enc      dec  hom_mul  hom_add  mul_const\n");
        for (party, c) in &self.ops {
            out.push_str(&format!(
                "{:<12} {:>7} {:>8} {:>8} {:>8} {:>10}\n",
                party.to_string(),
                c.enc,
                c.dec,
                c.hom_mul,
                c.hom_add,
                c.hom_mul_const
            ));
        }
        out.push_str("\nedge                          messages      bytes\n");
        for ((from, to), n) in &self.edge_messages {
            let bytes = self.edge_bytes.get(&(*from, *to)).copied().unwrap_or(0);
            out.push_str(&format!(
                "{:<28} {:>9} {:>10}\n",
                format!("{from} -> {to}"),
                n,
                bytes
            ));
        }
        if !self.protocol_rounds.is_empty() {
            out.push_str("\nprotocol rounds\n");
            for (name, rounds) in &self.protocol_rounds {
                out.push_str(&format!("{name:<28} {rounds:>9}\n"));
            }
        }
        out
    }
}

/// Ordered, lossless, zero-latency message fabric plus cost accounting.
/// Latency and loss hooks do not exist by design: the network model is an
/// extension point, not a feature, and everything downstream assumes
/// reliable in-order delivery.
#[derive(Debug, Default)]
pub struct Bus {
    queues: BTreeMap<(PartyId, PartyId), VecDeque<Envelope>>,
    log: Vec<Envelope>,
    ledger: CostLedger,
    retain_payloads: bool,
    step: u64,
    next_round: u64,
    sent: u64,
    delivered: u64,
}

impl Bus {
    pub fn new() -> Self {
        Bus {
            retain_payloads: true,
            ..Bus::default()
        }
    }

    /// Drop payload bytes from the log (counters still update): for runs
    /// of 10^5+ steps where only statistics and counts matter.
    pub fn without_payload_log() -> Self {
        Bus::default()
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn send(&mut self, from: PartyId, to: PartyId, label: &str, payload: Vec<u8>) {
        assert_ne!(from, to, "a party does not message itself");
        let round = self.next_round;
        self.next_round += 1;
        *self.ledger.edge_messages.entry((from, to)).or_default() += 1;
        *self.ledger.edge_bytes.entry((from, to)).or_default() += payload.len() as u64;
        let env = Envelope {
            from,
            to,
            label: label.to_string(),
            payload,
            round,
            step: self.step,
        };
        self.log.push(Envelope {
            payload: if self.retain_payloads {
                env.payload.clone()
            } else {
                Vec::new()
            },
            label: env.label.clone(),
            ..env
        });
        self.queues.entry((from, to)).or_default().push_back(env);
        self.sent += 1;
    }

    /// FIFO receive on a directed edge.
    pub fn recv(&mut self, from: PartyId, to: PartyId) -> Option<Envelope> {
        let env = self.queues.get_mut(&(from, to))?.pop_front()?;
        self.delivered += 1;
        Some(env)
    }

    pub fn undelivered(&self) -> u64 {
        self.sent - self.delivered
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn ops_mut(&mut self, party: PartyId) -> &mut OpCount {
        self.ledger.ops.entry(party).or_default()
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn log(&self) -> &[Envelope] {
        &self.log
    }

    pub fn count_protocol_round(&mut self, protocol: &str) {
        *self
            .ledger
            .protocol_rounds
            .entry(protocol.to_string())
            .or_default() += 1;
    }
}

/// Canonical wire encoding of a signed-level vector: 8-byte big-endian
/// two's complement per entry. This is the encoding the leakage scan
/// searches transcripts for.
pub fn levels_payload(levels: &[i64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(levels.len() * 8);
    for v in levels {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn parse_levels(payload: &[u8]) -> Vec<i64> {
    payload
        .chunks_exact(8)
        .map(|c| i64::from_be_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

/// Wide-level variant for accumulated products: 16-byte big-endian.
pub fn wide_levels_payload(levels: &[i128]) -> Vec<u8> {
    let mut out = Vec::with_capacity(levels.len() * 16);
    for v in levels {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn parse_wide_levels(payload: &[u8]) -> Vec<i128> {
    payload
        .chunks_exact(16)
        .map(|c| i128::from_be_bytes(c.try_into().expect("16-byte chunk")))
        .collect()
}

/// Fixed-width big-endian residue vector encoding.
pub fn residues_payload(residues: &[num_bigint::BigUint], width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(residues.len() * width);
    for r in residues {
        let raw = r.to_bytes_be();
        assert!(raw.len() <= width, "residue exceeds field width");
        out.resize(out.len() + width - raw.len(), 0);
        out.extend_from_slice(&raw);
    }
    out
}

pub fn parse_residues(payload: &[u8], width: usize) -> Vec<num_bigint::BigUint> {
    payload
        .chunks_exact(width)
        .map(num_bigint::BigUint::from_bytes_be)
        .collect()
}

/// Adapter running an `smpc` protocol between two bus parties: each wire
/// message becomes an envelope and counts one protocol round.
pub struct BusWire<'a> {
    pub bus: &'a mut Bus,
    pub p1: PartyId,
    pub p2: PartyId,
    pub protocol: &'static str,
}

impl crate::smpc::Wire for BusWire<'_> {
    fn send(&mut self, from_p1: bool, label: &'static str, payload: &[u8]) -> u32 {
        let (from, to) = if from_p1 {
            (self.p1, self.p2)
        } else {
            (self.p2, self.p1)
        };
        self.bus.send(from, to, label, payload.to_vec());
        self.bus.count_protocol_round(self.protocol);
        // drain immediately: protocol messages are consumed synchronously
        // by the orchestration, the envelope exists for the audit trail
        let env = self.bus.recv(from, to).expect("just sent");
        env.round as u32
    }
}
