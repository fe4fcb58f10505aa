//! Building blocks for encrypted control loops.
//!
//! The crate stacks up from arbitrary-precision modular arithmetic to full
//! closed-loop simulations in which sensors, clouds, and actuators exchange
//! ciphertexts and masked shares over a deterministic in-process network:
//!
//! * [`modmath`] — modular arithmetic, probable primes, seeded randomness.
//! * [`fixedpoint`] — quantization of reals onto an integer message space.
//! * [`paillier`] / [`elgamal`] — the two partially homomorphic cryptosystems.
//! * [`sharing`] — additive one-time-pad secret sharing.
//! * [`smpc`] — two-party subprotocols: oblivious transfer, private
//!   comparison, encrypted max/min, key switching.
//! * [`linctrl`] — encrypted linear state feedback in three flavours.
//! * [`mpc`] — condensed QP, explicit piecewise-affine laws, and projected
//!   gradient solvers (plain, real-time encrypted, two-cloud encrypted).
//! * [`coop`] — cooperative control over a communication graph with
//!   encrypted gains and masked aggregation.
//! * [`analysis`] — quantization disturbance bounds, invariant-set
//!   computations, and trajectory certificates.
//! * [`simnet`] — the multi-party message bus, cost ledger, and the scenario
//!   runners that drive every scheme against its plaintext oracle.
//! * [`config`] / [`cli`] — scenario files and the command-line front end.
//!
//! Security note: this is a simulator. Randomness is deliberately seeded and
//! reproducible, default key sizes are far below cryptographic strength, and
//! none of the arithmetic is constant-time. Do not reuse the cryptosystems
//! here for protecting real data.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod coop;
pub mod elgamal;
pub mod fixedpoint;
pub mod linctrl;
pub mod modmath;
pub mod mpc;
pub mod paillier;
pub mod sharing;
pub mod simnet;
pub mod smpc;

pub(crate) mod lp;
