//! Backscatter-based, protocol-agnostic authentication for SWIPT IoT
//! networks.
//!
//! A communicating node (CN) radiates a power wave that battery-free
//! sensing nodes harvest. Before each data uplink a node toggles its
//! backscattering rectifier to reflect a Manchester-coded private key back
//! to the CN's power-wave monitor, which authenticates the node and gates
//! its LoRaWAN traffic.
//!
//! Modules, bottom up:
//!
//! - [`rf_link`]: dBm/dB arithmetic, leakage, reflection, FSPL, EIRP.
//! - [`rectifier`]: gate-state S11 and RF-to-DC efficiency tables.
//! - [`energy`]: super-capacitor, PMU cold start, cycle energy ledger.
//! - [`codec`]: Manchester/OOK, threshold decoding, BER harness.
//! - [`auth`]: key derivation, the three verification strategies, uplink gating.
//! - [`lorawan_abp`]: minimal ABP data plane and gateway policies.
//! - [`adversary`]: frame and waveform replay attackers, DoS flooding.
//! - [`sim`]: scenario files, event queue, deterministic simulator, reports.
//! - [`cli`]: the `swipt` command line front end.

// `!(x > y)` is used on purpose so NaN inputs fall into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod auth;
pub mod cli;
pub mod codec;
pub mod energy;
pub mod lorawan_abp;
pub mod rectifier;
pub mod rf_link;
pub mod sim;

use rand::SeedableRng;

/// RNG used everywhere randomness is needed. ChaCha8 gives identical
/// streams on every platform for a given seed.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
