//! One identification end to end: derive the per-cycle private key,
//! backscatter it, verify it at the monitor and let the ledger gate the
//! following uplink.
//!
//! cargo run --example pvk_auth

use swipt_core::auth::{derive_pvk, verify_pvk, AuthLedger, AuthWindow, VerifyConfig};
use swipt_core::codec::{manchester_encode, modulate};
use swipt_core::rf_link::PowerLevel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let secret = *b"shared-secret-01";
    let node_id = 7;
    let cfg = VerifyConfig::default();
    let (high, low) = (PowerLevel::dbm(-29.8), PowerLevel::dbm(-46.8));
    let mut ledger = AuthLedger::new();

    for counter in 0..3u32 {
        let pvk = derive_pvk(&secret, node_id, counter);
        let window = AuthWindow { start_s: 60.0 * counter as f64, duration_s: 2e-3 };
        let chips = manchester_encode(&pvk, window.duration_s)?.starting_at(window.start_s);
        let observed = modulate(&chips, high, low, 0.5, counter as u64)?;
        let result = verify_pvk(&observed, &pvk, window, &cfg);
        ledger.record(node_id, result, window.end_s(), 1.0);
        println!("cycle {counter}: key {}  {}", pvk.to_hex(), result.verdict);

        let uplink_at = window.end_s() + 0.3;
        println!("  uplink at +0.3 s: {:?}", ledger.gate_uplink(node_id, uplink_at));
        println!("  second uplink:    {:?}", ledger.gate_uplink(node_id, uplink_at + 0.1));
    }

    // A trace recorded in cycle 0 does not carry cycle 1's key.
    let stale = derive_pvk(&secret, node_id, 0);
    let fresh = derive_pvk(&secret, node_id, 1);
    let window = AuthWindow { start_s: 120.0, duration_s: 2e-3 };
    let chips = manchester_encode(&stale, window.duration_s)?.starting_at(window.start_s);
    let r = verify_pvk(&modulate(&chips, high, low, 0.5, 9)?, &fresh, window, &cfg);
    println!("\nstale key against a fresh challenge: {} (bit agreement {:.2})", r.verdict, r.correlation_score);
    Ok(())
}
