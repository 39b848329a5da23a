//! Dual-key identification: the CN gates its power wave with a random
//! public-key envelope and the monitor correlates what comes back against
//! the envelope times the node's reflection pattern.
//!
//! cargo run --example dual_key

use swipt_core::auth::{
    dual_key_expected_trace, random_envelope, verify_dual_key, AuthWindow, MonitorLevels, PublicKeyFingerprint,
};
use swipt_core::codec::PrivateKey;
use swipt_core::rf_link::{Frequency, PowerLevel};
use swipt_core::seeded_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded_rng(5);
    let levels = MonitorLevels {
        leak: PowerLevel::dbm(-30.0),
        return_high: PowerLevel::dbm(-12.2),
        return_low: PowerLevel::dbm(-36.6),
        floor: PowerLevel::dbm(-60.0),
    };
    let pvk = PrivateKey::random(&mut rng);
    let f = Frequency::mhz(868.0)?;
    let window = AuthWindow { start_s: 0.0, duration_s: 2e-3 };

    let today = PublicKeyFingerprint::new(f, Some(random_envelope(&mut rng)))?;
    let tomorrow = PublicKeyFingerprint::new(f, Some(random_envelope(&mut rng)))?;
    let template = dual_key_expected_trace(&tomorrow, &pvk, window, &levels)?;

    let legit = dual_key_expected_trace(&tomorrow, &pvk, window, &levels)?;
    let replay = dual_key_expected_trace(&today, &pvk, window, &levels)?;
    let forged = dual_key_expected_trace(&tomorrow, &PrivateKey::random(&mut rng), window, &levels)?;

    // The envelope carries most of the trace variance, so a node answering
    // the live envelope with the wrong private key can still clear 0.9. The
    // scheme targets replay, where the stale envelope decorrelates.
    for (name, trace) in [("legitimate", &legit), ("replayed envelope", &replay), ("wrong private key", &forged)] {
        let r = verify_dual_key(trace, &template, 0.9);
        println!("{name:<18} score {:+.3}  {}", r.correlation_score, r.verdict);
    }
    Ok(())
}
