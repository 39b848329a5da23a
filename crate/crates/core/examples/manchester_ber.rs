//! Encode a key as Manchester chips, push it through the noisy power
//! domain, decode it, and sweep the bit error rate against the analytic
//! curve.
//!
//! cargo run --example manchester_ber [trace.csv]

use swipt_core::codec::{ber_estimate, demodulate, manchester_encode, modulate, PrivateKey, DEFAULT_GUARD_MARGIN_DB};
use swipt_core::rf_link::PowerLevel;

// Abramowitz-Stegun 7.1.26, good to about 1e-7.
fn q(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    0.5 * poly * (-z * z).exp()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = PrivateKey(*b"backscatter-key!");
    let chips = manchester_encode(&key, 2e-3)?;
    println!(
        "{} chips of {:.4} us, gate toggles at {:.0} kHz",
        chips.chips.len(),
        chips.chip_duration_s * 1e6,
        chips.toggle_frequency_hz() / 1e3
    );

    let trace = modulate(&chips, PowerLevel::dbm(-29.8), PowerLevel::dbm(-46.8), 0.5, 42)?;
    let decoded = demodulate(&trace, DEFAULT_GUARD_MARGIN_DB)?;
    println!("sent    {}\ndecoded {}  match: {}", key.to_hex(), decoded.to_hex(), decoded == key);
    if let Some(path) = std::env::args().nth(1) {
        trace.write_csv(std::fs::File::create(&path)?)?;
        println!("power trace written to {path}");
    }

    let sigma = 0.5;
    println!("\nBER at sigma {sigma} dB, 10^5 bits per point");
    println!("  delta_P [dB]  measured   Q(dP/(s*sqrt2))");
    for (i, dp) in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0].into_iter().enumerate() {
        let est = ber_estimate(dp, sigma, 100_000, i as u64);
        println!("  {dp:12.2}  {:.5}    {:.5}", est.ber, q(dp / (sigma * 2f64.sqrt())));
    }
    Ok(())
}
