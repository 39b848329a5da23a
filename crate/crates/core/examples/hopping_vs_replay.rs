//! Waveform replay campaigns against the three verification strategies.
//! The attacker records each identification and replays it at the next
//! one, perfectly timed.
//!
//! cargo run --release --example hopping_vs_replay [epochs]

use swipt_core::adversary::{waveform_replay_campaign, CampaignSetup};
use swipt_core::auth::{HopBand, MonitorLevels, Strategy, VerifyConfig};
use swipt_core::rf_link::{leakage_power, reflected_power_wired, Gain, PowerLevel};

fn main() {
    let epochs: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5000);
    let p = PowerLevel::dbm(-10.0);
    let setup = CampaignSetup {
        levels: MonitorLevels {
            leak: leakage_power(p, Gain::db(20.0)),
            return_high: reflected_power_wired(p, Gain::db(0.8), Gain::db(-0.6)),
            return_low: reflected_power_wired(p, Gain::db(0.8), Gain::db(-25.0)),
            floor: PowerLevel::dbm(-60.0),
        },
        attacker_sigma_db: 0.5,
        monitor_sigma_db: 0.5,
        verify: VerifyConfig::default(),
        window_s: 2e-3,
    };
    let band = HopBand::default();
    println!("{epochs} replays per strategy, {} hop channels", band.channel_count());
    println!("  strategy    accepted  freq mismatch  key mismatch  rate");
    for strategy in [Strategy::Pvk, Strategy::Hopping, Strategy::DualKey] {
        let s = waveform_replay_campaign(strategy, &band, epochs, &setup, 1);
        println!(
            "  {:<10}  {:8}  {:13}  {:12}  {:.4}",
            strategy.to_string(),
            s.accepted,
            s.frequency_mismatch,
            s.key_mismatch,
            s.acceptance_rate()
        );
    }
    println!("  expected hopping rate 1/K = {:.4}", 1.0 / band.channel_count() as f64);
}
