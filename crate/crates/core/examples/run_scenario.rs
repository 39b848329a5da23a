//! Run a shipped preset or a scenario file and summarise the report.
//!
//! cargo run --example run_scenario -- replay_defeated_hopping
//! cargo run --example run_scenario -- my_scenario.json

use swipt_core::sim::{preset, run, Scenario, PRESET_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(arg) = std::env::args().nth(1) else {
        println!("usage: run_scenario <preset|file.json>\npresets: {}", PRESET_NAMES.join(", "));
        return Ok(());
    };
    let scenario = match preset(&arg) {
        Some(s) => s,
        None => Scenario::load(&arg)?,
    };
    let r = run(&scenario)?;
    println!("{} (seed {}), {:.0} s simulated, {} events", r.scenario, r.seed, r.duration_s, r.total_events());
    for n in &r.nodes {
        println!(
            "node {}: {:.1} dBm in, {:.1} uW DC, ready after {}, {} cycles, {} frames accepted of {}",
            n.id,
            n.incident_power_dbm,
            n.dc_power_uw,
            n.time_to_ready_s.map_or("never".into(), |t| format!("{t:.1} s")),
            n.cycles,
            n.frames_accepted,
            n.frames_sent
        );
    }
    for a in &r.auth {
        println!(
            "  auth {:9.3} s  {:<12} {:<8} {:.4} MHz  {:<20} score {:.2}",
            a.start_s,
            a.source,
            a.strategy.to_string(),
            a.carrier_mhz,
            a.verdict.to_string(),
            a.score
        );
    }
    for i in &r.injections {
        println!("  inject {:9.3} s  attacker {} ({})  {}", i.at_s, i.attacker_id, i.kind, i.outcome);
    }
    println!(
        "gateway: {} adversarial accepted, {}/{} legitimate accepted",
        r.gateway.adversarial_accepted, r.gateway.legitimate_accepted, r.gateway.legitimate_sent
    );
    Ok(())
}
