//! Where the energy of one sensing cycle goes, and how long a node
//! charges before it can run one.
//!
//! cargo run --example energy_cycle

use swipt_core::energy::{charge, cold_start_ready, cycle_energy, time_to_ready, CycleProfile, PmuSpec, StorageState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile = CycleProfile::default();
    let e = cycle_energy(&profile);
    println!("cycle of {:.1} s, {:.3} mJ", profile.total_duration_s(), e.total_j * 1e3);
    for p in &profile.phases {
        println!(
            "  {:<15} {:8.4} s  {:7.2} mW  {:8.4} mJ  {:6.2} %",
            p.name.to_string(),
            p.duration_s,
            p.power_mw,
            p.energy_j() * 1e3,
            e.share(p.name) * 100.0
        );
    }

    let pmu = PmuSpec::default();
    let empty = StorageState::new(0.022, 0.0)?;
    println!("\nstartup from an empty 22 mF capacitor to {} V", pmu.ready_voltage_v);
    for dc_uw in [10.0, 15.0, 50.0, 200.0, 1000.0] {
        if !cold_start_ready(dc_uw, &pmu) {
            println!("  {dc_uw:7.1} uW  below cold start");
            continue;
        }
        let t = time_to_ready(empty, dc_uw, pmu.ready_voltage_v, 0.0)?;
        // The PMU stops charging at the capacitor's rating.
        let after_hour = charge(empty, dc_uw, 3600.0, 0.0).voltage_v.min(pmu.rated_voltage_v);
        println!("  {dc_uw:7.1} uW  ready in {t:9.1} s  ({after_hour:.2} V after 1 h)");
    }
    Ok(())
}
