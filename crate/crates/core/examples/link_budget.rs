//! Wired bench and over-the-air link budgets, plus how the wireless
//! dynamic range collapses with distance.
//!
//! cargo run --example link_budget

use swipt_core::rf_link::{
    backscatter_return_power, dynamic_range_simplified, eirp, fspl, incident_power, leakage_power,
    monitor_observed_level, reflected_power_wired, ChannelGeometry, Frequency, Gain, PowerLevel,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = Frequency::mhz(868.0)?;

    // Circulator on a bench: source -> cable -> rectifier -> cable -> monitor.
    let p = PowerLevel::dbm(-10.0);
    let leak = leakage_power(p, Gain::db(20.0));
    let refl = reflected_power_wired(p, Gain::db(0.8), Gain::db(-0.6));
    println!("wired bench at {p}");
    println!("  leakage    {leak}");
    println!("  reflection {refl}");
    println!("  delta_P    {:.1} dB", dynamic_range_simplified(refl, leak).value());

    // Over the air with patch antennas on both ends.
    let p = PowerLevel::dbm(15.0);
    let geo = ChannelGeometry::new(1.61, Gain::db(9.2), Gain::db(9.2))?;
    let leak = leakage_power(p, Gain::db(20.0));
    println!("\nwireless at {p}, {} m", geo.distance_m());
    println!("  EIRP       {}", eirp(p, Gain::db(9.2)));
    println!("  FSPL       {:.2} dB", fspl(f, geo.distance_m())?.value());
    println!("  incident   {}", incident_power(p, Gain::db(0.0), &geo, f)?);
    println!("  leakage    {leak}");

    println!("\n  d [m]  return hi [dBm]  monitor hi/lo [dBm]  delta_P [dB]");
    for d in [0.25, 0.5, 1.0, 1.61, 3.0] {
        let geo = ChannelGeometry::new(d, Gain::db(9.2), Gain::db(9.2))?;
        let hi = backscatter_return_power(p, Gain::db(0.0), &geo, f, Gain::db(-0.6))?;
        let lo = backscatter_return_power(p, Gain::db(0.0), &geo, f, Gain::db(-25.0))?;
        let (mh, ml) = (monitor_observed_level(leak, hi), monitor_observed_level(leak, lo));
        println!(
            "  {d:5.2}  {:15.2}  {:8.2} / {:8.2}  {:12.3}",
            hi.value(),
            mh.value(),
            ml.value(),
            mh.value() - ml.value()
        );
    }
    Ok(())
}
