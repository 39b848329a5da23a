//! Gate-state reflection and harvesting efficiency across the band.
//! Pass a JSON efficiency curve to use measured data instead of the
//! built-in placeholder tables.
//!
//! cargo run --example rectifier_tables [efficiency.json]

use swipt_core::rectifier::{
    harvested_dc_power, reflection_coefficient, EfficiencyCurve, GateState, ReflectionProfile,
};
use swipt_core::rf_link::{Frequency, PowerLevel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curve = match std::env::args().nth(1) {
        Some(path) => EfficiencyCurve::load(path)?,
        None => EfficiencyCurve::default(),
    };
    let profile = ReflectionProfile::default();

    println!("S11 at -10 dBm");
    println!("  f [MHz]  harvest [dB]  backscatter [dB]");
    for mhz in [863.0, 864.0, 866.0, 868.0, 869.0, 870.0] {
        let f = Frequency::mhz(mhz)?;
        let p = PowerLevel::dbm(-10.0);
        let m = reflection_coefficient(&profile, GateState::Harvest, f, p)?;
        let b = reflection_coefficient(&profile, GateState::Backscatter, f, p)?;
        println!("  {mhz:7.1}  {:12.2}  {:16.2}", m.value(), b.value());
    }

    let f = Frequency::mhz(868.0)?;
    println!("\nharvesting at 868 MHz");
    println!("  P_in [dBm]  efficiency  DC [uW]");
    for dbm in [-20.0, -15.0, -13.0, -10.0, -5.0, 0.0] {
        let p = PowerLevel::dbm(dbm);
        println!(
            "  {dbm:10.1}  {:10.3}  {:7.2}",
            curve.efficiency_at(f, p),
            harvested_dc_power(&curve, f, p)
        );
    }
    Ok(())
}
