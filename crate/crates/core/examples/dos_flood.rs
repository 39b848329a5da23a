//! A flooder replaying one captured frame at a fixed rate, simulated with
//! and without the strict counter policy.
//!
//! cargo run --example dos_flood

use swipt_core::lorawan_abp::PolicyMode;
use swipt_core::sim::{preset, run};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for mode in [PolicyMode::Permissive, PolicyMode::StrictCounter] {
        let mut s = preset("dos_flood").ok_or("missing preset")?;
        s.gateway.policy = mode;
        let r = run(&s)?;
        let g = &r.gateway;
        println!("{mode:?}");
        println!("  frames received      {}", g.frames_received);
        println!("  adversarial accepted {}", g.adversarial_accepted);
        println!("  legitimate accepted  {}/{}", g.legitimate_accepted, g.legitimate_sent);
        println!("  airtime busy         {:.1} s ({:.2} % of the run)", g.airtime_busy_s, g.occupancy * 100.0);
        println!("  verdicts             {:?}", g.verdicts);
    }
    Ok(())
}
