//! Replaying a captured LoRaWAN ABP frame, on the same channel and on a
//! different one, against the permissive and strict-counter gateways.
//!
//! cargo run --example abp_replay

use std::collections::BTreeMap;

use swipt_core::adversary::{Attacker, AttackerKind, Injection, Observable};
use swipt_core::lorawan_abp::{
    build_frame, channel_set, gateway_validate, AbpSession, GatewayHistory, GatewayPolicy, PolicyMode, Region,
};
use swipt_core::seeded_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let channels = channel_set(Region::Eu868);
    let mut rng = seeded_rng(2);

    for mode in [PolicyMode::Permissive, PolicyMode::StrictCounter] {
        let mut session = AbpSession::new(0x2601_1234, [0x11; 16], [0x22; 16]);
        let keys = BTreeMap::from([(session.device_address, session.keys())]);
        let policy = GatewayPolicy { mode, ..GatewayPolicy::default() };
        let mut history = GatewayHistory::new();
        let mut same = Attacker::new(10, AttackerKind::SdrSameChannel).listening_on(channels[0]);
        let mut cross = Attacker::new(11, AttackerKind::TransceiverCrossChannel).listening_on(channels[0]);

        println!("{mode:?} gateway");
        for (i, t) in [0.0, 60.0].into_iter().enumerate() {
            let frame = build_frame(&mut session, 1, b"21.5C", channels[0], &channels)?;
            let v = gateway_validate(&frame, &keys, &policy, &mut history, t);
            println!("  t={t:5.1}  node frame fcnt {}  {v:?}", frame.frame_counter);
            if i == 0 {
                same.capture(Observable::Frame { frame: &frame, at_s: t }, &mut rng);
                cross.capture(Observable::Frame { frame: &frame, at_s: t }, &mut rng);
            }
        }
        for (a, t) in [(&same, 90.0), (&cross, 95.0)] {
            let Injection::Frame { frame, .. } = a.replay(t, &channels)? else { unreachable!() };
            let v = gateway_validate(&frame, &keys, &policy, &mut history, t);
            println!("  t={t:5.1}  {:?} replay on {}  {v:?}", a.kind, frame.channel);
        }
    }
    Ok(())
}
