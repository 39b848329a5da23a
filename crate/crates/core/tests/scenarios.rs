use std::collections::BTreeMap;

use swipt_core::auth::{AuthVerdict, Strategy};
use swipt_core::lorawan_abp::PolicyMode;
use swipt_core::sim::{preset, run, CarrierPolicy, Report, Scenario, PRESET_NAMES};

fn with_strategy(mut s: Scenario, strategy: Strategy) -> Scenario {
    for n in &mut s.nodes {
        n.strategy = strategy;
    }
    s
}

fn adversarial_verdicts(r: &Report) -> BTreeMap<AuthVerdict, usize> {
    let mut m = BTreeMap::new();
    for a in r.auth.iter().filter(|a| a.source.starts_with("attacker:")) {
        *m.entry(a.verdict).or_default() += 1;
    }
    m
}

/// Every accepted frame must be backed by an accepted identification that
/// ended shortly before it arrived.
fn assert_frames_backed_by_auth(r: &Report, validity_s: f64) {
    for u in r.uplinks.iter().filter(|u| u.accepted) {
        let node = r.nodes.iter().find(|n| n.device_address == u.device_address).unwrap();
        let backed = r.auth.iter().any(|a| {
            a.node_id == node.id && a.verdict == AuthVerdict::Accepted && a.end_s <= u.rx_s && u.rx_s - a.end_s <= validity_s + 1.0
        });
        assert!(backed, "{} accepted at {} without a fresh identification", u.source, u.rx_s);
    }
}

#[test]
fn static_key_falls_to_waveform_replay() {
    // A stored identification waveform replayed on the same carrier passes
    // the static-key check, which lets a replayed frame through the gate.
    let mut s = with_strategy(preset("replay_defeated_hopping").unwrap(), Strategy::Pvk);
    s.source.carrier = CarrierPolicy::FixedMhz(868.0);
    let r = run(&s).unwrap();
    let v = adversarial_verdicts(&r);
    assert!(v.get(&AuthVerdict::Accepted).copied().unwrap_or(0) >= 1, "{v:?}");
    assert!(r.gateway.adversarial_accepted >= 1);
    assert_frames_backed_by_auth(&r, s.gateway.auth_validity_s);
}

#[test]
fn hopping_turns_replays_into_frequency_mismatches() {
    let s = preset("replay_defeated_hopping").unwrap();
    let r = run(&s).unwrap();
    let v = adversarial_verdicts(&r);
    let total: usize = v.values().sum();
    assert!(total >= 8);
    // Replays are captured on the previous hop; with 8 channels a small
    // number can land on the same carrier by chance.
    assert!(v.get(&AuthVerdict::FrequencyMismatch).copied().unwrap_or(0) * 2 > total, "{v:?}");
    assert!(r.legitimate_auth().all(|a| a.verdict == AuthVerdict::Accepted));
    assert_frames_backed_by_auth(&r, s.gateway.auth_validity_s);
}

#[test]
fn dual_key_rejects_every_replay_on_the_correct_carrier() {
    let s = preset("dual_key_demo").unwrap();
    let r = run(&s).unwrap();
    let v = adversarial_verdicts(&r);
    assert_eq!(v.get(&AuthVerdict::Accepted), None, "{v:?}");
    assert_eq!(r.gateway.adversarial_accepted, 0);
    assert!(r.legitimate_auth().count() > 0);
    assert!(r.legitimate_auth().all(|a| a.verdict == AuthVerdict::Accepted));
}

#[test]
fn strict_counter_policy_rejects_flooded_replays() {
    let permissive = run(&preset("dos_flood").unwrap()).unwrap();
    let mut s = preset("dos_flood").unwrap();
    s.gateway.policy = PolicyMode::StrictCounter;
    let strict = run(&s).unwrap();
    assert!(permissive.gateway.adversarial_accepted >= 100);
    assert_eq!(strict.gateway.adversarial_accepted, 0);
    // Both still pay for the airtime.
    assert!(strict.gateway.airtime_busy_s >= 10.0);
    assert!(strict.gateway.occupancy > 0.0);
}

#[test]
fn security_layer_never_admits_unauthenticated_frames() {
    for name in PRESET_NAMES {
        let s = preset(name).unwrap();
        if !s.gateway.security_layer {
            continue;
        }
        let r = run(&s).unwrap();
        assert_frames_backed_by_auth(&r, s.gateway.auth_validity_s);
    }
}

#[test]
fn different_seeds_change_the_noise_not_the_outcome() {
    let mut s = preset("wired_bench").unwrap();
    let a = run(&s).unwrap();
    s.seed += 1;
    let b = run(&s).unwrap();
    assert_ne!(a.to_json(), b.to_json());
    assert_eq!(
        a.legitimate_auth().map(|x| x.verdict).collect::<Vec<_>>(),
        b.legitimate_auth().map(|x| x.verdict).collect::<Vec<_>>()
    );
}

#[test]
fn starved_node_never_transmits() {
    let mut s = preset("wireless_single").unwrap();
    s.source.power_dbm = -20.0;
    let r = run(&s).unwrap();
    let n = &r.nodes[0];
    assert!(!n.cold_start_ok);
    assert_eq!(n.frames_sent, 0);
    assert!(r.uplinks.is_empty());
}

#[test]
fn report_json_has_documented_top_level_keys() {
    let r = run(&preset("wired_bench").unwrap()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for k in [
        "schema_version", "scenario", "seed", "duration_s", "synthetic_defaults", "event_counts", "nodes", "auth",
        "uplinks", "injections", "gateway", "ber", "collisions", "timeline",
    ] {
        assert!(v.get(k).is_some(), "{k}");
    }
}
