//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//! Runs without the libtest harness so the lines are always printed.

use std::time::{Duration, Instant};

use statrs::function::erf::erfc;
use swipt_core::adversary::{waveform_replay_campaign, CampaignSetup};
use swipt_core::auth::{AuthVerdict, HopBand, MonitorLevels, Strategy, VerifyConfig};
use swipt_core::codec::{ber_estimate, manchester_encode, PrivateKey};
use swipt_core::energy::{cycle_energy, CycleProfile, PhaseName};
use swipt_core::rectifier::{harvested_dc_power, EfficiencyCurve};
use swipt_core::rf_link::{
    dynamic_range_simplified, eirp, fspl, leakage_power, reflected_power_wired, Frequency, Gain, PowerLevel,
};
use swipt_core::sim::{preset, run, Report, PRESET_NAMES};

const EXACT_DB: f64 = 1e-9;
const FSPL_TOL_DB: f64 = 0.05;
const RECTIFIER_TOL: f64 = 0.10;
const WIRED_DR_DB: (f64, f64) = (16.0, 18.0);
const WIRELESS_DR_MAX_DB: f64 = 2.0;
const HOP_TOL: f64 = 0.01;
const DUAL_KEY_MAX_RATE: f64 = 0.01;
const BER_SIGMAS: f64 = 3.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let r = f();
    let took = t.elapsed();
    match r {
        Ok(d) if took < limit => Ok(format!("{d}; {took:.2?} < {limit:?}")),
        Ok(d) => Err(format!("{d}; took {took:.2?}, limit {limit:?}")),
        Err(d) => Err(d),
    }
}

fn f868() -> Frequency {
    Frequency::mhz(868.0).unwrap()
}

fn leak_wired() -> PowerLevel {
    leakage_power(PowerLevel::dbm(-10.0), Gain::db(20.0))
}

fn refl_wired() -> PowerLevel {
    reflected_power_wired(PowerLevel::dbm(-10.0), Gain::db(0.8), Gain::db(-0.6))
}

fn c01() -> Outcome {
    timed(Duration::from_millis(1), || {
        let p = leak_wired().value();
        check((p + 30.0).abs() <= EXACT_DB, format!("P_leak = {p} dBm"))
    })
}

fn c02() -> Outcome {
    let p = refl_wired().value();
    check((p + 12.2).abs() <= EXACT_DB, format!("P_refl = {p} dBm"))
}

fn c03() -> Outcome {
    let d = dynamic_range_simplified(refl_wired(), leak_wired()).value();
    check((d - 17.8).abs() <= EXACT_DB, format!("delta_P = {d} dB"))
}

fn c04() -> Outcome {
    let p = leakage_power(PowerLevel::dbm(15.0), Gain::db(20.0)).value();
    check((p + 5.0).abs() <= EXACT_DB, format!("P_leak = {p} dBm"))
}

fn c05() -> Outcome {
    let l = fspl(f868(), 1.61).map_err(|e| e.to_string())?.value();
    check((l - 35.4).abs() <= FSPL_TOL_DB, format!("FSPL = {l:.4} dB"))
}

fn c06() -> Outcome {
    let p = eirp(PowerLevel::dbm(15.0), Gain::db(9.2)).value();
    check((p - 24.2).abs() <= EXACT_DB, format!("EIRP = {p} dBm"))
}

fn c07() -> Outcome {
    let curve = EfficiencyCurve::default();
    let dc = harvested_dc_power(&curve, f868(), PowerLevel::dbm(-13.0));
    let mut worst = f64::INFINITY;
    for f in &curve.efficiency.freqs_mhz {
        for p in -15..=0 {
            let eff = curve.efficiency_at(Frequency::mhz(*f).unwrap(), PowerLevel::dbm(p as f64));
            worst = worst.min(eff);
        }
    }
    check(
        (dc - 15.0).abs() <= 15.0 * RECTIFIER_TOL && worst > 0.20,
        format!("DC = {dc:.2} uW at -13 dBm; min efficiency over -15..0 dBm = {worst:.3}"),
    )
}

fn c08() -> Outcome {
    let t = manchester_encode(&PrivateKey([0x5A; 16]), 2e-3).map_err(|e| e.to_string())?;
    let toggle = t.toggle_frequency_hz();
    check(
        t.chips.len() == 256 && (t.chip_duration_s - 7.8125e-6).abs() < 1e-15 && toggle <= 100e3,
        format!("{} chips of {:.4} us, toggle {:.1} kHz", t.chips.len(), t.chip_duration_s * 1e6, toggle / 1e3),
    )
}

fn run_preset(name: &str) -> Result<Report, String> {
    run(&preset(name).ok_or(format!("missing preset {name}"))?).map_err(|e| e.to_string())
}

fn c09() -> Outcome {
    timed(Duration::from_secs(1), || {
        let s = preset("wired_bench").unwrap();
        let r = run(&s).map_err(|e| e.to_string())?;
        let rows: Vec<_> = r.legitimate_auth().collect();
        let first = rows.first().ok_or("no identification window")?;
        let dr = first.dynamic_range_db.unwrap_or(f64::NAN);
        check(
            s.monitor.noise_sigma_db == 0.5
                && (WIRED_DR_DB.0..=WIRED_DR_DB.1).contains(&dr)
                && rows.iter().all(|a| a.verdict == AuthVerdict::Accepted && a.bit_errors == Some(0)),
            format!("observed delta_P = {dr:.3} dB, {} window(s) decoded with 0 bit errors at sigma 0.5 dB", rows.len()),
        )
    })
}

fn c10() -> Outcome {
    let r = run_preset("wireless_single")?;
    let drs: Vec<f64> = r.legitimate_auth().filter_map(|a| a.dynamic_range_db).collect();
    let max = drs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    check(!drs.is_empty() && max <= WIRELESS_DR_MAX_DB, format!("observed delta_P = {max:.3} dB"))
}

fn duplicates_by_kind(r: &Report, kind: &str) -> usize {
    r.injections
        .iter()
        .filter(|i| i.kind == kind && i.outcome == "accepted_duplicate")
        .count()
}

fn c11() -> Outcome {
    let r = run_preset("replay_abp_permissive")?;
    let same = duplicates_by_kind(&r, "sdr_same_channel");
    let cross = duplicates_by_kind(&r, "transceiver_cross_channel");
    check(
        same >= 1 && cross >= 1,
        format!("AcceptedDuplicate: same-channel {same}, cross-channel {cross}"),
    )
}

fn c12() -> Outcome {
    let mut s = preset("replay_abp_permissive").unwrap();
    s.gateway.security_layer = true;
    let r = run(&s).map_err(|e| e.to_string())?;
    let g = &r.gateway;
    let injected = r.injections.len();
    check(
        g.adversarial_accepted == 0 && g.legitimate_sent > 0 && g.legitimate_accepted == g.legitimate_sent && injected > 0,
        format!(
            "{injected} replays, {} adversarial accepted; legitimate {}/{} accepted",
            g.adversarial_accepted, g.legitimate_accepted, g.legitimate_sent
        ),
    )
}

fn campaign_setup() -> CampaignSetup {
    let p = PowerLevel::dbm(-10.0);
    let loss = Gain::db(0.8);
    CampaignSetup {
        levels: MonitorLevels {
            leak: leak_wired(),
            return_high: reflected_power_wired(p, loss, Gain::db(-0.6)),
            return_low: reflected_power_wired(p, loss, Gain::db(-25.0)),
            floor: PowerLevel::dbm(-60.0),
        },
        attacker_sigma_db: 0.5,
        monitor_sigma_db: 0.5,
        verify: VerifyConfig::default(),
        window_s: 2e-3,
    }
}

fn c13() -> Outcome {
    timed(Duration::from_secs(10), || {
        let band = HopBand::default();
        let k = band.channel_count();
        let s = waveform_replay_campaign(Strategy::Hopping, &band, 10_000, &campaign_setup(), 13);
        let rate = s.acceptance_rate();
        check(
            k == 8 && (rate - 1.0 / 8.0).abs() <= HOP_TOL,
            format!("K = {k}, acceptance {rate:.4} over {} epochs (target 0.125 +/- {HOP_TOL})", s.attempts),
        )
    })
}

fn c14() -> Outcome {
    let s = waveform_replay_campaign(Strategy::DualKey, &HopBand::default(), 1_000, &campaign_setup(), 14);
    let rate = s.acceptance_rate();
    check(
        s.attempts == 1000 && rate < DUAL_KEY_MAX_RATE,
        format!("{} of {} replays accepted ({rate:.4})", s.accepted, s.attempts),
    )
}

fn c15() -> Outcome {
    let e = cycle_energy(&CycleProfile::default());
    let share = e.share(PhaseName::BackscatterId);
    check(share < 0.01, format!("backscatter share {:.4}% of {:.2} mJ", share * 100.0, e.total_j * 1e3))
}

fn verdicts(r: &Report) -> Vec<AuthVerdict> {
    r.legitimate_auth().map(|a| a.verdict).collect()
}

fn c16() -> Outcome {
    let staggered = verdicts(&run_preset("wireless_two_node")?);
    let mut s = preset("wireless_two_node").unwrap();
    for n in &mut s.nodes {
        n.start_offset_s = 0.0;
    }
    let overlapped = verdicts(&run(&s).map_err(|e| e.to_string())?);
    check(
        staggered == [AuthVerdict::Accepted; 2] && overlapped == [AuthVerdict::CollisionDetected; 2],
        format!("staggered {staggered:?}, overlapping {overlapped:?}"),
    )
}

fn c17() -> Outcome {
    let mut differing = Vec::new();
    for name in PRESET_NAMES {
        if run_preset(name)?.to_json() != run_preset(name)?.to_json() {
            differing.push(name);
        }
    }
    check(
        differing.is_empty(),
        format!("{} presets rerun, differing: {differing:?}", PRESET_NAMES.len()),
    )
}

fn c18() -> Outcome {
    let sigma = 0.5;
    let bits = 200_000;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (i, dp) in [0.25, 0.5, 1.0, 1.5, 2.0].into_iter().enumerate() {
        let q = 0.5 * erfc(dp / (sigma * 2f64.sqrt()) / 2f64.sqrt());
        let est = ber_estimate(dp, sigma, bits, 1800 + i as u64);
        let se = (q * (1.0 - q) / bits as f64).sqrt();
        let z = (est.ber - q).abs() / se;
        worst = worst.max(z);
        lines.push(format!("{dp}:{:.5}/{q:.5}", est.ber));
    }
    check(
        worst <= BER_SIGMAS,
        format!("worst deviation {worst:.2} standard errors [{}]", lines.join(" ")),
    )
}

fn main() {
    let criteria: [Criterion; 18] = [
        ("leakage, wired bench", c01),
        ("wired reflection", c02),
        ("wired dynamic range", c03),
        ("leakage, wireless", c04),
        ("free-space path loss", c05),
        ("EIRP", c06),
        ("rectifier anchor", c07),
        ("codec timing", c08),
        ("wired bench scenario", c09),
        ("wireless single-node scenario", c10),
        ("ABP replay reproduction", c11),
        ("security layer countermeasure", c12),
        ("hopping defence", c13),
        ("dual-key defence", c14),
        ("backscatter energy share", c15),
        ("two-node collisions", c16),
        ("preset determinism", c17),
        ("BER oracle", c18),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:02} {tag}: {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
