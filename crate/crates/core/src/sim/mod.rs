//! Deterministic discrete-event simulation of a CN, its battery-free
//! nodes, the LoRaWAN gateway and any attackers.
//!
//! The CN may radiate several tones at once (one per open
//! identification when hopping); the monitor separates them per carrier,
//! so only windows on the same carrier interfere. Node storage is
//! integrated lazily and exactly between events, so `charge_tick_s` only
//! sets how often the state is refreshed.

mod queue;
mod report;
mod scenario;

pub use queue::{Event, EventKind, EventQueue, QueueError};
pub use report::{
    AuthRow, BerReport, EnergyLedger, GatewayReport, InjectionRow, NodeReport, Origin, Report, TimelineRow, UplinkRow,
};
pub use scenario::{
    parse_key, preset, preset_source, AttackerConfig, CarrierPolicy, GatewayConfig, MonitorConfig, NodeConfig,
    PathModel, Scenario, ScenarioError, SourceConfig, StorageConfig, PRESET_NAMES, SCHEMA_VERSION,
};

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::adversary::{Attacker, AttackerKind, Injection, Observable};
use crate::auth::{
    combine_chips, derive_pvk, dual_key_expected_trace, hop_next, random_envelope, verify_dual_key, verify_hopping,
    verify_pvk, AuthEvent, AuthLedger, AuthResult, AuthVerdict, AuthWindow, DualChip, HopBand, MonitorLevels,
    PublicKeyFingerprint, Strategy, VerifyConfig,
};
use crate::codec::{gaussian, hard_decisions, manchester_chips, PowerTrace, PrivateKey};
use crate::energy::{
    charge, cold_start_ready, time_to_ready, CycleProfile, PhaseName, PmuSpec, StorageState,
};
use crate::lorawan_abp::{
    build_frame, gateway_validate, in_channel_set, AbpFrame, AbpSession, FrameVerdict, GatewayHistory,
    GatewayPolicy, SessionKeys,
};
use crate::rectifier::{harvest_interruption_factor, harvested_dc_power, reflection_coefficient, GateState, ReflectionProfile};
use crate::rf_link::{
    backscatter_return_power, incident_power, leakage_power, reflected_power_wired, ChannelGeometry, Frequency, Gain,
    PowerLevel,
};
use crate::{seeded_rng, SimRng};

/// Windows on carriers closer than this are treated as the same channel.
const SAME_CARRIER_HZ: f64 = 1.0;

/// Indices of all windows that overlap another window on the same carrier.
pub fn detect_collision(windows: &[(usize, Frequency, AuthWindow)]) -> BTreeSet<usize> {
    let mut hit = BTreeSet::new();
    for (i, (a, fa, wa)) in windows.iter().enumerate() {
        for (b, fb, wb) in &windows[i + 1..] {
            if (fa.as_hz() - fb.as_hz()).abs() < SAME_CARRIER_HZ && wa.overlaps(wb) {
                hit.insert(*a);
                hit.insert(*b);
            }
        }
    }
    hit
}

/// Runs a validated copy of `scenario`.
pub fn run(scenario: &Scenario) -> Result<Report, ScenarioError> {
    scenario.validate()?;
    Ok(Engine::new(scenario).run())
}

fn snake<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

struct NodeState {
    id: u32,
    strategy: Strategy,
    pvk: PrivateKey,
    session: AbpSession,
    storage: StorageState,
    leakage_uw: f64,
    pmu: PmuSpec,
    cycle: CycleProfile,
    reflection: ReflectionProfile,
    geometry: Option<ChannelGeometry>,
    dc_uw: f64,
    powered_from_s: f64,
    last_update_s: f64,
    cycle_start_s: f64,
    fport: u8,
    report: NodeReport,
}

impl NodeState {
    fn phase_energy(&self, range: std::ops::Range<usize>) -> Vec<(PhaseName, f64)> {
        self.cycle.phases[range].iter().map(|p| (p.name, p.energy_j())).collect()
    }

    fn phase_index(&self, name: PhaseName) -> usize {
        self.cycle.phases.iter().position(|p| p.name == name).expect("validated cycle")
    }

    fn window_duration_s(&self) -> f64 {
        self.cycle.phase(PhaseName::BackscatterId).expect("validated cycle").duration_s
    }
}

enum WindowSignal {
    /// The node's own reflection chips.
    Node { chips: Vec<GateState>, levels: MonitorLevels },
    /// Replayed absolute return levels, unaffected by the CN's envelope.
    Injected { levels_dbm: Vec<f64> },
}

struct WindowState {
    origin: Origin,
    carrier: Frequency,
    event: AuthEvent,
    signal: WindowSignal,
    chip_duration_s: f64,
    chip_count: usize,
    observed: Vec<f64>,
    collided: bool,
    injection_row: Option<usize>,
}

impl WindowState {
    fn chip_index(&self, t: f64) -> Option<usize> {
        let w = self.event.window;
        if t < w.start_s || t >= w.end_s() {
            return None;
        }
        Some((((t - w.start_s) / self.chip_duration_s) as usize).min(self.chip_count - 1))
    }

    /// CN envelope state at `t`, when this window's event carries one.
    fn envelope_on(&self, t: f64) -> Option<bool> {
        let pattern = self.event.fingerprint.envelope_pattern.as_ref()?;
        let w = self.event.window;
        let k = (((t - w.start_s) / w.duration_s * pattern.len() as f64) as usize).min(pattern.len() - 1);
        Some(pattern[k] == GateState::Backscatter)
    }
}

struct PendingFrame {
    frame: AbpFrame,
    origin: Origin,
    tx_s: f64,
    injection_row: Option<usize>,
}

struct AttackerState {
    attacker: Attacker,
    cfg: AttackerConfig,
}

struct Engine<'a> {
    sc: &'a Scenario,
    rng: SimRng,
    queue: EventQueue,
    verify: VerifyConfig,
    noise: Option<Normal<f64>>,
    floor: PowerLevel,
    hop_band: Option<HopBand>,
    fixed_carrier: Option<Frequency>,
    channels: Vec<Frequency>,
    nodes: Vec<NodeState>,
    node_index: BTreeMap<u32, usize>,
    addr_to_node: BTreeMap<u32, u32>,
    sessions: BTreeMap<u32, SessionKeys>,
    attackers: Vec<AttackerState>,
    attacker_index: BTreeMap<u32, usize>,
    windows: Vec<WindowState>,
    active: Vec<usize>,
    frames: Vec<PendingFrame>,
    ledger: AuthLedger,
    policy: GatewayPolicy,
    history: GatewayHistory,
    busy_until_s: f64,
    event_counts: BTreeMap<String, u64>,
    auth_rows: Vec<AuthRow>,
    uplinks: Vec<UplinkRow>,
    injections: Vec<InjectionRow>,
    gateway: GatewayReport,
    ber: BerReport,
    collisions: u64,
    timeline: Vec<TimelineRow>,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let src = &sc.source;
        let harvest_freq = src.carrier.nominal().expect("validated carrier");
        let mut nodes = Vec::new();
        for n in &sc.nodes {
            let secret = parse_key(&n.shared_secret_hex).expect("validated key");
            let session = AbpSession::new(
                n.device_address,
                parse_key(&n.network_key_hex).expect("validated key"),
                parse_key(&n.application_key_hex).expect("validated key"),
            );
            let reflection = n.reflection_profile.clone().unwrap_or_default();
            let efficiency = n.efficiency_curve.clone().unwrap_or_default();
            let geometry = match src.path_model {
                PathModel::Wired => None,
                PathModel::FreeSpace => Some(
                    ChannelGeometry::new(
                        n.distance_m.expect("validated distance"),
                        Gain::db(src.antenna_gain_dbi),
                        Gain::db(n.antenna_gain_dbi),
                    )
                    .expect("validated distance"),
                ),
            };
            let incident = node_incident(sc, geometry.as_ref(), harvest_freq);
            let dc_uw = harvested_dc_power(&efficiency, harvest_freq, incident);
            let pmu = n.pmu.unwrap_or_default();
            let cycle = n.cycle.clone().unwrap_or_default();
            let nominal = monitor_levels(sc, &reflection, geometry.as_ref(), harvest_freq, PowerLevel::ZERO_POWER);
            let storage = StorageState::new(n.storage.capacitance_f, n.storage.initial_voltage_v).expect("validated");
            nodes.push(NodeState {
                id: n.id,
                strategy: n.strategy,
                pvk: derive_pvk(&secret, n.id, 0),
                session,
                storage,
                leakage_uw: n.storage.leakage_uw,
                pmu,
                cycle,
                reflection,
                geometry,
                dc_uw,
                powered_from_s: n.start_offset_s,
                last_update_s: n.start_offset_s,
                cycle_start_s: 0.0,
                fport: n.fport,
                report: NodeReport {
                    id: n.id,
                    device_address: n.device_address,
                    strategy: n.strategy,
                    incident_power_dbm: incident.value(),
                    dc_power_uw: dc_uw,
                    cold_start_ok: cold_start_ready(dc_uw, &pmu),
                    time_to_ready_s: None,
                    ready_at_s: None,
                    first_backscatter_s: None,
                    first_frame_s: None,
                    nominal_dynamic_range_db: (nominal.high() - nominal.low()).value(),
                    cycles: 0,
                    brownouts: 0,
                    auth_attempts: 0,
                    auth_verdicts: BTreeMap::new(),
                    frames_sent: 0,
                    frames_accepted: 0,
                    final_voltage_v: storage.voltage_v,
                    energy: EnergyLedger {
                        harvested_j: 0.0,
                        backscatter_loss_j: 0.0,
                        consumed_j: BTreeMap::new(),
                    },
                },
            });
        }
        let node_index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let addr_to_node = sc.nodes.iter().map(|n| (n.device_address, n.id)).collect();
        let sessions = nodes.iter().map(|n| (n.session.device_address, n.session.keys())).collect();
        let attackers: Vec<AttackerState> = sc
            .attackers
            .iter()
            .map(|a| {
                let mut attacker = Attacker::new(a.id, a.kind);
                if let Some(c) = a.listen_channel_mhz {
                    attacker = attacker.listening_on(Frequency::mhz(c).expect("validated channel"));
                }
                if let Some(t) = a.target_node {
                    attacker = attacker.targeting(t, a.capture_sigma_db);
                }
                AttackerState { attacker, cfg: a.clone() }
            })
            .collect();
        let attacker_index = attackers.iter().enumerate().map(|(i, a)| (a.cfg.id, i)).collect();
        Engine {
            sc,
            rng: seeded_rng(sc.seed),
            queue: EventQueue::new(),
            verify: sc.monitor.verify_config(),
            noise: gaussian(sc.monitor.noise_sigma_db),
            floor: sc.monitor.environment_floor_dbm.map_or(PowerLevel::ZERO_POWER, PowerLevel::dbm),
            hop_band: sc.source.carrier.hop_band(),
            fixed_carrier: match sc.source.carrier {
                CarrierPolicy::FixedMhz(f) => Frequency::mhz(f).ok(),
                CarrierPolicy::Hopping { .. } => None,
            },
            channels: sc.gateway.channels(),
            nodes,
            node_index,
            addr_to_node,
            sessions,
            attackers,
            attacker_index,
            windows: Vec::new(),
            active: Vec::new(),
            frames: Vec::new(),
            ledger: AuthLedger::new(),
            policy: GatewayPolicy {
                mode: sc.gateway.policy,
                duplicate_window_s: sc.gateway.duplicate_window_s,
            },
            history: GatewayHistory::new(),
            busy_until_s: 0.0,
            event_counts: BTreeMap::new(),
            auth_rows: Vec::new(),
            uplinks: Vec::new(),
            injections: Vec::new(),
            gateway: GatewayReport::default(),
            ber: BerReport::default(),
            collisions: 0,
            timeline: Vec::new(),
        }
    }

    fn schedule(&mut self, event: Event) {
        if event.time_s <= self.sc.duration_s {
            self.queue.schedule(event).expect("engine schedules forward in time");
        }
    }

    fn run(mut self) -> Report {
        let d = self.sc.duration_s;
        if !self.nodes.is_empty() {
            let ticks = (d / self.sc.charge_tick_s + 1e-9).floor() as usize;
            for k in 1..=ticks {
                self.schedule(Event::new(k as f64 * self.sc.charge_tick_s, EventKind::ChargeTick, 0).with_payload(k));
            }
        }
        let reports = (d / self.sc.report_tick_s + 1e-9).floor() as usize;
        for k in 1..=reports {
            self.schedule(Event::new(k as f64 * self.sc.report_tick_s, EventKind::ReportTick, 0));
        }
        for i in 0..self.nodes.len() {
            let start = self.nodes[i].powered_from_s;
            self.schedule_ready(i, start, true);
        }
        for a in &self.sc.attackers {
            for (k, t) in a.trigger_times_s.iter().enumerate() {
                if *t <= d {
                    self.queue
                        .schedule(Event::new(*t, EventKind::AttackTrigger, a.id).with_payload(k))
                        .expect("non-negative trigger");
                }
            }
        }

        while let Some(ev) = self.queue.advance() {
            *self.event_counts.entry(ev.kind.to_string()).or_insert(0) += 1;
            match ev.kind {
                EventKind::ChargeTick => self.update_all(ev.time_s),
                EventKind::ReportTick => self.report_tick(ev.time_s),
                EventKind::NodeReady => self.node_ready(ev.subject, ev.time_s),
                EventKind::AuthWindowStart => self.window_start(ev.subject, ev.time_s),
                EventKind::ChipEdge => self.chip_edge(ev.payload, ev.time_s),
                EventKind::AuthWindowEnd => self.window_end(ev.payload, ev.time_s),
                EventKind::FrameTx => self.frame_tx(ev.subject, ev.time_s),
                EventKind::FrameRx => self.frame_rx(ev.payload, ev.time_s),
                EventKind::AttackTrigger => self.attack(ev.subject, ev.time_s),
            }
        }
        self.finish()
    }

    fn update(&mut self, i: usize, now: f64) {
        let n = &mut self.nodes[i];
        let from = n.last_update_s.max(n.powered_from_s);
        if now <= from {
            return;
        }
        let dt = now - from;
        let harvest = if cold_start_ready(n.dc_uw, &n.pmu) { n.dc_uw } else { 0.0 };
        let before = n.storage.energy_j();
        let mut next = charge(n.storage, harvest, dt, n.leakage_uw);
        if next.voltage_v > n.pmu.rated_voltage_v {
            next = StorageState { voltage_v: n.pmu.rated_voltage_v, ..next };
        }
        n.report.energy.harvested_j += (next.energy_j() - before).max(0.0).min(harvest * dt * 1e-6);
        n.storage = next;
        n.last_update_s = now;
    }

    fn update_all(&mut self, now: f64) {
        for i in 0..self.nodes.len() {
            self.update(i, now);
        }
    }

    fn report_tick(&mut self, now: f64) {
        self.update_all(now);
        self.timeline.push(TimelineRow {
            time_s: now,
            voltage_v: self.nodes.iter().map(|n| (n.id, n.storage.voltage_v)).collect(),
        });
    }

    /// Schedules the next cycle start at the later of `earliest` and the
    /// moment storage reaches the ready voltage.
    fn schedule_ready(&mut self, i: usize, earliest: f64, first: bool) {
        let n = &self.nodes[i];
        if !cold_start_ready(n.dc_uw, &n.pmu) {
            return;
        }
        let now = n.last_update_s.max(n.powered_from_s);
        let Ok(wait) = time_to_ready(n.storage, n.dc_uw, n.pmu.ready_voltage_v, n.leakage_uw) else {
            return;
        };
        let at = (now + wait).max(earliest);
        if first {
            self.nodes[i].report.time_to_ready_s = Some(at - n.powered_from_s);
            self.nodes[i].report.ready_at_s = Some(at);
        }
        let id = self.nodes[i].id;
        self.schedule(Event::new(at, EventKind::NodeReady, id));
    }

    /// Debits phases; on brownout resets the node and waits for recharge.
    fn spend(&mut self, i: usize, now: f64, phases: &[(PhaseName, f64)]) -> bool {
        self.update(i, now);
        for (name, j) in phases {
            let n = &mut self.nodes[i];
            *n.report.energy.consumed_j.entry(*name).or_insert(0.0) += j;
            match n.storage.discharge(*j) {
                Ok(s) if s.voltage_v >= n.pmu.operating_voltage_v => n.storage = s,
                Ok(s) => {
                    n.storage = s;
                    return self.brownout(i, now);
                }
                Err(_) => {
                    n.storage = n.storage.with_energy(0.0);
                    return self.brownout(i, now);
                }
            }
        }
        true
    }

    fn brownout(&mut self, i: usize, now: f64) -> bool {
        self.nodes[i].report.brownouts += 1;
        self.schedule_ready(i, now, false);
        false
    }

    fn node_ready(&mut self, id: u32, now: f64) {
        let i = self.node_index[&id];
        self.update(i, now);
        self.nodes[i].cycle_start_s = now;
        let bid = self.nodes[i].phase_index(PhaseName::BackscatterId);
        let pre = self.nodes[i].phase_energy(0..bid);
        if self.spend(i, now, &pre) {
            let offset = self.nodes[i].cycle.offset_of(PhaseName::BackscatterId).expect("validated");
            self.schedule(Event::new(now + offset, EventKind::AuthWindowStart, id));
        }
    }

    fn draw_fingerprint(&mut self, strategy: Strategy) -> PublicKeyFingerprint {
        let carrier = match (self.fixed_carrier, &self.hop_band) {
            (Some(f), _) => f,
            (None, Some(b)) => hop_next(&mut self.rng, b).expect("validated band"),
            (None, None) => unreachable!("carrier policy is fixed or hopping"),
        };
        let envelope = (strategy == Strategy::DualKey).then(|| random_envelope(&mut self.rng));
        PublicKeyFingerprint::new(carrier, envelope).expect("validated band")
    }

    fn levels(&self, i: usize, carrier: Frequency) -> MonitorLevels {
        let n = &self.nodes[i];
        let mut l = monitor_levels(self.sc, &n.reflection, n.geometry.as_ref(), carrier, self.floor);
        l.floor = self.floor;
        l
    }

    fn window_start(&mut self, id: u32, now: f64) {
        let i = self.node_index[&id];
        let bid = self.nodes[i].phase_index(PhaseName::BackscatterId);
        let phase = self.nodes[i].phase_energy(bid..bid + 1);
        if !self.spend(i, now, &phase) {
            return;
        }
        let strategy = self.nodes[i].strategy;
        let fingerprint = self.draw_fingerprint(strategy);
        let carrier = fingerprint.carrier();
        let duration_s = self.nodes[i].window_duration_s();
        let chips = manchester_chips(self.nodes[i].pvk.bits());
        let levels = self.levels(i, carrier);
        let n = &mut self.nodes[i];
        n.report.first_backscatter_s.get_or_insert(now);
        let event = AuthEvent {
            node_id: id,
            strategy,
            expected_key: n.pvk,
            fingerprint,
            window: AuthWindow { start_s: now, duration_s },
        };
        self.open_window(WindowState {
            origin: Origin::Node(id),
            carrier,
            event,
            chip_duration_s: duration_s / chips.len() as f64,
            chip_count: chips.len(),
            signal: WindowSignal::Node { chips, levels },
            observed: Vec::new(),
            collided: false,
            injection_row: None,
        });
    }

    fn open_window(&mut self, w: WindowState) {
        let idx = self.windows.len();
        let subject = match w.origin {
            Origin::Node(id) | Origin::Attacker(id) => id,
        };
        let start = w.event.window.start_s;
        for k in 0..w.chip_count {
            self.schedule(Event::new(start + k as f64 * w.chip_duration_s, EventKind::ChipEdge, subject).with_payload(idx));
        }
        self.schedule(Event::new(w.event.window.end_s(), EventKind::AuthWindowEnd, subject).with_payload(idx));
        self.windows.push(w);
        self.active.push(idx);
        let set: Vec<_> = self
            .active
            .iter()
            .map(|&j| (j, self.windows[j].carrier, self.windows[j].event.window))
            .collect();
        for j in detect_collision(&set) {
            self.windows[j].collided = true;
        }
    }

    /// Monitor sample on the carrier of window `idx` at chip centre.
    fn chip_edge(&mut self, idx: usize, now: f64) {
        let w = &self.windows[idx];
        let t = now + 0.5 * w.chip_duration_s;
        let carrier = w.carrier;
        let on_carrier: Vec<&WindowState> = self
            .active
            .iter()
            .map(|&j| &self.windows[j])
            .filter(|o| (o.carrier.as_hz() - carrier.as_hz()).abs() < SAME_CARRIER_HZ)
            .collect();
        // The earliest open enveloped event on this carrier shapes the wave.
        let wave_on = on_carrier.iter().find_map(|o| o.envelope_on(t)).unwrap_or(true);
        let mut mw = self.floor.to_mw();
        if wave_on {
            mw += leakage_power(PowerLevel::dbm(self.sc.source.power_dbm), Gain::db(self.sc.source.circulator_isolation_db))
                .to_mw();
        }
        for o in &on_carrier {
            let Some(k) = o.chip_index(t) else { continue };
            match &o.signal {
                WindowSignal::Node { chips, levels } if wave_on => {
                    mw += match chips[k] {
                        GateState::Backscatter => levels.return_high.to_mw(),
                        GateState::Harvest => levels.return_low.to_mw(),
                    };
                }
                WindowSignal::Node { .. } => {}
                WindowSignal::Injected { levels_dbm } => mw += PowerLevel::dbm(levels_dbm[k]).to_mw(),
            }
        }
        let noise = self.noise.as_ref().map_or(0.0, |n| n.sample(&mut self.rng));
        let level = PowerLevel::from_mw(mw).value() + noise;
        self.windows[idx].observed.push(level);
    }

    fn window_end(&mut self, idx: usize, now: f64) {
        self.active.retain(|&j| j != idx);
        let w = &self.windows[idx];
        let claimed = w.event.node_id;
        let ni = self.node_index[&claimed];
        let trace = PowerTrace {
            start_time_s: w.event.window.start_s,
            chip_duration_s: w.event.window.duration_s / w.observed.len().max(1) as f64,
            levels_dbm: w.observed.clone(),
            noise_sigma_db: self.sc.monitor.noise_sigma_db,
        };
        let expected_carrier = w.event.fingerprint.carrier();
        let mut result = match w.event.strategy {
            Strategy::Pvk => verify_pvk(&trace, &w.event.expected_key, w.event.window, &self.verify),
            Strategy::Hopping => verify_hopping(w.carrier, &trace, &w.event, &self.verify),
            Strategy::DualKey => {
                let levels = self.levels(ni, expected_carrier);
                match dual_key_expected_trace(&w.event.fingerprint, &w.event.expected_key, w.event.window, &levels) {
                    Ok(template) => verify_dual_key(&trace, &template, self.verify.correlation_threshold),
                    Err(_) => AuthResult::new(AuthVerdict::DecodeFailure, 0.0),
                }
            }
        };
        if w.collided {
            result = AuthResult::new(AuthVerdict::CollisionDetected, result.correlation_score);
            self.collisions += 1;
        }
        self.ledger.record(claimed, result, now, self.sc.gateway.auth_validity_s);

        let (dynamic_range_db, bit_errors) = match &w.signal {
            WindowSignal::Node { chips, .. } => {
                let dual: Vec<DualChip> = match &w.event.fingerprint.envelope_pattern {
                    Some(env) => combine_chips(env, chips).unwrap_or_default(),
                    None => chips.iter().map(|c| DualChip::On(*c)).collect(),
                };
                let errors = (w.event.strategy != Strategy::DualKey).then(|| {
                    hard_decisions(&w.observed)
                        .iter()
                        .zip(w.event.expected_key.bits())
                        .filter(|(a, b)| **a != *b)
                        .count() as u32
                });
                (observed_dynamic_range(&dual, &w.observed), errors)
            }
            WindowSignal::Injected { .. } => (None, None),
        };
        if let Some(e) = bit_errors {
            self.ber.bits += w.observed.len() as u64 / 2;
            self.ber.errors += e as u64;
        }
        let row = AuthRow {
            start_s: w.event.window.start_s,
            end_s: now,
            node_id: claimed,
            source: w.origin.label(),
            strategy: w.event.strategy,
            carrier_mhz: w.carrier.as_mhz(),
            expected_carrier_mhz: expected_carrier.as_mhz(),
            verdict: result.verdict,
            score: result.correlation_score,
            collided: w.collided,
            dynamic_range_db,
            bit_errors,
        };
        self.auth_rows.push(row);
        if let Some(r) = w.injection_row {
            self.injections[r].outcome = format!("auth:{}", snake(&result.verdict));
        }

        let Origin::Node(id) = w.origin else { return };
        let nominal: Vec<f64> = match &w.signal {
            WindowSignal::Node { chips, levels } => (0..w.chip_count)
                .map(|k| {
                    let t = w.event.window.start_s + (k as f64 + 0.5) * w.chip_duration_s;
                    if w.envelope_on(t) == Some(false) {
                        f64::NEG_INFINITY
                    } else if chips[k] == GateState::Backscatter {
                        levels.return_high.value()
                    } else {
                        levels.return_low.value()
                    }
                })
                .collect(),
            WindowSignal::Injected { .. } => unreachable!("node origin"),
        };
        let capture = PowerTrace {
            start_time_s: w.event.window.start_s,
            chip_duration_s: w.chip_duration_s,
            levels_dbm: nominal,
            noise_sigma_db: 0.0,
        };
        let carrier = w.carrier;
        for a in &mut self.attackers {
            a.attacker.capture(
                Observable::Waveform { node_id: id, carrier, trace: &capture, at_s: now },
                &mut self.rng,
            );
        }

        let n = &mut self.nodes[ni];
        n.report.auth_attempts += 1;
        *n.report.auth_verdicts.entry(result.verdict).or_insert(0) += 1;
        let duration = w.event.window.duration_s;
        let lost = n.dc_uw * 1e-6 * duration * (1.0 - harvest_interruption_factor(0.5));
        n.report.energy.backscatter_loss_j += lost;
        let bid = n.phase_index(PhaseName::BackscatterId);
        let tx = n.phase_index(PhaseName::LoRaTx);
        let mut mid = n.phase_energy(bid + 1..tx);
        mid.push((PhaseName::BackscatterId, 0.0));
        n.storage = n.storage.with_energy(n.storage.energy_j() - lost);
        let tx_at = n.cycle_start_s + n.cycle.offset_of(PhaseName::LoRaTx).expect("validated");
        if self.spend(ni, now, &mid) {
            self.schedule(Event::new(tx_at.max(now), EventKind::FrameTx, id));
        }
    }

    fn frame_tx(&mut self, id: u32, now: f64) {
        let i = self.node_index[&id];
        let tx = self.nodes[i].phase_index(PhaseName::LoRaTx);
        let phase = self.nodes[i].phase_energy(tx..tx + 1);
        if !self.spend(i, now, &phase) {
            return;
        }
        let n = &mut self.nodes[i];
        let channel = self.channels[n.session.uplink_counter as usize % self.channels.len()];
        let payload = format!("node={} cycle={}", id, n.report.cycles);
        let frame = build_frame(&mut n.session, n.fport, payload.as_bytes(), channel, &self.channels)
            .expect("channel from the gateway set");
        n.report.frames_sent += 1;
        n.report.first_frame_s.get_or_insert(now);
        n.report.cycles += 1;
        for a in &mut self.attackers {
            a.attacker.capture(Observable::Frame { frame: &frame, at_s: now }, &mut self.rng);
        }
        self.gateway.legitimate_sent += 1;
        let f = self.frames.len();
        self.frames.push(PendingFrame { frame, origin: Origin::Node(id), tx_s: now, injection_row: None });
        self.schedule(Event::new(now + self.sc.gateway.frame_airtime_s, EventKind::FrameRx, id).with_payload(f));

        let post = self.nodes[i].phase_energy(tx + 1..self.nodes[i].cycle.phases.len());
        if self.spend(i, now, &post) {
            let end = self.nodes[i].cycle_start_s + self.nodes[i].cycle.total_duration_s();
            self.schedule_ready(i, end, false);
        }
    }

    fn frame_rx(&mut self, f: usize, now: f64) {
        let airtime = self.sc.gateway.frame_airtime_s;
        let start = now - airtime;
        self.gateway.airtime_busy_s += (now - start.max(self.busy_until_s)).max(0.0);
        self.busy_until_s = self.busy_until_s.max(now);
        self.gateway.frames_received += 1;

        let pf = &self.frames[f];
        let frame = &pf.frame;
        let outcome;
        let mut accepted = false;
        if !in_channel_set(frame.channel, &self.channels) {
            self.gateway.channel_rejected += 1;
            outcome = "channel_not_allowed".to_string();
        } else {
            let gate = self.sc.gateway.security_layer.then(|| {
                match self.addr_to_node.get(&frame.device_address) {
                    Some(node) => self.ledger.gate_uplink(*node, now),
                    None => crate::auth::GateDecision::RejectNoAuth,
                }
            });
            match gate {
                Some(g) if !g.is_accept() => {
                    self.gateway.gate_rejected += 1;
                    outcome = format!("gate:{}", snake(&g));
                }
                _ => {
                    let v = gateway_validate(frame, &self.sessions, &self.policy, &mut self.history, now);
                    *self.gateway.verdicts.entry(snake(&v)).or_insert(0) += 1;
                    if v == FrameVerdict::AcceptedDuplicate {
                        self.gateway.duplicates += 1;
                    }
                    accepted = v.is_accepted();
                    outcome = snake(&v);
                }
            }
        }
        if accepted {
            match pf.origin {
                Origin::Node(id) => {
                    self.gateway.legitimate_accepted += 1;
                    let i = self.node_index[&id];
                    self.nodes[i].report.frames_accepted += 1;
                }
                Origin::Attacker(_) => self.gateway.adversarial_accepted += 1,
            }
        }
        if let Some(r) = pf.injection_row {
            self.injections[r].outcome = outcome.clone();
        }
        self.uplinks.push(UplinkRow {
            tx_s: pf.tx_s,
            rx_s: now,
            device_address: frame.device_address,
            frame_counter: frame.frame_counter,
            channel_mhz: frame.channel.as_mhz(),
            source: pf.origin.label(),
            outcome,
            accepted,
        });
    }

    fn inject_frame(&mut self, attacker: u32, kind: AttackerKind, frame: AbpFrame, at: f64) {
        let row = self.injections.len();
        self.injections.push(InjectionRow {
            at_s: at,
            attacker_id: attacker,
            kind: snake(&kind),
            target: format!("{:#010x}@{:.1}MHz", frame.device_address, frame.channel.as_mhz()),
            outcome: "pending".into(),
        });
        let f = self.frames.len();
        self.frames.push(PendingFrame { frame, origin: Origin::Attacker(attacker), tx_s: at, injection_row: Some(row) });
        self.schedule(Event::new(at + self.sc.gateway.frame_airtime_s, EventKind::FrameRx, attacker).with_payload(f));
    }

    fn attack(&mut self, id: u32, now: f64) {
        let a = &self.attackers[self.attacker_index[&id]];
        let kind = a.cfg.kind;
        let result = match kind {
            AttackerKind::DosFlooder => a.attacker.dos_flood(
                a.cfg.flood_rate_per_s.expect("validated"),
                a.cfg.flood_duration_s.expect("validated"),
                now,
                &self.channels,
            ),
            _ => a.attacker.replay(now, &self.channels).map(|i| vec![i]),
        };
        let injections = match result {
            Ok(v) => v,
            Err(e) => {
                self.injections.push(InjectionRow {
                    at_s: now,
                    attacker_id: id,
                    kind: snake(&kind),
                    target: String::new(),
                    outcome: format!("failed:{e}"),
                });
                return;
            }
        };
        for inj in injections {
            match inj {
                Injection::Frame { frame, at_s } => self.inject_frame(id, kind, frame, at_s),
                Injection::Waveform { node_id, carrier, trace, at_s } => {
                    self.inject_waveform(id, kind, node_id, carrier, trace, at_s)
                }
            }
        }
    }

    /// The CN sees identification activity and opens a fresh challenge
    /// for the claimed node.
    fn inject_waveform(
        &mut self,
        attacker: u32,
        kind: AttackerKind,
        node_id: u32,
        carrier: Frequency,
        trace: PowerTrace,
        at: f64,
    ) {
        let strategy = self.nodes[self.node_index[&node_id]].strategy;
        let fingerprint = self.draw_fingerprint(strategy);
        let duration_s = trace.chip_duration_s * trace.len() as f64;
        let row = self.injections.len();
        self.injections.push(InjectionRow {
            at_s: at,
            attacker_id: attacker,
            kind: snake(&kind),
            target: format!("node:{node_id}@{:.4}MHz", carrier.as_mhz()),
            outcome: "pending".into(),
        });
        let expected_key = self.nodes[self.node_index[&node_id]].pvk;
        self.open_window(WindowState {
            origin: Origin::Attacker(attacker),
            carrier,
            event: AuthEvent {
                node_id,
                strategy,
                expected_key,
                fingerprint,
                window: AuthWindow { start_s: at, duration_s },
            },
            chip_duration_s: trace.chip_duration_s,
            chip_count: trace.len(),
            signal: WindowSignal::Injected { levels_dbm: trace.levels_dbm },
            observed: Vec::new(),
            collided: false,
            injection_row: Some(row),
        });
    }

    fn finish(mut self) -> Report {
        let d = self.sc.duration_s;
        self.update_all(d);
        let duration = self.sc.duration_s;
        self.gateway.occupancy = if duration > 0.0 { (self.gateway.airtime_busy_s / duration).min(1.0) } else { 0.0 };
        self.ber.ber = if self.ber.bits > 0 { self.ber.errors as f64 / self.ber.bits as f64 } else { 0.0 };
        let synthetic_defaults = self
            .sc
            .nodes
            .iter()
            .any(|n| n.reflection_profile.is_none() || n.efficiency_curve.is_none());
        let nodes = self
            .nodes
            .into_iter()
            .map(|mut n| {
                n.report.final_voltage_v = n.storage.voltage_v;
                n.report
            })
            .collect();
        Report {
            schema_version: SCHEMA_VERSION,
            scenario: self.sc.name.clone(),
            seed: self.sc.seed,
            duration_s: self.sc.duration_s,
            synthetic_defaults,
            event_counts: self.event_counts,
            nodes,
            auth: self.auth_rows,
            uplinks: self.uplinks,
            injections: self.injections,
            gateway: self.gateway,
            ber: self.ber,
            collisions: self.collisions,
            timeline: self.timeline,
        }
    }
}

fn node_incident(sc: &Scenario, geometry: Option<&ChannelGeometry>, carrier: Frequency) -> PowerLevel {
    let p = PowerLevel::dbm(sc.source.power_dbm);
    let loss = Gain::db(sc.source.forward_loss_db);
    match geometry {
        None => p - loss,
        Some(g) => incident_power(p, loss, g, carrier).expect("validated geometry"),
    }
}

/// Nominal monitor levels for one node on `carrier`.
fn monitor_levels(
    sc: &Scenario,
    reflection: &ReflectionProfile,
    geometry: Option<&ChannelGeometry>,
    carrier: Frequency,
    floor: PowerLevel,
) -> MonitorLevels {
    let p = PowerLevel::dbm(sc.source.power_dbm);
    let loss = Gain::db(sc.source.forward_loss_db);
    let incident = node_incident(sc, geometry, carrier);
    let ret = |gate| {
        let s11 = reflection_coefficient(reflection, gate, carrier, incident).expect("validated band coverage");
        match geometry {
            None => reflected_power_wired(p, loss, s11),
            Some(g) => backscatter_return_power(p, loss, g, carrier, s11).expect("validated geometry"),
        }
    };
    MonitorLevels {
        leak: leakage_power(p, Gain::db(sc.source.circulator_isolation_db)),
        return_high: ret(GateState::Backscatter),
        return_low: ret(GateState::Harvest),
        floor,
    }
}

/// Mean observed level on high chips minus mean on low chips, counting
/// only chips where the power wave was on.
fn observed_dynamic_range(chips: &[DualChip], observed: &[f64]) -> Option<f64> {
    let (mut hi, mut nh, mut lo, mut nl) = (0.0, 0usize, 0.0, 0usize);
    for (c, v) in chips.iter().zip(observed) {
        match c {
            DualChip::On(GateState::Backscatter) => {
                hi += v;
                nh += 1;
            }
            DualChip::On(GateState::Harvest) => {
                lo += v;
                nl += 1;
            }
            DualChip::Off => {}
        }
    }
    (nh > 0 && nl > 0).then(|| hi / nh as f64 - lo / nl as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(m: f64) -> Frequency {
        Frequency::mhz(m).unwrap()
    }

    fn w(start: f64) -> AuthWindow {
        AuthWindow { start_s: start, duration_s: 2e-3 }
    }

    #[test]
    fn collisions_need_same_carrier_and_overlap() {
        let set = [(0, f(868.0), w(0.0)), (1, f(868.0), w(1.0)), (2, f(868.0), w(1.001)), (3, f(866.0), w(0.0))];
        assert_eq!(detect_collision(&set), BTreeSet::from([1, 2]));
        assert!(detect_collision(&[]).is_empty());
        assert!(detect_collision(&[(0, f(868.0), w(0.0)), (1, f(868.0), w(2e-3))]).is_empty());
    }

    #[test]
    fn empty_scenario_only_report_ticks() {
        let mut s = preset("wired_bench").unwrap();
        s.nodes.clear();
        s.attackers.clear();
        s.duration_s = 600.0;
        s.report_tick_s = 60.0;
        let r = run(&s).unwrap();
        assert_eq!(r.event_counts.len(), 1);
        assert_eq!(r.event_counts["report_tick"], 10);
        assert!(r.auth.is_empty() && r.uplinks.is_empty() && r.nodes.is_empty());
    }

    #[test]
    fn energy_causality() {
        for name in PRESET_NAMES {
            let r = run(&preset(name).unwrap()).unwrap();
            for n in &r.nodes {
                if let Some(t) = n.first_backscatter_s {
                    assert!(n.cold_start_ok);
                    assert!(t >= n.ready_at_s.unwrap() - 1e-9, "{name} node {}", n.id);
                }
                if let Some(t) = n.first_frame_s {
                    assert!(t >= n.first_backscatter_s.unwrap());
                }
            }
        }
    }

    #[test]
    fn below_cold_start_never_transmits() {
        let mut s = preset("wired_bench").unwrap();
        s.source.power_dbm = -30.0;
        let r = run(&s).unwrap();
        let n = &r.nodes[0];
        assert!(!n.cold_start_ok);
        assert!(n.time_to_ready_s.is_none() && n.first_backscatter_s.is_none());
        assert!(r.auth.is_empty());
    }

    #[test]
    fn isolation_monotonicity() {
        let mut last = f64::NEG_INFINITY;
        for iso in [10.0, 15.0, 20.0, 25.0, 30.0, 40.0] {
            let mut s = preset("wireless_single").unwrap();
            s.source.circulator_isolation_db = iso;
            let r = run(&s).unwrap();
            let dr = r.legitimate_auth().next().unwrap().dynamic_range_db.unwrap();
            assert!(dr >= last - 1e-12, "isolation {iso}: {dr} < {last}");
            last = dr;
        }
    }

    #[test]
    fn overlapping_hop_carriers_do_not_collide() {
        let mut s = preset("wireless_two_node").unwrap();
        for n in &mut s.nodes {
            n.start_offset_s = 0.0;
            n.strategy = Strategy::Hopping;
        }
        s.source.carrier = CarrierPolicy::Hopping { low_mhz: 863.0, high_mhz: 870.0, grid_khz: 875.0 };
        // Seeds where the two draws differ give two acceptances; equal
        // draws collide.
        let mut distinct_seen = false;
        for seed in 0..20 {
            s.seed = seed;
            let r = run(&s).unwrap();
            let rows: Vec<_> = r.legitimate_auth().collect();
            assert_eq!(rows.len(), 2);
            if rows[0].carrier_mhz != rows[1].carrier_mhz {
                distinct_seen = true;
                assert!(rows.iter().all(|a| a.verdict == AuthVerdict::Accepted), "seed {seed}: {rows:?}");
            } else {
                assert!(rows.iter().all(|a| a.verdict == AuthVerdict::CollisionDetected));
            }
        }
        assert!(distinct_seen);
    }

    #[test]
    fn security_layer_subset_property() {
        for name in PRESET_NAMES {
            let mut s = preset(name).unwrap();
            s.gateway.security_layer = true;
            let r = run(&s).unwrap();
            assert_eq!(r.gateway.adversarial_accepted, 0, "{name}");
        }
    }
}
