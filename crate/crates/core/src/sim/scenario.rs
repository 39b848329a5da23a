//! Scenario files: a versioned JSON tree with unit-suffixed keys. Unknown
//! keys are rejected and validation reports every problem at once.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AttackerKind;
use crate::auth::{HopBand, Strategy, VerifyConfig, ISM_HIGH_HZ, ISM_LOW_HZ};
use crate::energy::{CycleProfile, PhaseName, PmuSpec, StorageState};
use crate::lorawan_abp::PolicyMode;
use crate::rectifier::{EfficiencyCurve, ReflectionProfile};
use crate::rf_link::Frequency;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario is invalid: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default = "default_charge_tick")]
    pub charge_tick_s: f64,
    #[serde(default = "default_report_tick")]
    pub report_tick_s: f64,
    pub source: SourceConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub attackers: Vec<AttackerConfig>,
}

fn default_charge_tick() -> f64 {
    0.1
}
fn default_report_tick() -> f64 {
    60.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathModel {
    /// Cabled bench: no antennas or free-space terms, only `forward_loss_db`.
    Wired,
    FreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CarrierPolicy {
    FixedMhz(f64),
    Hopping { low_mhz: f64, high_mhz: f64, grid_khz: f64 },
}

impl CarrierPolicy {
    pub fn hop_band(&self) -> Option<HopBand> {
        match *self {
            CarrierPolicy::FixedMhz(_) => None,
            CarrierPolicy::Hopping { low_mhz, high_mhz, grid_khz } => Some(HopBand {
                low_hz: low_mhz * 1e6,
                high_hz: high_mhz * 1e6,
                grid_hz: grid_khz * 1e3,
            }),
        }
    }

    /// Every carrier the source may radiate.
    pub fn carriers(&self) -> Vec<Frequency> {
        match *self {
            CarrierPolicy::FixedMhz(f) => Frequency::mhz(f).into_iter().collect(),
            CarrierPolicy::Hopping { .. } => self
                .hop_band()
                .and_then(|b| b.channels().ok())
                .unwrap_or_default(),
        }
    }

    /// Frequency used for harvesting estimates: the fixed carrier or the
    /// centre of the hop band.
    pub fn nominal(&self) -> Option<Frequency> {
        match *self {
            CarrierPolicy::FixedMhz(f) => Frequency::mhz(f).ok(),
            CarrierPolicy::Hopping { low_mhz, high_mhz, .. } => Frequency::mhz(0.5 * (low_mhz + high_mhz)).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub power_dbm: f64,
    pub carrier: CarrierPolicy,
    #[serde(default)]
    pub antenna_gain_dbi: f64,
    #[serde(default)]
    pub forward_loss_db: f64,
    pub circulator_isolation_db: f64,
    #[serde(default = "default_path_model")]
    pub path_model: PathModel,
}

fn default_path_model() -> PathModel {
    PathModel::FreeSpace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default)]
    pub noise_sigma_db: f64,
    /// Constant environmental backscatter at the monitor; `null` removes it.
    #[serde(default = "default_floor")]
    pub environment_floor_dbm: Option<f64>,
    #[serde(default = "default_guard")]
    pub guard_margin_db: f64,
    #[serde(default = "default_window_tolerance")]
    pub window_tolerance_s: f64,
    #[serde(default = "default_frequency_tolerance")]
    pub frequency_tolerance_hz: f64,
    #[serde(default = "default_threshold")]
    pub correlation_threshold: f64,
}

fn default_floor() -> Option<f64> {
    Some(-40.0)
}
fn default_guard() -> f64 {
    VerifyConfig::default().guard_margin_db
}
fn default_window_tolerance() -> f64 {
    VerifyConfig::default().window_tolerance_s
}
fn default_frequency_tolerance() -> f64 {
    VerifyConfig::default().frequency_tolerance_hz
}
fn default_threshold() -> f64 {
    VerifyConfig::default().correlation_threshold
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            noise_sigma_db: 0.0,
            environment_floor_dbm: default_floor(),
            guard_margin_db: default_guard(),
            window_tolerance_s: default_window_tolerance(),
            frequency_tolerance_hz: default_frequency_tolerance(),
            correlation_threshold: default_threshold(),
        }
    }
}

impl MonitorConfig {
    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            guard_margin_db: self.guard_margin_db,
            window_tolerance_s: self.window_tolerance_s,
            frequency_tolerance_hz: self.frequency_tolerance_hz,
            correlation_threshold: self.correlation_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    #[serde(default = "default_capacitance")]
    pub capacitance_f: f64,
    #[serde(default)]
    pub initial_voltage_v: f64,
    #[serde(default)]
    pub leakage_uw: f64,
}

fn default_capacitance() -> f64 {
    0.022
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig {
            capacitance_f: default_capacitance(),
            initial_voltage_v: 0.0,
            leakage_uw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u32,
    pub device_address: u32,
    /// Required for the free-space path model, ignored on a wired bench.
    #[serde(default)]
    pub distance_m: Option<f64>,
    #[serde(default)]
    pub antenna_gain_dbi: f64,
    pub strategy: Strategy,
    pub shared_secret_hex: String,
    pub network_key_hex: String,
    pub application_key_hex: String,
    /// When the node is placed in the field and starts harvesting.
    #[serde(default)]
    pub start_offset_s: f64,
    #[serde(default)]
    pub storage: StorageConfig,
    #[serde(default)]
    pub pmu: Option<PmuSpec>,
    #[serde(default)]
    pub cycle: Option<CycleProfile>,
    #[serde(default)]
    pub reflection_profile: Option<ReflectionProfile>,
    #[serde(default)]
    pub efficiency_curve: Option<EfficiencyCurve>,
    #[serde(default = "default_port")]
    pub fport: u8,
}

fn default_port() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_policy")]
    pub policy: PolicyMode,
    #[serde(default = "default_duplicate_window")]
    pub duplicate_window_s: f64,
    /// Gate uplinks on a fresh accepted backscatter identification.
    #[serde(default)]
    pub security_layer: bool,
    #[serde(default = "default_validity")]
    pub auth_validity_s: f64,
    #[serde(default = "default_channels")]
    pub channels_mhz: Vec<f64>,
    #[serde(default = "default_airtime")]
    pub frame_airtime_s: f64,
}

fn default_policy() -> PolicyMode {
    PolicyMode::Permissive
}
fn default_duplicate_window() -> f64 {
    3600.0
}
fn default_validity() -> f64 {
    1.0
}
fn default_channels() -> Vec<f64> {
    vec![868.1, 868.3, 868.5]
}
fn default_airtime() -> f64 {
    0.2
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            policy: default_policy(),
            duplicate_window_s: default_duplicate_window(),
            security_layer: false,
            auth_validity_s: default_validity(),
            channels_mhz: default_channels(),
            frame_airtime_s: default_airtime(),
        }
    }
}

impl GatewayConfig {
    pub fn channels(&self) -> Vec<Frequency> {
        self.channels_mhz.iter().filter_map(|m| Frequency::mhz(*m).ok()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerConfig {
    pub id: u32,
    pub kind: AttackerKind,
    #[serde(default)]
    pub listen_channel_mhz: Option<f64>,
    #[serde(default)]
    pub target_node: Option<u32>,
    #[serde(default)]
    pub capture_sigma_db: f64,
    #[serde(default)]
    pub trigger_times_s: Vec<f64>,
    #[serde(default)]
    pub flood_rate_per_s: Option<f64>,
    #[serde(default)]
    pub flood_duration_s: Option<f64>,
}

pub fn parse_key(hex_str: &str) -> Option<[u8; 16]> {
    hex::decode(hex_str).ok()?.try_into().ok()
}

fn finite_nonneg(errors: &mut Vec<String>, what: &str, v: f64) {
    if !(v.is_finite() && v >= 0.0) {
        errors.push(format!("{what} must be finite and >= 0, got {v}"));
    }
}

fn positive(errors: &mut Vec<String>, what: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errors.push(format!("{what} must be finite and > 0, got {v}"));
    }
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errors = self.problems();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errors))
        }
    }

    /// Every violated constraint, in file order.
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            e.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        finite_nonneg(&mut e, "duration_s", self.duration_s);
        positive(&mut e, "charge_tick_s", self.charge_tick_s);
        positive(&mut e, "report_tick_s", self.report_tick_s);

        let s = &self.source;
        if !s.power_dbm.is_finite() {
            e.push(format!("source.power_dbm must be finite, got {}", s.power_dbm));
        }
        finite_nonneg(&mut e, "source.circulator_isolation_db", s.circulator_isolation_db);
        finite_nonneg(&mut e, "source.forward_loss_db", s.forward_loss_db);
        if !s.antenna_gain_dbi.is_finite() {
            e.push("source.antenna_gain_dbi must be finite".into());
        }
        let ism = ISM_LOW_HZ / 1e6..=ISM_HIGH_HZ / 1e6;
        match s.carrier {
            CarrierPolicy::FixedMhz(f) => {
                if !ism.contains(&f) {
                    e.push(format!("source.carrier.fixed_mhz {f} lies outside the 863-870 MHz band"));
                }
            }
            CarrierPolicy::Hopping { low_mhz, high_mhz, grid_khz } => {
                if !(ism.contains(&low_mhz) && ism.contains(&high_mhz)) {
                    e.push(format!(
                        "source.carrier.hopping band {low_mhz}-{high_mhz} MHz lies outside 863-870 MHz"
                    ));
                }
                if s.carrier.carriers().is_empty() {
                    e.push(format!(
                        "source.carrier.hopping grid {grid_khz} kHz yields no channel in {low_mhz}-{high_mhz} MHz"
                    ));
                }
            }
        }

        let m = &self.monitor;
        finite_nonneg(&mut e, "monitor.noise_sigma_db", m.noise_sigma_db);
        finite_nonneg(&mut e, "monitor.guard_margin_db", m.guard_margin_db);
        finite_nonneg(&mut e, "monitor.window_tolerance_s", m.window_tolerance_s);
        finite_nonneg(&mut e, "monitor.frequency_tolerance_hz", m.frequency_tolerance_hz);
        if !(m.correlation_threshold > 0.0 && m.correlation_threshold <= 1.0) {
            e.push(format!(
                "monitor.correlation_threshold must lie in (0, 1], got {}",
                m.correlation_threshold
            ));
        }
        if m.environment_floor_dbm.is_some_and(|f| !f.is_finite()) {
            e.push("monitor.environment_floor_dbm must be finite or null".into());
        }

        let mut ids = BTreeSet::new();
        let mut addrs = BTreeSet::new();
        for n in &self.nodes {
            let who = format!("node {}", n.id);
            if !ids.insert(n.id) {
                e.push(format!("duplicate node id {}", n.id));
            }
            if !addrs.insert(n.device_address) {
                e.push(format!("{who}: duplicate device_address {:#010x}", n.device_address));
            }
            match (s.path_model, n.distance_m) {
                (PathModel::FreeSpace, None) => e.push(format!("{who}: distance_m is required for free_space")),
                (_, Some(d)) => positive(&mut e, &format!("{who}: distance_m"), d),
                _ => {}
            }
            for (field, value) in [
                ("shared_secret_hex", &n.shared_secret_hex),
                ("network_key_hex", &n.network_key_hex),
                ("application_key_hex", &n.application_key_hex),
            ] {
                if parse_key(value).is_none() {
                    e.push(format!("{who}: {field} must be 32 hex digits"));
                }
            }
            finite_nonneg(&mut e, &format!("{who}: start_offset_s"), n.start_offset_s);
            if let Err(err) = StorageState::new(n.storage.capacitance_f, n.storage.initial_voltage_v) {
                e.push(format!("{who}: {err}"));
            }
            finite_nonneg(&mut e, &format!("{who}: storage.leakage_uw"), n.storage.leakage_uw);
            if let Some(pmu) = &n.pmu {
                if let Err(err) = pmu.validate() {
                    e.push(format!("{who}: pmu {err}"));
                }
            }
            if let Some(c) = &n.cycle {
                if let Err(err) = c.validate() {
                    e.push(format!("{who}: {err}"));
                }
                match (c.offset_of(PhaseName::BackscatterId), c.offset_of(PhaseName::LoRaTx)) {
                    (Some(b), Some(t)) if b < t => {}
                    _ => e.push(format!("{who}: cycle needs a backscatter_id phase before a lora_tx phase")),
                }
            }
            if let Some(r) = &n.reflection_profile {
                if let Err(err) = r.validate() {
                    e.push(format!("{who}: reflection_profile {err}"));
                }
            }
            let profile = n.reflection_profile.clone().unwrap_or_default();
            if s.carrier.carriers().iter().any(|c| !profile.matched_s11_db.contains_freq(*c)) {
                e.push(format!("{who}: reflection_profile does not cover every source carrier"));
            }
            if let Some(c) = &n.efficiency_curve {
                if let Err(err) = c.validate() {
                    e.push(format!("{who}: efficiency_curve {err}"));
                }
            }
            if n.strategy == Strategy::DualKey && m.environment_floor_dbm.is_none() {
                e.push(format!("{who}: dual_key needs a finite monitor.environment_floor_dbm"));
            }
        }

        let g = &self.gateway;
        finite_nonneg(&mut e, "gateway.duplicate_window_s", g.duplicate_window_s);
        positive(&mut e, "gateway.auth_validity_s", g.auth_validity_s);
        positive(&mut e, "gateway.frame_airtime_s", g.frame_airtime_s);
        if g.channels_mhz.is_empty() {
            e.push("gateway.channels_mhz must not be empty".into());
        }
        for c in &g.channels_mhz {
            positive(&mut e, "gateway.channels_mhz entry", *c);
        }

        let mut attacker_ids = BTreeSet::new();
        for a in &self.attackers {
            let who = format!("attacker {}", a.id);
            if !attacker_ids.insert(a.id) {
                e.push(format!("duplicate attacker id {}", a.id));
            }
            if ids.contains(&a.id) {
                e.push(format!("{who}: id collides with a node id"));
            }
            finite_nonneg(&mut e, &format!("{who}: capture_sigma_db"), a.capture_sigma_db);
            for t in &a.trigger_times_s {
                if !(t.is_finite() && *t >= 0.0) {
                    e.push(format!("{who}: trigger time {t} must be finite and >= 0"));
                }
            }
            match a.kind {
                AttackerKind::WaveformReplayer => match a.target_node {
                    None => e.push(format!("{who}: waveform_replayer needs target_node")),
                    Some(t) if !ids.contains(&t) => e.push(format!("{who}: target_node {t} is not a node")),
                    _ => {}
                },
                _ => match a.listen_channel_mhz {
                    None => e.push(format!("{who}: listen_channel_mhz is required")),
                    Some(c) => positive(&mut e, &format!("{who}: listen_channel_mhz"), c),
                },
            }
            if a.kind == AttackerKind::DosFlooder {
                match a.flood_rate_per_s {
                    None => e.push(format!("{who}: dos_flooder needs flood_rate_per_s")),
                    Some(r) => positive(&mut e, &format!("{who}: flood_rate_per_s"), r),
                }
                match a.flood_duration_s {
                    None => e.push(format!("{who}: dos_flooder needs flood_duration_s")),
                    Some(d) => finite_nonneg(&mut e, &format!("{who}: flood_duration_s"), d),
                }
            }
        }
        e
    }
}

/// Names of the scenarios shipped with the crate.
pub const PRESET_NAMES: [&str; 8] = [
    "wired_bench",
    "wireless_single",
    "wireless_two_node",
    "replay_abp_permissive",
    "replay_defeated_pvk",
    "replay_defeated_hopping",
    "dual_key_demo",
    "dos_flood",
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "wired_bench" => include_str!("../../scenarios/wired_bench.json"),
        "wireless_single" => include_str!("../../scenarios/wireless_single.json"),
        "wireless_two_node" => include_str!("../../scenarios/wireless_two_node.json"),
        "replay_abp_permissive" => include_str!("../../scenarios/replay_abp_permissive.json"),
        "replay_defeated_pvk" => include_str!("../../scenarios/replay_defeated_pvk.json"),
        "replay_defeated_hopping" => include_str!("../../scenarios/replay_defeated_hopping.json"),
        "dual_key_demo" => include_str!("../../scenarios/dual_key_demo.json"),
        "dos_flood" => include_str!("../../scenarios/dos_flood.json"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Option<Scenario> {
    preset_source(name).map(|s| Scenario::from_json_str(s).expect("shipped presets are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "schema_version": 1, "name": "t", "duration_s": 10, "seed": 1,
            "source": {"power_dbm": 15, "carrier": {"fixed_mhz": 868.0}, "circulator_isolation_db": 20},
            "nodes": [
              {"id": 1, "device_address": 1, "distance_m": 1.0, "strategy": "pvk",
               "shared_secret_hex": "000102030405060708090a0b0c0d0e0f",
               "network_key_hex": "11111111111111111111111111111111",
               "application_key_hex": "22222222222222222222222222222222"}
            ]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_parses_with_defaults() {
        let s = Scenario::from_json_str(&minimal()).unwrap();
        assert_eq!(s.charge_tick_s, 0.1);
        assert_eq!(s.monitor.environment_floor_dbm, Some(-40.0));
        assert_eq!(s.gateway.channels_mhz, vec![868.1, 868.3, 868.5]);
        assert_eq!(s.nodes[0].storage.capacitance_f, 0.022);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal().replace("\"seed\": 1,", "\"seed\": 1, \"power_dbm\": 3,");
        assert!(matches!(Scenario::from_json_str(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn all_problems_reported() {
        let mut s = Scenario::from_json_str(&minimal()).unwrap();
        s.nodes.push(s.nodes[0].clone());
        s.nodes[1].shared_secret_hex = "abc".into();
        s.duration_s = -1.0;
        let problems = s.problems();
        assert!(problems.iter().any(|p| p.contains("duplicate node id 1")), "{problems:?}");
        assert!(problems.iter().any(|p| p.contains("shared_secret_hex")));
        assert!(problems.iter().any(|p| p.contains("duration_s")));
        assert!(problems.len() >= 4);
    }

    #[test]
    fn round_trip() {
        let s = Scenario::from_json_str(&minimal()).unwrap();
        assert_eq!(Scenario::from_json_str(&s.to_json_pretty()).unwrap(), s);
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn hopping_carriers() {
        let c = CarrierPolicy::Hopping { low_mhz: 863.0, high_mhz: 870.0, grid_khz: 875.0 };
        assert_eq!(c.carriers().len(), 8);
        assert!((c.nominal().unwrap().as_mhz() - 866.5).abs() < 1e-9);
    }
}
