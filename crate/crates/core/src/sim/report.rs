use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::auth::{AuthVerdict, Strategy};
use crate::energy::PhaseName;

/// Who put a signal on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Node(u32),
    Attacker(u32),
}

impl Origin {
    pub fn is_adversarial(self) -> bool {
        matches!(self, Origin::Attacker(_))
    }

    pub fn label(self) -> String {
        match self {
            Origin::Node(id) => format!("node:{id}"),
            Origin::Attacker(id) => format!("attacker:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub harvested_j: f64,
    /// Harvest forgone while the gate toggled during identification.
    pub backscatter_loss_j: f64,
    pub consumed_j: BTreeMap<PhaseName, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub id: u32,
    pub device_address: u32,
    pub strategy: Strategy,
    pub incident_power_dbm: f64,
    pub dc_power_uw: f64,
    pub cold_start_ok: bool,
    /// Seconds from placement to the first ready voltage.
    pub time_to_ready_s: Option<f64>,
    pub ready_at_s: Option<f64>,
    pub first_backscatter_s: Option<f64>,
    pub first_frame_s: Option<f64>,
    /// Analytic high/low separation at the nominal carrier.
    pub nominal_dynamic_range_db: f64,
    pub cycles: u64,
    pub brownouts: u64,
    pub auth_attempts: u64,
    pub auth_verdicts: BTreeMap<AuthVerdict, u64>,
    pub frames_sent: u64,
    pub frames_accepted: u64,
    pub final_voltage_v: f64,
    pub energy: EnergyLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuthRow {
    pub start_s: f64,
    pub end_s: f64,
    /// Node the identification claims to come from.
    pub node_id: u32,
    pub source: String,
    pub strategy: Strategy,
    pub carrier_mhz: f64,
    pub expected_carrier_mhz: f64,
    pub verdict: AuthVerdict,
    pub score: f64,
    pub collided: bool,
    /// Observed mean high minus mean low, legitimate windows only.
    pub dynamic_range_db: Option<f64>,
    pub bit_errors: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UplinkRow {
    pub tx_s: f64,
    pub rx_s: f64,
    pub device_address: u32,
    pub frame_counter: u16,
    pub channel_mhz: f64,
    pub source: String,
    /// `channel_not_allowed`, a gate rejection, or the gateway verdict.
    pub outcome: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionRow {
    pub at_s: f64,
    pub attacker_id: u32,
    pub kind: String,
    pub target: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GatewayReport {
    pub frames_received: u64,
    pub channel_rejected: u64,
    pub gate_rejected: u64,
    pub verdicts: BTreeMap<String, u64>,
    pub duplicates: u64,
    /// Time with at least one frame on air.
    pub airtime_busy_s: f64,
    pub occupancy: f64,
    pub adversarial_accepted: u64,
    pub legitimate_accepted: u64,
    pub legitimate_sent: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BerReport {
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineRow {
    pub time_s: f64,
    pub voltage_v: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    /// True when any node runs on the built-in placeholder rectifier tables.
    pub synthetic_defaults: bool,
    pub event_counts: BTreeMap<String, u64>,
    pub nodes: Vec<NodeReport>,
    pub auth: Vec<AuthRow>,
    pub uplinks: Vec<UplinkRow>,
    pub injections: Vec<InjectionRow>,
    pub gateway: GatewayReport,
    pub ber: BerReport,
    pub collisions: u64,
    pub timeline: Vec<TimelineRow>,
}

#[derive(Serialize)]
struct NodeCsvRow {
    id: u32,
    device_address: u32,
    strategy: Strategy,
    dc_power_uw: f64,
    time_to_ready_s: Option<f64>,
    cycles: u64,
    brownouts: u64,
    auth_attempts: u64,
    accepted: u64,
    frames_sent: u64,
    frames_accepted: u64,
    final_voltage_v: f64,
    harvested_j: f64,
    consumed_j: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn total_events(&self) -> u64 {
        self.event_counts.values().sum()
    }

    pub fn node(&self, id: u32) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Auth rows produced by a node's own identifications.
    pub fn legitimate_auth(&self) -> impl Iterator<Item = &AuthRow> {
        self.auth.iter().filter(|a| a.source.starts_with("node:"))
    }

    /// Writes `nodes.csv`, `auth.csv`, `uplinks.csv`, `injections.csv` and
    /// `events.csv` into `dir`.
    pub fn write_csv_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let nodes = self.nodes.iter().map(|n| NodeCsvRow {
            id: n.id,
            device_address: n.device_address,
            strategy: n.strategy,
            dc_power_uw: n.dc_power_uw,
            time_to_ready_s: n.time_to_ready_s,
            cycles: n.cycles,
            brownouts: n.brownouts,
            auth_attempts: n.auth_attempts,
            accepted: n.auth_verdicts.get(&AuthVerdict::Accepted).copied().unwrap_or(0),
            frames_sent: n.frames_sent,
            frames_accepted: n.frames_accepted,
            final_voltage_v: n.final_voltage_v,
            harvested_j: n.energy.harvested_j,
            consumed_j: n.energy.consumed_j.values().sum(),
        });
        write_table(&dir.join("nodes.csv"), nodes)?;
        write_table(&dir.join("auth.csv"), self.auth.iter())?;
        write_table(&dir.join("uplinks.csv"), self.uplinks.iter())?;
        write_table(&dir.join("injections.csv"), self.injections.iter())?;
        #[derive(Serialize)]
        struct Count<'a> {
            kind: &'a str,
            count: u64,
        }
        write_table(
            &dir.join("events.csv"),
            self.event_counts.iter().map(|(k, v)| Count { kind: k, count: *v }),
        )
    }
}

fn write_table<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}
