//! Super-capacitor storage, PMU cold start and the node's operation-cycle
//! energy ledger.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("target {target_v} V unreachable: net charging power {net_uw} uW is not positive")]
    Unreachable { target_v: f64, net_uw: f64 },
    #[error("storage holds {available_j} J, {requested_j} J requested")]
    Depleted { available_j: f64, requested_j: f64 },
    #[error("invalid storage: {0}")]
    InvalidStorage(String),
    #[error("invalid cycle profile: {0}")]
    InvalidProfile(String),
}

/// Capacitor state. Energy is always derived as `C V^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageState {
    pub capacitance_f: f64,
    pub voltage_v: f64,
}

impl StorageState {
    pub fn new(capacitance_f: f64, voltage_v: f64) -> Result<Self, EnergyError> {
        let s = StorageState { capacitance_f, voltage_v };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.capacitance_f.is_finite() && self.capacitance_f > 0.0) {
            return Err(EnergyError::InvalidStorage(format!(
                "capacitance must be > 0 F, got {}",
                self.capacitance_f
            )));
        }
        if !(self.voltage_v.is_finite() && self.voltage_v >= 0.0) {
            return Err(EnergyError::InvalidStorage(format!(
                "voltage must be >= 0 V, got {}",
                self.voltage_v
            )));
        }
        Ok(())
    }

    pub fn energy_j(&self) -> f64 {
        0.5 * self.capacitance_f * self.voltage_v * self.voltage_v
    }

    pub fn with_energy(&self, energy_j: f64) -> StorageState {
        StorageState {
            capacitance_f: self.capacitance_f,
            voltage_v: (2.0 * energy_j.max(0.0) / self.capacitance_f).sqrt(),
        }
    }

    pub fn energy_at(&self, voltage_v: f64) -> f64 {
        0.5 * self.capacitance_f * voltage_v * voltage_v
    }

    /// Removes `energy_j` from the capacitor.
    pub fn discharge(&self, energy_j: f64) -> Result<StorageState, EnergyError> {
        let available_j = self.energy_j();
        if energy_j > available_j {
            return Err(EnergyError::Depleted {
                available_j,
                requested_j: energy_j,
            });
        }
        Ok(self.with_energy(available_j - energy_j))
    }
}

/// Integrates `dc_power_uw - leakage_uw` over `dt_s`. Stored energy never
/// drops below zero.
pub fn charge(storage: StorageState, dc_power_uw: f64, dt_s: f64, leakage_uw: f64) -> StorageState {
    if dt_s <= 0.0 {
        return storage;
    }
    let delta = (dc_power_uw - leakage_uw) * dt_s * 1e-6;
    if delta == 0.0 {
        return storage;
    }
    storage.with_energy(storage.energy_j() + delta)
}

/// Power management unit thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmuSpec {
    /// Minimum rectifier output that lets the PMU bootstrap itself.
    pub cold_start_power_uw: f64,
    /// Storage voltage below which the node browns out.
    pub operating_voltage_v: f64,
    /// Storage voltage at which the node starts an operation cycle.
    pub ready_voltage_v: f64,
    /// Highest voltage the storage element is rated for.
    pub rated_voltage_v: f64,
}

impl Default for PmuSpec {
    fn default() -> Self {
        PmuSpec {
            cold_start_power_uw: 15.0,
            operating_voltage_v: 1.8,
            ready_voltage_v: 3.3,
            rated_voltage_v: 5.25,
        }
    }
}

impl PmuSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cold_start_power_uw > 0.0) {
            return Err(format!("cold_start_power_uw must be > 0, got {}", self.cold_start_power_uw));
        }
        if !(self.ready_voltage_v > 0.0 && self.ready_voltage_v <= self.rated_voltage_v) {
            return Err(format!(
                "ready_voltage_v {} must be in (0, rated_voltage_v = {}]",
                self.ready_voltage_v, self.rated_voltage_v
            ));
        }
        if !(self.operating_voltage_v >= 0.0 && self.operating_voltage_v < self.ready_voltage_v) {
            return Err(format!(
                "operating_voltage_v {} must be in [0, ready_voltage_v)",
                self.operating_voltage_v
            ));
        }
        Ok(())
    }
}

pub fn cold_start_ready(dc_power_uw: f64, pmu: &PmuSpec) -> bool {
    dc_power_uw >= pmu.cold_start_power_uw
}

/// Seconds until the storage reaches `target_voltage_v`.
pub fn time_to_ready(
    storage: StorageState,
    dc_power_uw: f64,
    target_voltage_v: f64,
    leakage_uw: f64,
) -> Result<f64, EnergyError> {
    let missing = storage.energy_at(target_voltage_v) - storage.energy_j();
    if missing <= 0.0 {
        return Ok(0.0);
    }
    let net_uw = dc_power_uw - leakage_uw;
    if net_uw <= 0.0 {
        return Err(EnergyError::Unreachable {
            target_v: target_voltage_v,
            net_uw,
        });
    }
    Ok(missing / (net_uw * 1e-6))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseName {
    Init,
    Sense,
    BackscatterId,
    LoRaTx,
    Sleep,
}

impl fmt::Display for PhaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PhaseName::Init => "init",
            PhaseName::Sense => "sense",
            PhaseName::BackscatterId => "backscatter_id",
            PhaseName::LoRaTx => "lora_tx",
            PhaseName::Sleep => "sleep",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub name: PhaseName,
    pub duration_s: f64,
    pub power_mw: f64,
}

impl Phase {
    pub fn energy_j(&self) -> f64 {
        self.duration_s * self.power_mw * 1e-3
    }
}

/// Ordered phases of one node operation cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleProfile {
    pub phases: Vec<Phase>,
}

impl Default for CycleProfile {
    /// Placeholder class values (not measured): MCU-only backscatter, radio
    /// dominated transmission, 60 s cycle.
    fn default() -> Self {
        let active = 0.5 + 0.1 + 0.002 + 0.2;
        CycleProfile {
            phases: vec![
                Phase { name: PhaseName::Init, duration_s: 0.5, power_mw: 16.5 },
                Phase { name: PhaseName::Sense, duration_s: 0.1, power_mw: 6.6 },
                Phase { name: PhaseName::BackscatterId, duration_s: 0.002, power_mw: 33.0 },
                Phase { name: PhaseName::LoRaTx, duration_s: 0.2, power_mw: 132.0 },
                Phase { name: PhaseName::Sleep, duration_s: 60.0 - active, power_mw: 0.01 },
            ],
        }
    }
}

impl CycleProfile {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.phases.is_empty() {
            return Err(EnergyError::InvalidProfile("no phases".into()));
        }
        for p in &self.phases {
            let ok = match p.name {
                PhaseName::Sleep => p.duration_s >= 0.0,
                _ => p.duration_s > 0.0,
            };
            if !ok || !p.duration_s.is_finite() {
                return Err(EnergyError::InvalidProfile(format!(
                    "phase {} has invalid duration {}",
                    p.name, p.duration_s
                )));
            }
            if !(p.power_mw >= 0.0 && p.power_mw.is_finite()) {
                return Err(EnergyError::InvalidProfile(format!(
                    "phase {} has invalid power {}",
                    p.name, p.power_mw
                )));
            }
        }
        Ok(())
    }

    pub fn total_duration_s(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_s).sum()
    }

    pub fn phase(&self, name: PhaseName) -> Option<&Phase> {
        self.phases.iter().find(|p| p.name == name)
    }

    /// Start offset of the first phase called `name`, relative to cycle start.
    pub fn offset_of(&self, name: PhaseName) -> Option<f64> {
        let mut t = 0.0;
        for p in &self.phases {
            if p.name == name {
                return Some(t);
            }
            t += p.duration_s;
        }
        None
    }
}

/// Per-phase and total energy of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEnergy {
    pub per_phase_j: BTreeMap<PhaseName, f64>,
    pub total_j: f64,
}

impl CycleEnergy {
    pub fn share(&self, name: PhaseName) -> f64 {
        if self.total_j == 0.0 {
            return 0.0;
        }
        self.per_phase_j.get(&name).copied().unwrap_or(0.0) / self.total_j
    }
}

pub fn cycle_energy(profile: &CycleProfile) -> CycleEnergy {
    let mut per_phase_j = BTreeMap::new();
    for p in &profile.phases {
        *per_phase_j.entry(p.name).or_insert(0.0) += p.energy_j();
    }
    let total_j = per_phase_j.values().sum();
    CycleEnergy { per_phase_j, total_j }
}
