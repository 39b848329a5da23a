//! Behavioral model of the backscattering rectifier.
//!
//! The rectifier has two gate states. With the gate low it is matched to
//! the antenna and converts incident RF into DC; with the gate high it is
//! deliberately mismatched and reflects the carrier. Both the reflection
//! coefficient and the conversion efficiency are table driven on a
//! (frequency, input power) grid with bilinear interpolation and clamping
//! at the table edges, so measured curves can be dropped in as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rf_link::{Frequency, Gain, PowerLevel};

#[derive(Debug, Error)]
pub enum RectifierError {
    #[error("{freq_mhz} MHz is outside the tabulated band [{low_mhz}, {high_mhz}] MHz")]
    OutOfBand { freq_mhz: f64, low_mhz: f64, high_mhz: f64 },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("cannot read profile file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse profile file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Gate drive of the rectifier's switching transistor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateState {
    /// Gate at 0 V: matched, energy flows to the PMU.
    Harvest,
    /// Gate at 3.3 V: mismatched, the carrier is reflected.
    Backscatter,
}

/// A value tabulated on a rectangular (frequency, input power) grid.
///
/// `values[i][j]` belongs to `freqs_mhz[i]` and `powers_dbm[j]`. Both axes
/// must be strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2d {
    pub freqs_mhz: Vec<f64>,
    pub powers_dbm: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Table2d {
    pub fn validate(&self) -> Result<(), RectifierError> {
        let bad = |m: &str| Err(RectifierError::InvalidTable(m.to_string()));
        if self.freqs_mhz.is_empty() || self.powers_dbm.is_empty() {
            return bad("empty axis");
        }
        if !strictly_increasing(&self.freqs_mhz) || !strictly_increasing(&self.powers_dbm) {
            return bad("axes must be strictly increasing");
        }
        if self.values.len() != self.freqs_mhz.len()
            || self.values.iter().any(|row| row.len() != self.powers_dbm.len())
        {
            return bad("values shape does not match axes");
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite entry");
        }
        Ok(())
    }

    pub fn band_mhz(&self) -> (f64, f64) {
        (self.freqs_mhz[0], *self.freqs_mhz.last().unwrap())
    }

    pub fn contains_freq(&self, freq: Frequency) -> bool {
        let (lo, hi) = self.band_mhz();
        let f = freq.as_mhz();
        f >= lo - 1e-9 && f <= hi + 1e-9
    }

    /// Bilinear interpolation, clamped to the table edges on both axes.
    pub fn interpolate(&self, freq_mhz: f64, power_dbm: f64) -> f64 {
        let (i0, i1, tf) = bracket(&self.freqs_mhz, freq_mhz);
        let (j0, j1, tp) = bracket(&self.powers_dbm, power_dbm);
        let row = |i: usize| {
            let a = self.values[i][j0];
            let b = self.values[i][j1];
            a + (b - a) * tp
        };
        let lo = row(i0);
        let hi = row(i1);
        lo + (hi - lo) * tf
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1]) && xs.iter().all(|x| x.is_finite())
}

/// Returns the two bracketing indices and the fractional position.
fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
    let n = axis.len();
    if n == 1 || x <= axis[0] {
        return (0, 0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let hi = axis.partition_point(|&a| a <= x);
    let lo = hi - 1;
    (lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo]))
}

/// S11 in both gate states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionProfile {
    pub matched_s11_db: Table2d,
    pub mismatched_s11_db: Table2d,
}

impl Default for ReflectionProfile {
    fn default() -> Self {
        let freqs_mhz = vec![863.0, 865.0, 868.0, 870.0];
        let powers_dbm = vec![-20.0, -10.0, 0.0];
        ReflectionProfile {
            matched_s11_db: Table2d {
                freqs_mhz: freqs_mhz.clone(),
                powers_dbm: powers_dbm.clone(),
                values: vec![
                    vec![-12.0, -13.0, -11.5],
                    vec![-16.0, -18.0, -15.0],
                    vec![-21.0, -25.0, -19.0],
                    vec![-14.0, -16.0, -13.0],
                ],
            },
            // Only the -10 dBm curve of the reflective state is known; it is
            // held flat over input power.
            mismatched_s11_db: Table2d {
                freqs_mhz,
                powers_dbm,
                values: vec![vec![-0.6; 3]; 4],
            },
        }
    }
}

impl ReflectionProfile {
    pub fn validate(&self) -> Result<(), RectifierError> {
        self.matched_s11_db.validate()?;
        self.mismatched_s11_db.validate()?;
        for t in [&self.matched_s11_db, &self.mismatched_s11_db] {
            if t.values.iter().flatten().any(|&v| v > 0.0) {
                return Err(RectifierError::InvalidTable("S11 entries must be <= 0 dB".into()));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, RectifierError> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RectifierError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn table(&self, gate: GateState) -> &Table2d {
        match gate {
            GateState::Harvest => &self.matched_s11_db,
            GateState::Backscatter => &self.mismatched_s11_db,
        }
    }
}

/// Interpolated S11 of the rectifier in the requested gate state.
pub fn reflection_coefficient(
    profile: &ReflectionProfile,
    gate: GateState,
    freq: Frequency,
    p_in: PowerLevel,
) -> Result<Gain, RectifierError> {
    let table = profile.table(gate);
    if !table.contains_freq(freq) {
        let (low_mhz, high_mhz) = table.band_mhz();
        return Err(RectifierError::OutOfBand {
            freq_mhz: freq.as_mhz(),
            low_mhz,
            high_mhz,
        });
    }
    Ok(Gain::db(table.interpolate(freq.as_mhz(), p_in.value())))
}

/// RF-to-DC conversion efficiency in harvesting mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyCurve {
    pub efficiency: Table2d,
    /// Below this input the rectifier produces nothing.
    pub sensitivity_floor_dbm: f64,
}

impl Default for EfficiencyCurve {
    fn default() -> Self {
        let anchors = [0.10, 0.30, 0.32, 0.35];
        let scale = [0.93, 0.97, 1.0, 0.95];
        EfficiencyCurve {
            efficiency: Table2d {
                freqs_mhz: vec![863.0, 865.0, 868.0, 870.0],
                powers_dbm: vec![-20.0, -13.0, -10.0, 0.0],
                values: scale
                    .iter()
                    .map(|s| anchors.iter().map(|a| a * s).collect())
                    .collect(),
            },
            sensitivity_floor_dbm: -25.0,
        }
    }
}

impl EfficiencyCurve {
    pub fn validate(&self) -> Result<(), RectifierError> {
        self.efficiency.validate()?;
        if self.efficiency.values.iter().flatten().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(RectifierError::InvalidTable("efficiency must lie in [0, 1]".into()));
        }
        if !self.sensitivity_floor_dbm.is_finite() {
            return Err(RectifierError::InvalidTable("sensitivity floor must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, RectifierError> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RectifierError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn efficiency_at(&self, freq: Frequency, p_in: PowerLevel) -> f64 {
        if p_in.value() < self.sensitivity_floor_dbm {
            return 0.0;
        }
        self.efficiency.interpolate(freq.as_mhz(), p_in.value())
    }
}

/// DC output in microwatts for a given RF input.
pub fn harvested_dc_power(curve: &EfficiencyCurve, freq: Frequency, p_in: PowerLevel) -> f64 {
    p_in.to_mw() * curve.efficiency_at(freq, p_in) * 1000.0
}

/// Share of incident energy still harvested while the gate toggles with
/// the given high-duty fraction.
pub fn harvest_interruption_factor(chip_trace_duty: f64) -> f64 {
    1.0 - chip_trace_duty.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mhz(f: f64) -> Frequency {
        Frequency::mhz(f).unwrap()
    }

    #[test]
    fn default_reflection_anchors() {
        let p = ReflectionProfile::default();
        p.validate().unwrap();
        let bs = reflection_coefficient(&p, GateState::Backscatter, mhz(868.0), PowerLevel::dbm(-10.0)).unwrap();
        assert!((bs.value() + 0.6).abs() < 1e-12);
        let h = reflection_coefficient(&p, GateState::Harvest, mhz(868.0), PowerLevel::dbm(-10.0)).unwrap();
        assert!(h.value() <= -10.0);
    }

    #[test]
    fn anchor_identity() {
        let p = ReflectionProfile::default();
        for (i, f) in p.matched_s11_db.freqs_mhz.iter().enumerate() {
            for (j, pw) in p.matched_s11_db.powers_dbm.iter().enumerate() {
                let v = reflection_coefficient(&p, GateState::Harvest, mhz(*f), PowerLevel::dbm(*pw)).unwrap();
                assert_eq!(v.value(), p.matched_s11_db.values[i][j]);
            }
        }
    }

    #[test]
    fn out_of_band_rejected() {
        let p = ReflectionProfile::default();
        let e = reflection_coefficient(&p, GateState::Harvest, mhz(915.0), PowerLevel::dbm(-10.0));
        assert!(matches!(e, Err(RectifierError::OutOfBand { .. })));
    }

    #[test]
    fn matched_below_minus_ten_across_band() {
        let p = ReflectionProfile::default();
        let mut f = 863.0;
        while f <= 870.0 {
            for pw in [-20.0, -15.0, -10.0, -5.0, 0.0] {
                let m = reflection_coefficient(&p, GateState::Harvest, mhz(f), PowerLevel::dbm(pw)).unwrap();
                let b = reflection_coefficient(&p, GateState::Backscatter, mhz(f), PowerLevel::dbm(pw)).unwrap();
                assert!(m.value() <= -10.0, "{f} {pw} {m:?}");
                assert!(b.value() > m.value());
                assert!(b.value() <= 0.0);
            }
            f += 0.25;
        }
    }

    #[test]
    fn harvest_at_minus_13() {
        let c = EfficiencyCurve::default();
        let uw = harvested_dc_power(&c, mhz(868.0), PowerLevel::dbm(-13.0));
        assert!((uw - 15.0).abs() <= 1.5, "{uw}");
    }

    #[test]
    fn harvest_floor_and_zero_dbm() {
        let c = EfficiencyCurve::default();
        assert_eq!(harvested_dc_power(&c, mhz(868.0), PowerLevel::dbm(-30.0)), 0.0);
        // 1 mW * 0.35 = 350 uW straight off the 0 dBm anchor.
        let uw = harvested_dc_power(&c, mhz(868.0), PowerLevel::dbm(0.0));
        assert!((uw - 350.0).abs() < 1e-9);
    }

    #[test]
    fn interruption_factor() {
        assert_eq!(harvest_interruption_factor(0.5), 0.5);
        assert_eq!(harvest_interruption_factor(0.0), 1.0);
        assert_eq!(harvest_interruption_factor(1.0), 0.0);
    }

    #[test]
    fn json_round_trip_and_rejects_positive_s11() {
        let p = ReflectionProfile::default();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(ReflectionProfile::from_json_str(&s).unwrap(), p);
        let mut bad = p.clone();
        bad.matched_s11_db.values[0][0] = 1.0;
        assert!(ReflectionProfile::from_json_str(&serde_json::to_string(&bad).unwrap()).is_err());
        let c = EfficiencyCurve::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(EfficiencyCurve::from_json_str(&s).unwrap(), c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn harvest_monotone_and_bounded(f in 863.0f64..870.0, a in -40.0f64..10.0, b in -40.0f64..10.0) {
                let c = EfficiencyCurve::default();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let plo = harvested_dc_power(&c, mhz(f), PowerLevel::dbm(lo));
                let phi = harvested_dc_power(&c, mhz(f), PowerLevel::dbm(hi));
                prop_assert!(phi >= plo);
                prop_assert!(phi <= PowerLevel::dbm(hi).to_mw() * 1000.0);
                let eff = c.efficiency_at(mhz(f), PowerLevel::dbm(hi));
                prop_assert!((0.0..=1.0).contains(&eff));
            }
        }
    }
}
