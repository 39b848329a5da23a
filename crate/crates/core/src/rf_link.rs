//! Link-budget arithmetic for the power-wave (P-wave) path between the
//! communicating node and a backscattering sensing node.
//!
//! All quantities are carried in the log domain (dBm, dB, dBi) as `f64`.
//! Linear conversions only happen where powers have to be summed.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("value must be finite, got {0}")]
    NotFinite(f64),
}

/// Absolute power in dBm.
///
/// `-inf` is admitted and stands for zero linear power (for example the
/// return from a perfectly matched load).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerLevel(f64);

impl PowerLevel {
    pub const ZERO_POWER: PowerLevel = PowerLevel(f64::NEG_INFINITY);

    pub fn dbm(value: f64) -> Self {
        PowerLevel(value)
    }

    pub fn from_mw(mw: f64) -> Self {
        PowerLevel(10.0 * mw.log10())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_mw(self) -> f64 {
        dbm_to_mw(self)
    }
}

impl fmt::Display for PowerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.1} dBm", self.0)
    }
}

/// Relative level in dB (losses, isolation, S11) or dBi (antenna gain).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gain(f64);

impl Gain {
    pub fn db(value: f64) -> Self {
        Gain(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Neg for Gain {
    type Output = Gain;
    fn neg(self) -> Gain {
        Gain(-self.0)
    }
}

impl Add<Gain> for PowerLevel {
    type Output = PowerLevel;
    fn add(self, rhs: Gain) -> PowerLevel {
        PowerLevel(self.0 + rhs.0)
    }
}

impl Sub<Gain> for PowerLevel {
    type Output = PowerLevel;
    fn sub(self, rhs: Gain) -> PowerLevel {
        PowerLevel(self.0 - rhs.0)
    }
}

/// Difference of two absolute levels is a relative level.
impl Sub for PowerLevel {
    type Output = Gain;
    fn sub(self, rhs: PowerLevel) -> Gain {
        Gain(self.0 - rhs.0)
    }
}

/// Carrier frequency in Hz; always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Frequency(f64);

impl Frequency {
    pub fn hz(hertz: f64) -> Result<Self, LinkError> {
        if !hertz.is_finite() {
            return Err(LinkError::NotFinite(hertz));
        }
        if hertz <= 0.0 {
            return Err(LinkError::NonPositiveFrequency(hertz));
        }
        Ok(Frequency(hertz))
    }

    pub fn mhz(megahertz: f64) -> Result<Self, LinkError> {
        Self::hz(megahertz * 1e6)
    }

    pub fn as_hz(self) -> f64 {
        self.0
    }

    pub fn as_mhz(self) -> f64 {
        self.0 / 1e6
    }

    pub fn wavelength(self) -> f64 {
        SPEED_OF_LIGHT / self.0
    }
}

impl TryFrom<f64> for Frequency {
    type Error = LinkError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Frequency::hz(value)
    }
}

impl From<Frequency> for f64 {
    fn from(f: Frequency) -> f64 {
        f.0
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} MHz", self.as_mhz())
    }
}

/// Node placement relative to the communicating node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    distance_m: f64,
    pub tx_antenna_gain: Gain,
    pub rx_antenna_gain: Gain,
}

impl ChannelGeometry {
    pub fn new(distance_m: f64, tx_antenna_gain: Gain, rx_antenna_gain: Gain) -> Result<Self, LinkError> {
        if !distance_m.is_finite() {
            return Err(LinkError::NotFinite(distance_m));
        }
        if distance_m <= 0.0 {
            return Err(LinkError::NonPositiveDistance(distance_m));
        }
        Ok(ChannelGeometry {
            distance_m,
            tx_antenna_gain,
            rx_antenna_gain,
        })
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }
}

pub fn dbm_to_mw(p: PowerLevel) -> f64 {
    10f64.powf(p.0 / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> PowerLevel {
    PowerLevel::from_mw(mw)
}

/// Carrier leaking straight from the source port into the monitor port
/// through the circulator.
pub fn leakage_power(p_source: PowerLevel, isolation: Gain) -> PowerLevel {
    p_source - isolation
}

/// Wired return: the carrier crosses the forward path twice and is scaled
/// by the node's reflection coefficient (`s11` <= 0 dB).
pub fn reflected_power_wired(p_source: PowerLevel, forward_loss: Gain, s11: Gain) -> PowerLevel {
    PowerLevel(p_source.0 - 2.0 * forward_loss.0 + s11.0)
}

/// First-order dynamic range estimate, ignoring how the two terms add.
pub fn dynamic_range_simplified(p_refl: PowerLevel, p_leak: PowerLevel) -> Gain {
    p_refl - p_leak
}

/// Free-space path loss `20 log10(4 pi d / lambda)`.
pub fn fspl(freq: Frequency, distance_m: f64) -> Result<Gain, LinkError> {
    if !distance_m.is_finite() {
        return Err(LinkError::NotFinite(distance_m));
    }
    if distance_m <= 0.0 {
        return Err(LinkError::NonPositiveDistance(distance_m));
    }
    Ok(Gain(20.0 * (4.0 * PI * distance_m / freq.wavelength()).log10()))
}

pub fn eirp(p_tx: PowerLevel, antenna_gain: Gain) -> PowerLevel {
    p_tx + antenna_gain
}

/// Power arriving at the node's rectifier port over the air.
pub fn incident_power(
    p_source: PowerLevel,
    forward_loss: Gain,
    geometry: &ChannelGeometry,
    freq: Frequency,
) -> Result<PowerLevel, LinkError> {
    let path = fspl(freq, geometry.distance_m)?;
    Ok(p_source - forward_loss + geometry.tx_antenna_gain - path + geometry.rx_antenna_gain)
}

/// Monostatic round trip: source -> CN antenna -> free space -> node
/// antenna -> reflection -> node antenna -> free space -> CN antenna ->
/// monitor. `geometry.tx_antenna_gain` is the CN antenna (used on both
/// legs), `geometry.rx_antenna_gain` the node antenna.
pub fn backscatter_return_power(
    p_source: PowerLevel,
    forward_loss: Gain,
    geometry: &ChannelGeometry,
    freq: Frequency,
    node_s11: Gain,
) -> Result<PowerLevel, LinkError> {
    let path = fspl(freq, geometry.distance_m)?;
    let cn = geometry.tx_antenna_gain;
    let node = geometry.rx_antenna_gain;
    Ok(p_source - forward_loss + cn - path + node + node_s11 + node - path + cn - forward_loss)
}

/// Level seen at the monitor when leakage and the backscatter return add
/// incoherently.
pub fn monitor_observed_level(p_leak: PowerLevel, p_return: PowerLevel) -> PowerLevel {
    power_sum(&[p_leak, p_return])
}

/// Incoherent sum of any number of levels.
pub fn power_sum(levels: &[PowerLevel]) -> PowerLevel {
    PowerLevel::from_mw(levels.iter().map(|p| p.to_mw()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f868() -> Frequency {
        Frequency::mhz(868.0).unwrap()
    }

    #[test]
    fn dbm_conversions() {
        assert_eq!(dbm_to_mw(PowerLevel::dbm(0.0)), 1.0);
        assert!((dbm_to_mw(PowerLevel::dbm(-30.0)) - 0.001).abs() < 1e-15);
        assert!((dbm_to_mw(PowerLevel::dbm(-12.2)) - 0.060256).abs() < 1e-6);
        assert_eq!(dbm_to_mw(PowerLevel::ZERO_POWER), 0.0);
    }

    #[test]
    fn leakage_examples() {
        assert_eq!(leakage_power(PowerLevel::dbm(-10.0), Gain::db(20.0)).value(), -30.0);
        assert_eq!(leakage_power(PowerLevel::dbm(15.0), Gain::db(20.0)).value(), -5.0);
        assert_eq!(leakage_power(PowerLevel::dbm(0.0), Gain::db(0.0)).value(), 0.0);
    }

    #[test]
    fn reflected_wired_examples() {
        let r = reflected_power_wired(PowerLevel::dbm(-10.0), Gain::db(0.8), Gain::db(-0.6));
        assert!((r.value() + 12.2).abs() < 1e-9);
        let r = reflected_power_wired(PowerLevel::dbm(0.0), Gain::db(0.0), Gain::db(0.0));
        assert_eq!(r.value(), 0.0);
        let r = reflected_power_wired(PowerLevel::dbm(15.0), Gain::db(0.8), Gain::db(-0.6));
        assert!((r.value() - 12.8).abs() < 1e-9);
    }

    #[test]
    fn dynamic_range_examples() {
        let d = dynamic_range_simplified(PowerLevel::dbm(-12.2), PowerLevel::dbm(-30.0));
        assert!((d.value() - 17.8).abs() < 1e-9);
        let d = dynamic_range_simplified(PowerLevel::dbm(-7.0), PowerLevel::dbm(-7.0));
        assert_eq!(d.value(), 0.0);
        let d = dynamic_range_simplified(PowerLevel::dbm(-19.6), PowerLevel::dbm(-5.0));
        assert!((d.value() + 14.6).abs() < 1e-9);
    }

    #[test]
    fn fspl_examples() {
        assert!((fspl(f868(), 1.61).unwrap().value() - 35.4).abs() < 0.05);
        assert!((fspl(f868(), 1.3).unwrap().value() - 33.50).abs() < 0.05);
        let unit = f868().wavelength() / (4.0 * PI);
        assert!(fspl(f868(), unit).unwrap().value().abs() < 1e-9);
        assert_eq!(fspl(f868(), 0.0), Err(LinkError::NonPositiveDistance(0.0)));
        assert!(fspl(f868(), -1.0).is_err());
    }

    #[test]
    fn eirp_examples() {
        assert!((eirp(PowerLevel::dbm(15.0), Gain::db(9.2)).value() - 24.2).abs() < 1e-12);
        assert_eq!(eirp(PowerLevel::dbm(20.0), Gain::db(0.0)).value(), 20.0);
        assert_eq!(eirp(PowerLevel::dbm(20.0), Gain::db(2.0)).value(), 22.0);
    }

    #[test]
    fn backscatter_return_examples() {
        let g = ChannelGeometry::new(1.61, Gain::db(9.2), Gain::db(9.2)).unwrap();
        let p = backscatter_return_power(PowerLevel::dbm(15.0), Gain::db(0.0), &g, f868(), Gain::db(-0.6)).unwrap();
        assert!((p.value() + 19.6).abs() < 0.1, "{p}");

        let p = backscatter_return_power(
            PowerLevel::dbm(15.0),
            Gain::db(0.0),
            &g,
            f868(),
            Gain::db(f64::NEG_INFINITY),
        )
        .unwrap();
        assert_eq!(p.value(), f64::NEG_INFINITY);

        let unit = f868().wavelength() / (4.0 * PI);
        let g0 = ChannelGeometry::new(unit, Gain::db(0.0), Gain::db(0.0)).unwrap();
        let p = backscatter_return_power(PowerLevel::dbm(-3.0), Gain::db(0.0), &g0, f868(), Gain::db(0.0)).unwrap();
        assert!((p.value() + 3.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(ChannelGeometry::new(0.0, Gain::db(0.0), Gain::db(0.0)).is_err());
        assert!(ChannelGeometry::new(f64::NAN, Gain::db(0.0), Gain::db(0.0)).is_err());
        assert!(Frequency::hz(0.0).is_err());
    }

    #[test]
    fn monitor_sum_examples() {
        let p = monitor_observed_level(PowerLevel::dbm(-30.0), PowerLevel::dbm(-12.2));
        assert!((p.value() + 12.13).abs() < 0.01, "{p}");
        let p = monitor_observed_level(PowerLevel::dbm(-5.0), PowerLevel::ZERO_POWER);
        assert!((p.value() + 5.0).abs() < 1e-12);
        let p = monitor_observed_level(PowerLevel::dbm(-20.0), PowerLevel::dbm(-20.0));
        assert!((p.value() + 20.0 - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn wired_reproduction_chain() {
        let refl = reflected_power_wired(PowerLevel::dbm(-10.0), Gain::db(0.8), Gain::db(-0.6));
        let leak = leakage_power(PowerLevel::dbm(-10.0), Gain::db(20.0));
        assert!((dynamic_range_simplified(refl, leak).value() - 17.8).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_in_source(p in -60.0f64..30.0, k in -20.0f64..20.0, iso in 0.0f64..40.0,
                                lf in 0.0f64..3.0, s11 in -30.0f64..0.0, g in -5.0f64..15.0) {
                let a = PowerLevel::dbm(p);
                let b = PowerLevel::dbm(p + k);
                let shift = |x: PowerLevel, y: PowerLevel| y.value() - x.value();
                prop_assert!((shift(leakage_power(a, Gain::db(iso)), leakage_power(b, Gain::db(iso))) - k).abs() < 1e-9);
                prop_assert!((shift(reflected_power_wired(a, Gain::db(lf), Gain::db(s11)),
                                    reflected_power_wired(b, Gain::db(lf), Gain::db(s11))) - k).abs() < 1e-9);
                prop_assert!((shift(eirp(a, Gain::db(g)), eirp(b, Gain::db(g))) - k).abs() < 1e-9);
                let d1 = dynamic_range_simplified(a, PowerLevel::dbm(-30.0)).value();
                let d2 = dynamic_range_simplified(b, PowerLevel::dbm(-30.0)).value();
                prop_assert!((d2 - d1 - k).abs() < 1e-9);
            }

            #[test]
            fn dbm_mw_round_trip(p in -150.0f64..60.0) {
                let back = PowerLevel::from_mw(dbm_to_mw(PowerLevel::dbm(p)));
                prop_assert!((back.value() - p).abs() < 1e-9);
            }

            #[test]
            fn fspl_doubling(f in 100.0f64..6000.0, d in 0.01f64..1000.0) {
                let f = Frequency::mhz(f).unwrap();
                let a = fspl(f, d).unwrap().value();
                let b = fspl(f, 2.0 * d).unwrap().value();
                prop_assert!((b - a - 6.0206).abs() < 1e-4);
                prop_assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-6);
            }

            #[test]
            fn fspl_monotone(f in 100.0f64..6000.0, d in 0.01f64..1000.0, df in 0.001f64..10.0, dd in 0.001f64..10.0) {
                let base = fspl(Frequency::mhz(f).unwrap(), d).unwrap().value();
                prop_assert!(fspl(Frequency::mhz(f).unwrap(), d + dd).unwrap().value() > base);
                prop_assert!(fspl(Frequency::mhz(f + df).unwrap(), d).unwrap().value() > base);
            }

            #[test]
            fn monitor_sum_bounds(a in -80.0f64..20.0, b in -80.0f64..20.0) {
                let s = monitor_observed_level(PowerLevel::dbm(a), PowerLevel::dbm(b)).value();
                let m = a.max(b);
                prop_assert!(s >= m - 1e-12);
                prop_assert!(s <= m + 3.0103 + 1e-9);
            }
        }
    }
}
