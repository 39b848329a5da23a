//! Manchester coding of the private key onto the rectifier gate, OOK in
//! the power domain and chip-synchronous threshold decoding at the monitor.
//!
//! Convention: bits are sent MSB first; a `1` is `Backscatter, Harvest`
//! (high then low) and a `0` is `Harvest, Backscatter`.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rectifier::GateState;
use crate::rf_link::PowerLevel;
use crate::seeded_rng;

pub const KEY_LEN: usize = 16;
pub const DEFAULT_GUARD_MARGIN_DB: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("ambiguous Manchester pair at index {pair_index}")]
    Ambiguous { pair_index: usize },
    #[error("odd chip count {0}")]
    OddChipCount(usize),
    #[error("expected {expected} bits, decoded {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("high level {high} dBm must exceed low level {low} dBm")]
    InvalidLevels { high: f64, low: f64 },
    #[error("window must be positive, got {0} s")]
    InvalidWindow(f64),
}

/// 128-bit private key carried by the backscatter identification.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrivateKey(pub [u8; KEY_LEN]);

impl PrivateKey {
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.0
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, CodecError> {
        if bits.len() != KEY_LEN * 8 {
            return Err(CodecError::WrongLength {
                expected: KEY_LEN * 8,
                got: bits.len(),
            });
        }
        let mut out = [0u8; KEY_LEN];
        for (i, chunk) in bits.chunks(8).enumerate() {
            out[i] = chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
        }
        Ok(PrivateKey(out))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill(&mut k);
        PrivateKey(k)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey({})", self.to_hex())
    }
}

/// Gate states over time, one entry per chip.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipTrace {
    pub start_time_s: f64,
    pub chip_duration_s: f64,
    pub chips: Vec<GateState>,
}

impl ChipTrace {
    pub fn duration_s(&self) -> f64 {
        self.chip_duration_s * self.chips.len() as f64
    }

    pub fn starting_at(mut self, start_time_s: f64) -> Self {
        self.start_time_s = start_time_s;
        self
    }

    /// Fraction of chips with the gate high.
    pub fn duty(&self) -> f64 {
        if self.chips.is_empty() {
            return 0.0;
        }
        let high = self.chips.iter().filter(|c| **c == GateState::Backscatter).count();
        high as f64 / self.chips.len() as f64
    }

    /// Toggle rate of the gate line for a strictly alternating pattern.
    pub fn toggle_frequency_hz(&self) -> f64 {
        1.0 / (2.0 * self.chip_duration_s)
    }

    /// Chip index covering absolute time `t`, if inside the trace.
    pub fn chip_at(&self, t: f64) -> Option<usize> {
        if t < self.start_time_s {
            return None;
        }
        let idx = ((t - self.start_time_s) / self.chip_duration_s + 1e-9).floor() as usize;
        (idx < self.chips.len()).then_some(idx)
    }
}

/// Observed per-chip power at the monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub start_time_s: f64,
    pub chip_duration_s: f64,
    pub levels_dbm: Vec<f64>,
    pub noise_sigma_db: f64,
}

impl PowerTrace {
    pub fn len(&self) -> usize {
        self.levels_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels_dbm.is_empty()
    }

    /// Writes `time_s,level_dbm` rows, one per chip.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "level_dbm"])?;
        for (i, l) in self.levels_dbm.iter().enumerate() {
            let t = self.start_time_s + i as f64 * self.chip_duration_s;
            w.write_record([t.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn manchester_chips(bits: impl IntoIterator<Item = bool>) -> Vec<GateState> {
    use GateState::*;
    bits.into_iter()
        .flat_map(|b| if b { [Backscatter, Harvest] } else { [Harvest, Backscatter] })
        .collect()
}

/// Spreads the key's Manchester chips evenly over `window_s`.
pub fn manchester_encode(key: &PrivateKey, window_s: f64) -> Result<ChipTrace, CodecError> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(CodecError::InvalidWindow(window_s));
    }
    let chips = manchester_chips(key.bits());
    Ok(ChipTrace {
        start_time_s: 0.0,
        chip_duration_s: window_s / chips.len() as f64,
        chips,
    })
}

/// OOK in the power domain with additive Gaussian noise in dB.
pub fn modulate_with<R: Rng + ?Sized>(
    trace: &ChipTrace,
    high: PowerLevel,
    low: PowerLevel,
    noise_sigma_db: f64,
    rng: &mut R,
) -> Result<PowerTrace, CodecError> {
    if !(high.value() > low.value()) {
        return Err(CodecError::InvalidLevels {
            high: high.value(),
            low: low.value(),
        });
    }
    let noise = gaussian(noise_sigma_db);
    let levels_dbm = trace
        .chips
        .iter()
        .map(|c| {
            let nominal = match c {
                GateState::Backscatter => high.value(),
                GateState::Harvest => low.value(),
            };
            nominal + noise.as_ref().map_or(0.0, |n| n.sample(rng))
        })
        .collect();
    Ok(PowerTrace {
        start_time_s: trace.start_time_s,
        chip_duration_s: trace.chip_duration_s,
        levels_dbm,
        noise_sigma_db,
    })
}

pub fn modulate(
    trace: &ChipTrace,
    high: PowerLevel,
    low: PowerLevel,
    noise_sigma_db: f64,
    seed: u64,
) -> Result<PowerTrace, CodecError> {
    modulate_with(trace, high, low, noise_sigma_db, &mut seeded_rng(seed))
}

pub(crate) fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Manchester pair decisions with a guard margin in dB.
pub fn demodulate_bits(levels_dbm: &[f64], guard_margin_db: f64) -> Result<Vec<bool>, CodecError> {
    if !levels_dbm.len().is_multiple_of(2) {
        return Err(CodecError::OddChipCount(levels_dbm.len()));
    }
    levels_dbm
        .chunks(2)
        .enumerate()
        .map(|(pair_index, pair)| {
            let diff = pair[0] - pair[1];
            if diff.abs() < guard_margin_db || diff.is_nan() {
                Err(CodecError::Ambiguous { pair_index })
            } else {
                Ok(diff > 0.0)
            }
        })
        .collect()
}

/// Hard decisions without a guard: a tie decodes as `0`.
pub fn hard_decisions(levels_dbm: &[f64]) -> Vec<bool> {
    levels_dbm.chunks_exact(2).map(|p| p[0] - p[1] > 0.0).collect()
}

pub fn demodulate(power: &PowerTrace, guard_margin_db: f64) -> Result<PrivateKey, CodecError> {
    PrivateKey::from_bits(&demodulate_bits(&power.levels_dbm, guard_margin_db)?)
}

/// Monte Carlo bit-error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerEstimate {
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub stderr: f64,
}

/// Simulates `trials` Manchester bits over random keys with the given
/// separation and per-chip noise, decoding by hard decision.
pub fn ber_estimate(delta_p_db: f64, sigma_db: f64, trials: u64, seed: u64) -> BerEstimate {
    let mut rng = seeded_rng(seed);
    let noise = gaussian(sigma_db);
    let mut errors = 0u64;
    let mut done = 0u64;
    while done < trials {
        let key = PrivateKey::random(&mut rng);
        for bit in key.bits() {
            if done == trials {
                break;
            }
            let (first, second) = if bit { (delta_p_db, 0.0) } else { (0.0, delta_p_db) };
            let mut sample = |nominal: f64| nominal + noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            let a = sample(first);
            let b = sample(second);
            if (a - b > 0.0) != bit {
                errors += 1;
            }
            done += 1;
        }
    }
    let ber = if trials == 0 { 0.0 } else { errors as f64 / trials as f64 };
    BerEstimate {
        bits: trials,
        errors,
        ber,
        stderr: if trials == 0 { 0.0 } else { (ber * (1.0 - ber) / trials as f64).sqrt() },
    }
}
