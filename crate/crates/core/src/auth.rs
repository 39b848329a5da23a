//! Monitor-side authentication of backscatter identifications.
//!
//! Three strategies share one pipeline:
//!
//! - `Pvk`: the node reflects a Manchester-coded private key; the monitor
//!   decodes it and compares bytes.
//! - `Hopping`: as `Pvk`, but the CN draws a fresh carrier per event and
//!   the response must come back on it.
//! - `DualKey`: the CN imprints an on/off envelope (public key) on the
//!   power wave; the observed return is the chip-wise product of envelope
//!   and reflection and is checked by correlation against a template.
//!
//! A successful verification is recorded in an [`AuthLedger`], which gates
//! the node's next data uplink.

use std::collections::BTreeMap;
use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, manchester_chips, ChipTrace, PowerTrace, PrivateKey, KEY_LEN};
use crate::rectifier::GateState;
use crate::rf_link::{Frequency, PowerLevel};

pub const ISM_LOW_HZ: f64 = 863e6;
pub const ISM_HIGH_HZ: f64 = 870e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuthError {
    #[error("carrier {0} Hz outside the 863-870 MHz band")]
    CarrierOutOfBand(f64),
    #[error("fingerprint carries no envelope pattern")]
    MissingEnvelope,
    #[error("chip grids of {envelope} and {reflection} chips cannot be aligned")]
    IncompatibleGrids { envelope: usize, reflection: usize },
    #[error("hop grid of {grid_hz} Hz yields no channel in [{low_hz}, {high_hz}] Hz")]
    EmptyHopGrid { low_hz: f64, high_hz: f64, grid_hz: f64 },
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Pvk,
    Hopping,
    DualKey,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Pvk => "pvk",
            Strategy::Hopping => "hopping",
            Strategy::DualKey => "dual_key",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthVerdict {
    Accepted,
    KeyMismatch,
    FrequencyMismatch,
    TimingViolation,
    CollisionDetected,
    DecodeFailure,
}

impl fmt::Display for AuthVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthResult {
    pub verdict: AuthVerdict,
    /// Bit agreement for key strategies, correlation for dual-key.
    pub correlation_score: f64,
}

impl AuthResult {
    pub fn new(verdict: AuthVerdict, correlation_score: f64) -> Self {
        AuthResult { verdict, correlation_score }
    }

    pub fn is_accepted(&self) -> bool {
        self.verdict == AuthVerdict::Accepted
    }
}

/// Physical-layer public key: properties of the power wave itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicKeyFingerprint {
    carrier: Frequency,
    pub envelope_pattern: Option<Vec<GateState>>,
    pub psd_label: String,
}

impl PublicKeyFingerprint {
    pub fn new(carrier: Frequency, envelope_pattern: Option<Vec<GateState>>) -> Result<Self, AuthError> {
        let hz = carrier.as_hz();
        if !(ISM_LOW_HZ..=ISM_HIGH_HZ).contains(&hz) {
            return Err(AuthError::CarrierOutOfBand(hz));
        }
        Ok(PublicKeyFingerprint {
            carrier,
            envelope_pattern,
            psd_label: "cw".to_string(),
        })
    }

    pub fn carrier(&self) -> Frequency {
        self.carrier
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthWindow {
    pub start_s: f64,
    pub duration_s: f64,
}

impl AuthWindow {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn overlaps(&self, other: &AuthWindow) -> bool {
        self.start_s < other.end_s() && other.start_s < self.end_s()
    }
}

/// What the monitor expects from one identification.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthEvent {
    pub node_id: u32,
    pub strategy: Strategy,
    pub expected_key: PrivateKey,
    pub fingerprint: PublicKeyFingerprint,
    pub window: AuthWindow,
}

/// Monitor decision parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub guard_margin_db: f64,
    pub window_tolerance_s: f64,
    pub frequency_tolerance_hz: f64,
    pub correlation_threshold: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            guard_margin_db: codec::DEFAULT_GUARD_MARGIN_DB,
            window_tolerance_s: 1e-3,
            frequency_tolerance_hz: 1e3,
            correlation_threshold: 0.9,
        }
    }
}

/// One AES-128 block over `node_id || counter || 0..0` (big endian).
pub fn derive_pvk(shared_secret: &[u8; KEY_LEN], node_id: u32, counter: u32) -> PrivateKey {
    let mut block = [0u8; 16];
    block[..4].copy_from_slice(&node_id.to_be_bytes());
    block[4..8].copy_from_slice(&counter.to_be_bytes());
    PrivateKey(aes128_encrypt_block(shared_secret, &block))
}

pub(crate) fn aes128_encrypt_block(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut b = GenericArray::clone_from_slice(block);
    cipher.encrypt_block(&mut b);
    b.into()
}

fn key_agreement(a: &PrivateKey, b: &PrivateKey) -> f64 {
    let same: u32 = a.0.iter().zip(b.0.iter()).map(|(x, y)| (!(x ^ y)).count_ones()).sum();
    same as f64 / (KEY_LEN * 8) as f64
}

/// Decode then compare bytes, after checking the trace starts inside the
/// expected window.
pub fn verify_pvk(observed: &PowerTrace, expected: &PrivateKey, window: AuthWindow, cfg: &VerifyConfig) -> AuthResult {
    if (observed.start_time_s - window.start_s).abs() > cfg.window_tolerance_s {
        return AuthResult::new(AuthVerdict::TimingViolation, 0.0);
    }
    match codec::demodulate(observed, cfg.guard_margin_db) {
        Err(_) => AuthResult::new(AuthVerdict::DecodeFailure, 0.0),
        Ok(k) if k == *expected => AuthResult::new(AuthVerdict::Accepted, 1.0),
        Ok(k) => AuthResult::new(AuthVerdict::KeyMismatch, key_agreement(&k, expected)),
    }
}

/// Band split into `grid_hz` wide channels; channel centres are the hop
/// frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopBand {
    pub low_hz: f64,
    pub high_hz: f64,
    pub grid_hz: f64,
}

impl Default for HopBand {
    fn default() -> Self {
        HopBand {
            low_hz: ISM_LOW_HZ,
            high_hz: ISM_HIGH_HZ,
            grid_hz: 875e3,
        }
    }
}

impl HopBand {
    pub fn channel_count(&self) -> usize {
        if !(self.grid_hz > 0.0) || self.high_hz <= self.low_hz {
            return 0;
        }
        ((self.high_hz - self.low_hz) / self.grid_hz + 1e-9).floor() as usize
    }

    pub fn channels(&self) -> Result<Vec<Frequency>, AuthError> {
        let k = self.channel_count();
        if k == 0 {
            return Err(AuthError::EmptyHopGrid {
                low_hz: self.low_hz,
                high_hz: self.high_hz,
                grid_hz: self.grid_hz,
            });
        }
        (0..k)
            .map(|i| {
                Frequency::hz(self.low_hz + (i as f64 + 0.5) * self.grid_hz)
                    .map_err(|_| AuthError::CarrierOutOfBand(self.low_hz))
            })
            .collect()
    }
}

/// Uniform draw among the band's channel centres.
pub fn hop_next<R: Rng + ?Sized>(rng: &mut R, band: &HopBand) -> Result<Frequency, AuthError> {
    let channels = band.channels()?;
    Ok(channels[rng.random_range(0..channels.len())])
}

pub fn verify_hopping(
    observed_carrier: Frequency,
    observed: &PowerTrace,
    expected: &AuthEvent,
    cfg: &VerifyConfig,
) -> AuthResult {
    if (observed_carrier.as_hz() - expected.fingerprint.carrier.as_hz()).abs() > cfg.frequency_tolerance_hz {
        return AuthResult::new(AuthVerdict::FrequencyMismatch, 0.0);
    }
    verify_pvk(observed, &expected.expected_key, expected.window, cfg)
}

/// Monitor-side view of one chip when the power wave is enveloped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualChip {
    /// Power wave off: only the environment floor remains.
    Off,
    /// Power wave on, node absorbing.
    On(GateState),
}

/// Chip-wise product of envelope and reflection on the common grid.
pub fn combine_chips(envelope: &[GateState], reflection: &[GateState]) -> Result<Vec<DualChip>, AuthError> {
    let (m, n) = (envelope.len(), reflection.len());
    let common = m.max(n);
    if m == 0 || n == 0 || common % m != 0 || common % n != 0 {
        return Err(AuthError::IncompatibleGrids {
            envelope: m,
            reflection: n,
        });
    }
    Ok((0..common)
        .map(|i| match envelope[i / (common / m)] {
            GateState::Harvest => DualChip::Off,
            GateState::Backscatter => DualChip::On(reflection[i / (common / n)]),
        })
        .collect())
}

/// Nominal monitor levels used to synthesise templates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorLevels {
    pub leak: PowerLevel,
    /// Backscatter return with the gate high.
    pub return_high: PowerLevel,
    /// Residual return with the gate low.
    pub return_low: PowerLevel,
    pub floor: PowerLevel,
}

impl MonitorLevels {
    pub fn level(&self, chip: DualChip) -> PowerLevel {
        let mw = self.floor.to_mw()
            + match chip {
                DualChip::Off => 0.0,
                DualChip::On(GateState::Backscatter) => self.leak.to_mw() + self.return_high.to_mw(),
                DualChip::On(GateState::Harvest) => self.leak.to_mw() + self.return_low.to_mw(),
            };
        PowerLevel::from_mw(mw)
    }

    /// Observed high/low pair for a plain (un-enveloped) identification.
    pub fn high(&self) -> PowerLevel {
        self.level(DualChip::On(GateState::Backscatter))
    }

    pub fn low(&self) -> PowerLevel {
        self.level(DualChip::On(GateState::Harvest))
    }
}

pub fn dual_key_expected_trace(
    pk: &PublicKeyFingerprint,
    pvk: &PrivateKey,
    window: AuthWindow,
    levels: &MonitorLevels,
) -> Result<PowerTrace, AuthError> {
    let envelope = pk.envelope_pattern.as_ref().ok_or(AuthError::MissingEnvelope)?;
    let reflection = manchester_chips(pvk.bits());
    let chips = combine_chips(envelope, &reflection)?;
    Ok(PowerTrace {
        start_time_s: window.start_s,
        chip_duration_s: window.duration_s / chips.len() as f64,
        levels_dbm: chips.iter().map(|c| levels.level(*c).value()).collect(),
        noise_sigma_db: 0.0,
    })
}

/// Pearson correlation of the two dB sequences. `None` when either side
/// has no variance.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn verify_dual_key(observed: &PowerTrace, template: &PowerTrace, threshold: f64) -> AuthResult {
    if observed.len() != template.len() {
        return AuthResult::new(AuthVerdict::DecodeFailure, 0.0);
    }
    let t = &template.levels_dbm;
    if normalized_correlation(t, t).is_none() {
        return AuthResult::new(AuthVerdict::DecodeFailure, 0.0);
    }
    let score = normalized_correlation(&observed.levels_dbm, t).unwrap_or(0.0);
    let verdict = if score >= threshold {
        AuthVerdict::Accepted
    } else {
        AuthVerdict::KeyMismatch
    };
    AuthResult::new(verdict, score)
}

/// Chip trace of a public-key envelope: the Manchester chips of a random
/// 128-bit key, so the wave is on for exactly half the window.
pub fn random_envelope<R: Rng + ?Sized>(rng: &mut R) -> Vec<GateState> {
    manchester_chips(PrivateKey::random(rng).bits())
}

/// Envelope chips stretched over a window, for inspection and export.
pub fn envelope_trace(pattern: &[GateState], window: AuthWindow) -> ChipTrace {
    ChipTrace {
        start_time_s: window.start_s,
        chip_duration_s: window.duration_s / pattern.len().max(1) as f64,
        chips: pattern.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub result: AuthResult,
    pub at_s: f64,
    pub expires_s: f64,
    pub consumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Accept,
    RejectNoAuth,
    RejectFailedAuth,
    RejectExpired,
    RejectConsumed,
}

impl GateDecision {
    pub fn is_accept(self) -> bool {
        self == GateDecision::Accept
    }
}

/// Latest identification outcome per node.
///
/// An accepted identification authorises exactly one uplink before it
/// expires.
#[derive(Debug, Clone, Default)]
pub struct AuthLedger {
    entries: BTreeMap<u32, LedgerEntry>,
}

impl AuthLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, node_id: u32, result: AuthResult, at_s: f64, validity_s: f64) {
        self.entries.insert(
            node_id,
            LedgerEntry {
                result,
                at_s,
                expires_s: at_s + validity_s,
                consumed: false,
            },
        );
    }

    pub fn latest(&self, node_id: u32) -> Option<&LedgerEntry> {
        self.entries.get(&node_id)
    }

    /// Decides whether an uplink claiming `frame_source` may pass, and
    /// consumes the authorisation when it does.
    pub fn gate_uplink(&mut self, frame_source: u32, now_s: f64) -> GateDecision {
        let Some(e) = self.entries.get_mut(&frame_source) else {
            return GateDecision::RejectNoAuth;
        };
        if !e.result.is_accepted() {
            GateDecision::RejectFailedAuth
        } else if now_s > e.expires_s {
            GateDecision::RejectExpired
        } else if e.consumed {
            GateDecision::RejectConsumed
        } else {
            e.consumed = true;
            GateDecision::Accept
        }
    }
}
