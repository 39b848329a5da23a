//! Replay attackers.
//!
//! Frame attackers decode LoRa uplinks digitally, so their copies are
//! bit-exact. The waveform replayer records the analog backscatter
//! envelope, so its copy carries its own measurement noise. None of them
//! know shared secrets or the CN's hop/envelope seed.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{
    dual_key_expected_trace, hop_next, random_envelope, verify_dual_key, verify_hopping, verify_pvk, AuthEvent,
    AuthVerdict, AuthWindow, HopBand, MonitorLevels, PublicKeyFingerprint, Strategy, VerifyConfig,
};
use crate::codec::{gaussian, manchester_encode, modulate_with, PowerTrace, PrivateKey};
use crate::lorawan_abp::AbpFrame;
use crate::rf_link::Frequency;
use crate::seeded_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("attacker {0} has nothing captured to replay")]
    EmptyBuffer(u32),
    #[error("no alternative channel available for a cross-channel replay")]
    NoAlternativeChannel,
    #[error("flood rate must be positive, got {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKind {
    /// SDR that records on the uplink frequency and replays on the same one.
    SdrSameChannel,
    /// LoRa transceiver that replays on a different valid channel.
    TransceiverCrossChannel,
    /// Records the backscattered identification and re-emits it.
    WaveformReplayer,
    /// Replays a captured frame at a fixed rate.
    DosFlooder,
}

impl AttackerKind {
    pub fn stores_waveforms(self) -> bool {
        self == AttackerKind::WaveformReplayer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedFrame {
    pub bytes: Vec<u8>,
    pub channel: Frequency,
    pub at_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedWaveform {
    pub node_id: u32,
    pub carrier: Frequency,
    pub trace: PowerTrace,
    pub at_s: f64,
}

/// Something radiated that an attacker may pick up.
#[derive(Debug, Clone, Copy)]
pub enum Observable<'a> {
    Frame { frame: &'a AbpFrame, at_s: f64 },
    /// `trace` holds the nominal (noise-free) levels at the attacker.
    Waveform { node_id: u32, carrier: Frequency, trace: &'a PowerTrace, at_s: f64 },
}

/// What an attacker puts on the air.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    Frame { frame: AbpFrame, at_s: f64 },
    Waveform { node_id: u32, carrier: Frequency, trace: PowerTrace, at_s: f64 },
}

impl Injection {
    pub fn at_s(&self) -> f64 {
        match self {
            Injection::Frame { at_s, .. } | Injection::Waveform { at_s, .. } => *at_s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Attacker {
    pub id: u32,
    pub kind: AttackerKind,
    /// Uplink frequency monitored by frame attackers.
    pub listen_channel: Option<Frequency>,
    /// Node whose identification a waveform replayer records.
    pub target_node: Option<u32>,
    pub capture_sigma_db: f64,
    pub frames: Vec<CapturedFrame>,
    pub waveforms: Vec<CapturedWaveform>,
}

impl Attacker {
    pub fn new(id: u32, kind: AttackerKind) -> Self {
        Attacker {
            id,
            kind,
            listen_channel: None,
            target_node: None,
            capture_sigma_db: 0.0,
            frames: Vec::new(),
            waveforms: Vec::new(),
        }
    }

    pub fn listening_on(mut self, channel: Frequency) -> Self {
        self.listen_channel = Some(channel);
        self
    }

    pub fn targeting(mut self, node_id: u32, capture_sigma_db: f64) -> Self {
        self.target_node = Some(node_id);
        self.capture_sigma_db = capture_sigma_db;
        self
    }

    /// Records the observable if this attacker is positioned to hear it.
    /// Returns whether anything was stored.
    pub fn capture<R: Rng + ?Sized>(&mut self, observable: Observable<'_>, rng: &mut R) -> bool {
        match observable {
            Observable::Frame { frame, at_s } => {
                if self.kind.stores_waveforms() {
                    return false;
                }
                let on_channel = self
                    .listen_channel
                    .is_some_and(|c| (c.as_hz() - frame.channel.as_hz()).abs() < 1.0);
                if on_channel {
                    self.frames.push(CapturedFrame {
                        bytes: frame.to_bytes(),
                        channel: frame.channel,
                        at_s,
                    });
                }
                on_channel
            }
            Observable::Waveform { node_id, carrier, trace, at_s } => {
                if !self.kind.stores_waveforms() || self.target_node.is_some_and(|t| t != node_id) {
                    return false;
                }
                let noise = gaussian(self.capture_sigma_db);
                let levels_dbm = trace
                    .levels_dbm
                    .iter()
                    .map(|l| l + noise.as_ref().map_or(0.0, |n| n.sample(rng)))
                    .collect();
                self.waveforms.push(CapturedWaveform {
                    node_id,
                    carrier,
                    trace: PowerTrace {
                        levels_dbm,
                        noise_sigma_db: self.capture_sigma_db,
                        ..trace.clone()
                    },
                    at_s,
                });
                true
            }
        }
    }

    fn latest_frame(&self) -> Result<(AbpFrame, Frequency), AdversaryError> {
        let c = self.frames.last().ok_or(AdversaryError::EmptyBuffer(self.id))?;
        let frame = AbpFrame::from_bytes(&c.bytes, c.channel).expect("captured bytes are well formed");
        Ok((frame, c.channel))
    }

    /// Re-emits the most recent capture at `at_s`. `channels` is the
    /// uplink channel set, needed for cross-channel replays.
    pub fn replay(&self, at_s: f64, channels: &[Frequency]) -> Result<Injection, AdversaryError> {
        match self.kind {
            AttackerKind::SdrSameChannel | AttackerKind::DosFlooder => {
                let (frame, _) = self.latest_frame()?;
                Ok(Injection::Frame { frame, at_s })
            }
            AttackerKind::TransceiverCrossChannel => {
                let (frame, captured_on) = self.latest_frame()?;
                let pos = channels
                    .iter()
                    .position(|c| (c.as_hz() - captured_on.as_hz()).abs() < 1.0)
                    .unwrap_or(0);
                let other = (1..channels.len())
                    .map(|k| channels[(pos + k) % channels.len()])
                    .find(|c| (c.as_hz() - captured_on.as_hz()).abs() >= 1.0)
                    .ok_or(AdversaryError::NoAlternativeChannel)?;
                Ok(Injection::Frame {
                    frame: frame.on_channel(other),
                    at_s,
                })
            }
            AttackerKind::WaveformReplayer => {
                let w = self.waveforms.last().ok_or(AdversaryError::EmptyBuffer(self.id))?;
                Ok(Injection::Waveform {
                    node_id: w.node_id,
                    carrier: w.carrier,
                    trace: PowerTrace {
                        start_time_s: at_s,
                        ..w.trace.clone()
                    },
                    at_s,
                })
            }
        }
    }

    /// `rate * duration` replays spaced `1 / rate` apart from `start_s`.
    pub fn dos_flood(
        &self,
        rate_per_s: f64,
        duration_s: f64,
        start_s: f64,
        channels: &[Frequency],
    ) -> Result<Vec<Injection>, AdversaryError> {
        if !(rate_per_s > 0.0) {
            return Err(AdversaryError::InvalidRate(rate_per_s));
        }
        let n = (rate_per_s * duration_s.max(0.0)).round() as usize;
        (0..n)
            .map(|k| self.replay(start_s + k as f64 / rate_per_s, channels))
            .collect()
    }
}

/// Outcome counts of a replay campaign.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ReplayStats {
    pub attempts: u64,
    pub accepted: u64,
    pub frequency_mismatch: u64,
    pub key_mismatch: u64,
    pub other: u64,
}

impl ReplayStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    fn tally(&mut self, verdict: AuthVerdict) {
        self.attempts += 1;
        match verdict {
            AuthVerdict::Accepted => self.accepted += 1,
            AuthVerdict::FrequencyMismatch => self.frequency_mismatch += 1,
            AuthVerdict::KeyMismatch => self.key_mismatch += 1,
            _ => self.other += 1,
        }
    }
}

/// Channel and noise setting of a waveform replay campaign.
#[derive(Debug, Clone, Copy)]
pub struct CampaignSetup {
    pub levels: MonitorLevels,
    pub attacker_sigma_db: f64,
    pub monitor_sigma_db: f64,
    pub verify: VerifyConfig,
    pub window_s: f64,
}

/// Epoch-by-epoch waveform replay: in epoch `e` the attacker records the
/// node's identification, in epoch `e + 1` it replays it (perfectly
/// timed) against the CN's fresh challenge.
pub fn waveform_replay_campaign(
    strategy: Strategy,
    band: &HopBand,
    epochs: u64,
    setup: &CampaignSetup,
    seed: u64,
) -> ReplayStats {
    let mut rng = seeded_rng(seed);
    let key = PrivateKey::random(&mut rng);
    let noise = gaussian(setup.monitor_sigma_db);
    let fixed = Frequency::mhz(868.0).expect("positive");
    let chips = manchester_encode(&key, setup.window_s).expect("positive window");

    let challenge = |rng: &mut crate::SimRng| -> PublicKeyFingerprint {
        let carrier = match strategy {
            Strategy::Hopping => hop_next(rng, band).expect("valid band"),
            _ => fixed,
        };
        let envelope = (strategy == Strategy::DualKey).then(|| random_envelope(rng));
        PublicKeyFingerprint::new(carrier, envelope).expect("in band")
    };
    let nominal = |pk: &PublicKeyFingerprint, start_s: f64| -> PowerTrace {
        let window = AuthWindow { start_s, duration_s: setup.window_s };
        match strategy {
            Strategy::DualKey => dual_key_expected_trace(pk, &key, window, &setup.levels).expect("aligned"),
            _ => {
                let mut rng0 = seeded_rng(0);
                modulate_with(&chips.clone().starting_at(start_s), setup.levels.high(), setup.levels.low(), 0.0, &mut rng0)
                    .expect("high above low")
            }
        }
    };

    let mut attacker = Attacker::new(0, AttackerKind::WaveformReplayer).targeting(1, setup.attacker_sigma_db);
    let mut stats = ReplayStats::default();
    let mut pk = challenge(&mut rng);
    for epoch in 0..epochs {
        let t = epoch as f64;
        let legit = nominal(&pk, t);
        attacker.capture(
            Observable::Waveform { node_id: 1, carrier: pk.carrier(), trace: &legit, at_s: t },
            &mut rng,
        );
        let next_t = t + 1.0;
        pk = challenge(&mut rng);
        let Ok(Injection::Waveform { carrier, mut trace, .. }) = attacker.replay(next_t, &[]) else {
            unreachable!("waveform replayer with a fresh capture");
        };
        if let Some(n) = &noise {
            trace.levels_dbm.iter_mut().for_each(|l| *l += n.sample(&mut rng));
        }
        let window = AuthWindow { start_s: next_t, duration_s: setup.window_s };
        let event = AuthEvent {
            node_id: 1,
            strategy,
            expected_key: key,
            fingerprint: pk.clone(),
            window,
        };
        let result = match strategy {
            Strategy::Pvk => verify_pvk(&trace, &key, window, &setup.verify),
            Strategy::Hopping => verify_hopping(carrier, &trace, &event, &setup.verify),
            Strategy::DualKey => {
                let template = nominal(&pk, next_t);
                verify_dual_key(&trace, &template, setup.verify.correlation_threshold)
            }
        };
        stats.tally(result.verdict);
    }
    stats
}
