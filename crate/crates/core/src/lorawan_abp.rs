//! Minimal LoRaWAN ABP data plane: static session keys, a cleartext
//! 16-bit frame counter, an encrypted payload and a truncated integrity
//! tag. Just enough protocol to show why a permissive network server
//! accepts replays.
//!
//! Canonical byte layout (all integers big endian):
//!
//! ```text
//! | dev_addr u32 | fcnt u16 | port u8 | len u8 | ciphertext[len] | tag[4] |
//! ```
//!
//! The carrier frequency is radio metadata and is not part of the bytes.

use std::collections::BTreeMap;

use aes::Aes128;
use cmac::{Cmac, Mac};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::aes128_encrypt_block;
use crate::rf_link::Frequency;

pub const TAG_LEN: usize = 4;
const HEADER_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbpError {
    #[error("channel {0} Hz is not in the configured channel set")]
    ChannelNotAllowed(f64),
    #[error("payload of {0} bytes exceeds 255")]
    PayloadTooLong(usize),
    #[error("truncated frame: {0} bytes")]
    Truncated(usize),
}

/// Static ABP session of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbpSession {
    pub device_address: u32,
    pub network_key: [u8; 16],
    pub application_key: [u8; 16],
    pub uplink_counter: u32,
}

impl AbpSession {
    pub fn new(device_address: u32, network_key: [u8; 16], application_key: [u8; 16]) -> Self {
        AbpSession {
            device_address,
            network_key,
            application_key,
            uplink_counter: 0,
        }
    }

    pub fn keys(&self) -> SessionKeys {
        SessionKeys {
            network_key: self.network_key,
            application_key: self.application_key,
        }
    }
}

/// What the network server knows about a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionKeys {
    pub network_key: [u8; 16],
    pub application_key: [u8; 16],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbpFrame {
    pub device_address: u32,
    pub frame_counter: u16,
    pub port: u8,
    pub ciphertext: Vec<u8>,
    pub integrity_tag: [u8; TAG_LEN],
    pub channel: Frequency,
}

impl AbpFrame {
    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(&self.device_address.to_be_bytes());
        h[4..6].copy_from_slice(&self.frame_counter.to_be_bytes());
        h[6] = self.port;
        h[7] = self.ciphertext.len() as u8;
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.header());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.integrity_tag);
        out
    }

    pub fn from_bytes(bytes: &[u8], channel: Frequency) -> Result<Self, AbpError> {
        if bytes.len() < HEADER_LEN + TAG_LEN {
            return Err(AbpError::Truncated(bytes.len()));
        }
        let len = bytes[7] as usize;
        if bytes.len() != HEADER_LEN + len + TAG_LEN {
            return Err(AbpError::Truncated(bytes.len()));
        }
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&bytes[HEADER_LEN + len..]);
        Ok(AbpFrame {
            device_address: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
            frame_counter: u16::from_be_bytes([bytes[4], bytes[5]]),
            port: bytes[6],
            ciphertext: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
            integrity_tag: tag,
            channel,
        })
    }

    /// Same frame re-emitted on another carrier.
    pub fn on_channel(&self, channel: Frequency) -> Self {
        AbpFrame {
            channel,
            ..self.clone()
        }
    }
}

fn keystream_xor(app_key: &[u8; 16], device_address: u32, frame_counter: u16, data: &[u8]) -> Vec<u8> {
    data.chunks(16)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let mut block = [0u8; 16];
            block[0] = 0x01;
            block[1..5].copy_from_slice(&device_address.to_be_bytes());
            block[5..7].copy_from_slice(&frame_counter.to_be_bytes());
            block[15] = i as u8 + 1;
            let ks = aes128_encrypt_block(app_key, &block);
            chunk.iter().zip(ks).map(|(d, k)| d ^ k).collect::<Vec<_>>()
        })
        .collect()
}

fn integrity_tag(network_key: &[u8; 16], header: &[u8], ciphertext: &[u8]) -> [u8; TAG_LEN] {
    let mut mac = <Cmac<Aes128> as Mac>::new_from_slice(network_key).expect("16-byte key");
    mac.update(header);
    mac.update(ciphertext);
    let full = mac.finalize().into_bytes();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&full[..TAG_LEN]);
    tag
}

/// Encrypts and tags `payload`, then advances the session counter.
pub fn build_frame(
    session: &mut AbpSession,
    port: u8,
    payload: &[u8],
    channel: Frequency,
    channels: &[Frequency],
) -> Result<AbpFrame, AbpError> {
    if !channels.iter().any(|c| (c.as_hz() - channel.as_hz()).abs() < 1.0) {
        return Err(AbpError::ChannelNotAllowed(channel.as_hz()));
    }
    if payload.len() > u8::MAX as usize {
        return Err(AbpError::PayloadTooLong(payload.len()));
    }
    let frame_counter = session.uplink_counter as u16;
    let ciphertext = keystream_xor(&session.application_key, session.device_address, frame_counter, payload);
    let mut frame = AbpFrame {
        device_address: session.device_address,
        frame_counter,
        port,
        ciphertext,
        integrity_tag: [0; TAG_LEN],
        channel,
    };
    frame.integrity_tag = integrity_tag(&session.network_key, &frame.header(), &frame.ciphertext);
    session.uplink_counter = session.uplink_counter.wrapping_add(1);
    Ok(frame)
}

pub fn decrypt_payload(frame: &AbpFrame, app_key: &[u8; 16]) -> Vec<u8> {
    keystream_xor(app_key, frame.device_address, frame.frame_counter, &frame.ciphertext)
}

pub fn integrity_valid(frame: &AbpFrame, keys: &SessionKeys) -> bool {
    integrity_tag(&keys.network_key, &frame.header(), &frame.ciphertext) == frame.integrity_tag
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Eu868,
}

/// Default uplink channels of the region.
pub fn channel_set(region: Region) -> Vec<Frequency> {
    match region {
        Region::Eu868 => [868.1, 868.3, 868.5]
            .iter()
            .map(|m| Frequency::mhz(*m).expect("positive"))
            .collect(),
    }
}

pub fn in_channel_set(channel: Frequency, channels: &[Frequency]) -> bool {
    channels.iter().any(|c| (c.as_hz() - channel.as_hz()).abs() < 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Accepts any integrity-valid frame and only logs duplicates.
    Permissive,
    /// Requires a strictly increasing frame counter per device. A wrapped
    /// 16-bit counter is rejected until the device history is reset.
    StrictCounter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayPolicy {
    pub mode: PolicyMode,
    #[serde(default = "default_duplicate_window")]
    pub duplicate_window_s: f64,
}

fn default_duplicate_window() -> f64 {
    3600.0
}

impl Default for GatewayPolicy {
    fn default() -> Self {
        GatewayPolicy {
            mode: PolicyMode::Permissive,
            duplicate_window_s: default_duplicate_window(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameVerdict {
    Accepted,
    AcceptedDuplicate,
    RejectedCounter,
    RejectedIntegrity,
}

impl FrameVerdict {
    pub fn is_accepted(self) -> bool {
        matches!(self, FrameVerdict::Accepted | FrameVerdict::AcceptedDuplicate)
    }
}

/// Network-server memory: last counter per device and when each exact
/// frame was last seen.
#[derive(Debug, Clone, Default)]
pub struct GatewayHistory {
    last_counter: BTreeMap<u32, u16>,
    seen: BTreeMap<Vec<u8>, f64>,
}

impl GatewayHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset_device(&mut self, device_address: u32) {
        self.last_counter.remove(&device_address);
    }

    pub fn last_counter(&self, device_address: u32) -> Option<u16> {
        self.last_counter.get(&device_address).copied()
    }
}

pub fn gateway_validate(
    frame: &AbpFrame,
    known_sessions: &BTreeMap<u32, SessionKeys>,
    policy: &GatewayPolicy,
    history: &mut GatewayHistory,
    now_s: f64,
) -> FrameVerdict {
    let Some(keys) = known_sessions.get(&frame.device_address) else {
        return FrameVerdict::RejectedIntegrity;
    };
    if !integrity_valid(frame, keys) {
        return FrameVerdict::RejectedIntegrity;
    }
    let bytes = frame.to_bytes();
    let last = history.last_counter.get(&frame.device_address).copied();
    let verdict = match policy.mode {
        PolicyMode::StrictCounter => {
            if last.is_some_and(|l| frame.frame_counter <= l) {
                return FrameVerdict::RejectedCounter;
            }
            FrameVerdict::Accepted
        }
        PolicyMode::Permissive => match history.seen.get(&bytes) {
            Some(&t) if now_s - t <= policy.duplicate_window_s => FrameVerdict::AcceptedDuplicate,
            _ => FrameVerdict::Accepted,
        },
    };
    let newest = last.map_or(frame.frame_counter, |l| l.max(frame.frame_counter));
    history.last_counter.insert(frame.device_address, newest);
    history.seen.insert(bytes, now_s);
    verdict
}
